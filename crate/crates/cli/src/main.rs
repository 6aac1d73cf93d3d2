use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roadrisk::manifest::{Overrides, RunManifest};
use roadrisk::{cmd_geodetect, cmd_kde, cmd_moran, cmd_report, cmd_tensor, CliError};

/// Road-safety spatiotemporal analysis pipeline.
#[derive(Parser)]
#[command(name = "roadrisk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Network kernel density estimation over snapped crash events.
    Kde(RunArgs),
    /// Global Moran's I and LISA clusters over zone SWI.
    Moran(RunArgs),
    /// Factor and interaction detectors over POI stratifications.
    Geodetect(RunArgs),
    /// Nonnegative Tucker decomposition of the region x age x hour tensor.
    Tensor(RunArgs),
    /// Dataset totals, weekly heatmap and SVG rendering.
    Report(RunArgs),
}

/// Shared manifest + override flags. Flags win over manifest values.
#[derive(Args)]
struct RunArgs {
    /// Run manifest (TOML).
    #[arg(long, short)]
    manifest: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for stochastic steps.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    lixel_unit: Option<f64>,
    #[arg(long)]
    snap_tolerance: Option<f64>,
    #[arg(long)]
    truncation_multiple: Option<f64>,
    #[arg(long)]
    permutations: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    jenks_k: Option<usize>,
    #[arg(long)]
    day_class: Option<String>,
    #[arg(long)]
    heatmap_bin_hours: Option<u32>,
    /// Core size as `spatial,age,time`.
    #[arg(long, value_delimiter = ',')]
    core_size: Option<Vec<usize>>,
    /// Spatial-rank sweep candidates, comma separated.
    #[arg(long, value_delimiter = ',')]
    sweep_candidates: Option<Vec<usize>>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Emit a GeoJSON line layer alongside density.csv.
    #[arg(long)]
    geojson: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunManifest, CliError> {
        let overrides = Overrides {
            out_dir: self.out.clone(),
            seed: self.seed,
            bandwidth: self.bandwidth,
            lixel_unit: self.lixel_unit,
            snap_tolerance: self.snap_tolerance,
            truncation_multiple: self.truncation_multiple,
            permutations: self.permutations,
            alpha: self.alpha,
            jenks_k: self.jenks_k,
            day_class: self.day_class.clone(),
            heatmap_bin_hours: self.heatmap_bin_hours,
            core_size: self.core_size.clone(),
            sweep_candidates: self.sweep_candidates.clone(),
            top_k: self.top_k,
            geojson: if self.geojson { Some(true) } else { None },
        };
        RunManifest::load(&self.manifest, &overrides)
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Kde(args) => {
            let m = args.load()?;
            let summary = cmd_kde(&m)?;
            eprintln!(
                "kde: {} lixels, {} events used, {} excluded beyond snap tolerance",
                summary.lixels, summary.events_used, summary.events_excluded
            );
            for f in &summary.written {
                eprintln!("  wrote {}", f.display());
            }
        }
        Command::Moran(args) => {
            let m = args.load()?;
            let summary = cmd_moran(&m)?;
            eprintln!(
                "moran: I = {:.6}, p = {:.6}, {} zones ({} isolates), {} crashes unassigned",
                summary.i, summary.p, summary.zones, summary.isolates, summary.unassigned_crashes
            );
            for f in &summary.written {
                eprintln!("  wrote {}", f.display());
            }
        }
        Command::Geodetect(args) => {
            let m = args.load()?;
            let summary = cmd_geodetect(&m)?;
            eprintln!(
                "geodetect: {} factors, {} interactions, {} skipped, {} POIs outside zones",
                summary.factors, summary.interactions, summary.skipped, summary.pois_outside_zones
            );
            for f in &summary.written {
                eprintln!("  wrote {}", f.display());
            }
        }
        Command::Tensor(args) => {
            let m = args.load()?;
            let summary = cmd_tensor(&m)?;
            eprintln!(
                "tensor: dims {:?}, core {:?}{}, objective {:.6e} after {} iterations{}",
                summary.dims,
                summary.core,
                if summary.swept { " (selected by sweep)" } else { "" },
                summary.objective,
                summary.iterations,
                if summary.trivial { " (all-zero input, trivial model)" } else { "" },
            );
            for f in &summary.written {
                eprintln!("  wrote {}", f.display());
            }
        }
        Command::Report(args) => {
            let m = args.load()?;
            let summary = cmd_report(&m)?;
            eprintln!(
                "report: {} crashes, total SWI {}",
                summary.crashes, summary.total_swi
            );
            for f in &summary.written {
                eprintln!("  wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
