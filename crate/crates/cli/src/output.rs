//! Deterministic report writers. Every file is rendered fully in memory
//! and written in one call, and float formatting is a pure function of the
//! value, so identical runs produce byte-identical outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use roadrisk_core::ingest::TemporalHeatmap;
use roadrisk_core::netkde::{Lixel, RoadNetwork};

use crate::CliError;

/// Format a float with 12 significant digits: plain decimal notation,
/// trailing zeros trimmed, scientific notation only for extreme
/// magnitudes.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-19..=19).contains(&mag) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - mag).clamp(0, 32) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// `density.csv`: one row per lixel in (edge id, lixel index) order.
pub fn density_csv(lixels: &[Lixel], densities: &[f64], network: &RoadNetwork) -> String {
    let mut out = String::from("lixel_id,edge_id,offset_start,offset_end,density\n");
    for (lixel, density) in lixels.iter().zip(densities) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            lixel.id(network),
            network.edge(lixel.edge).id,
            fmt_sig(lixel.offset_start),
            fmt_sig(lixel.offset_end),
            fmt_sig(*density)
        );
    }
    out
}

/// `segments.csv`: ranked top lixels.
pub fn segments_csv(
    ranked: &[usize],
    lixels: &[Lixel],
    densities: &[f64],
    network: &RoadNetwork,
) -> String {
    let mut out = String::from("rank,lixel_id,edge_id,offset_start,offset_end,density\n");
    for (rank, &idx) in ranked.iter().enumerate() {
        let lixel = &lixels[idx];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            rank + 1,
            lixel.id(network),
            network.edge(lixel.edge).id,
            fmt_sig(lixel.offset_start),
            fmt_sig(lixel.offset_end),
            fmt_sig(densities[idx])
        );
    }
    out
}

/// GeoJSON FeatureCollection with one LineString per lixel.
pub fn lixel_geojson(lixels: &[Lixel], densities: &[f64], network: &RoadNetwork) -> String {
    let mut features = Vec::with_capacity(lixels.len());
    for (lixel, density) in lixels.iter().zip(densities) {
        let coords = network.sub_polyline(lixel.edge, lixel.offset_start, lixel.offset_end);
        let coord_text: Vec<String> = coords
            .iter()
            .map(|p| format!("[{},{}]", fmt_sig(p[0]), fmt_sig(p[1])))
            .collect();
        features.push(format!(
            "{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"LineString\",\"coordinates\":[{}]}},\
             \"properties\":{{\"lixel_id\":\"{}\",\"edge_id\":\"{}\",\"density\":{}}}}}",
            coord_text.join(","),
            lixel.id(network),
            network.edge(lixel.edge).id,
            fmt_sig(*density)
        ));
    }
    format!(
        "{{\"type\":\"FeatureCollection\",\"features\":[{}]}}\n",
        features.join(",")
    )
}

/// SVG rendering of the weekly heatmap: 7 day rows by time-bin columns,
/// shaded white to dark red by cell SWI.
pub fn heatmap_svg(heatmap: &TemporalHeatmap) -> String {
    const CELL: u32 = 36;
    const LEFT: u32 = 48;
    const TOP: u32 = 30;
    let days = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
    let n_bins = heatmap.n_bins() as u32;
    let width = LEFT + n_bins * CELL + 10;
    let height = TOP + 7 * CELL + 10;
    let max = heatmap.max().max(1);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{LEFT}\" y=\"14\">SWI by day of week and time bin ({}h bins)</text>",
        heatmap.bin_width_hours
    );
    for (d, day) in days.iter().enumerate() {
        let y = TOP + d as u32 * CELL;
        let _ = writeln!(
            svg,
            "  <text x=\"6\" y=\"{}\">{day}</text>",
            y + CELL / 2 + 4
        );
        for b in 0..n_bins {
            let value = heatmap.cells[d][b as usize];
            // White at zero to #b2182b at the maximum.
            let t = value as f64 / max as f64;
            let r = (255.0 + t * (178.0 - 255.0)).round() as u8;
            let g = (255.0 + t * (24.0 - 255.0)).round() as u8;
            let bl = (255.0 + t * (43.0 - 255.0)).round() as u8;
            let x = LEFT + b * CELL;
            let _ = writeln!(
                svg,
                "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"#{r:02x}{g:02x}{bl:02x}\" stroke=\"#cccccc\"><title>{day} bin {b}: \
                 {value}</title></rect>"
            );
        }
    }
    for b in 0..n_bins {
        let hour = b * heatmap.bin_width_hours;
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\">{hour:02}</text>",
            LEFT + b * CELL + 2,
            TOP - 4
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Written file paths, for run summaries.
#[derive(Debug, Default)]
pub struct WrittenFiles(pub Vec<PathBuf>);

impl WrittenFiles {
    pub fn add(&mut self, path: PathBuf) {
        self.0.push(path);
    }
}
