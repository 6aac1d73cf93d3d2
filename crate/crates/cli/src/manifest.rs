//! Run manifest: one TOML file describing inputs, parameters and the
//! output directory. Command-line flags override manifest values.
//!
//! Relative paths inside the manifest resolve against the manifest's own
//! directory, so a fixture directory can be run from anywhere.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use roadrisk_core::ingest::{CrashFilter, DatasetPaths, DayClass};
use roadrisk_core::netkde::{EventWeight, KdeConfig};
use roadrisk_core::AgeGroup;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    inputs: RawInputs,
    #[serde(default)]
    params: RawParams,
    output: RawOutput,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    crashes: Option<PathBuf>,
    pois: Option<PathBuf>,
    zones: Option<PathBuf>,
    adjacency: Option<PathBuf>,
    nodes: Option<PathBuf>,
    edges: Option<PathBuf>,
    crs: Option<String>,
    #[serde(default)]
    extra_poi_categories: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    seed: Option<u64>,
    bandwidth: Option<f64>,
    lixel_unit: Option<f64>,
    snap_tolerance: Option<f64>,
    truncation_multiple: Option<f64>,
    weight_mode: Option<String>,
    top_k: Option<usize>,
    geojson: Option<bool>,
    permutations: Option<u32>,
    alpha: Option<f64>,
    jenks_k: Option<usize>,
    day_class: Option<String>,
    heatmap_bin_hours: Option<u32>,
    core_size: Option<Vec<usize>>,
    sweep_candidates: Option<Vec<usize>>,
    age_size: Option<usize>,
    time_size: Option<usize>,
    elbow_tol: Option<f64>,
    ntd_max_iter: Option<usize>,
    ntd_tol: Option<f64>,
    ntd_restarts: Option<usize>,
    top_zones: Option<usize>,
    response: Option<String>,
    response_field: Option<PathBuf>,
    response_column: Option<String>,
    compare_with: Option<PathBuf>,
    filter_day_class: Option<String>,
    filter_age_groups: Option<Vec<String>>,
    filter_hours: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

/// Response variable for the detector suite.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    /// Zone SWI totals (default).
    Swi,
    /// Raw crash counts per zone.
    Count,
    /// A named column of an external per-zone field file.
    Field { path: PathBuf, column: String },
}

/// Flag-level overrides applied on top of the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub bandwidth: Option<f64>,
    pub lixel_unit: Option<f64>,
    pub snap_tolerance: Option<f64>,
    pub truncation_multiple: Option<f64>,
    pub permutations: Option<u32>,
    pub alpha: Option<f64>,
    pub jenks_k: Option<usize>,
    pub day_class: Option<String>,
    pub heatmap_bin_hours: Option<u32>,
    pub core_size: Option<Vec<usize>>,
    pub sweep_candidates: Option<Vec<usize>>,
    pub top_k: Option<usize>,
    pub geojson: Option<bool>,
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub inputs: DatasetPaths,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub kde: KdeConfig,
    pub top_k: Option<usize>,
    pub geojson: bool,
    pub permutations: u32,
    pub alpha: f64,
    pub jenks_k: usize,
    pub day_class: DayClass,
    pub heatmap_bin_hours: u32,
    pub core_size: Option<[usize; 3]>,
    pub sweep_candidates: Option<Vec<usize>>,
    pub age_size: usize,
    pub time_size: usize,
    pub elbow_tol: f64,
    pub ntd_max_iter: usize,
    pub ntd_tol: f64,
    pub ntd_restarts: usize,
    pub top_zones: usize,
    pub response: Response,
    pub compare_with: Option<PathBuf>,
    pub filter: CrashFilter,
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunManifest {
    /// Parse a manifest file and apply flag overrides.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunManifest, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read manifest {}: {e}", path.display())))?;
        let raw: RawManifest = toml::from_str(&text)
            .map_err(|e| validation(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Self::from_raw(raw, &base, overrides)
    }

    fn from_raw(raw: RawManifest, base: &Path, ov: &Overrides) -> Result<RunManifest, CliError> {
        let p = raw.params;

        let inputs = DatasetPaths {
            crashes: raw.inputs.crashes.map(|q| resolve(base, q)),
            pois: raw.inputs.pois.map(|q| resolve(base, q)),
            zones: raw.inputs.zones.map(|q| resolve(base, q)),
            adjacency: raw.inputs.adjacency.map(|q| resolve(base, q)),
            nodes: raw.inputs.nodes.map(|q| resolve(base, q)),
            edges: raw.inputs.edges.map(|q| resolve(base, q)),
            crs: raw.inputs.crs,
            extra_poi_categories: raw.inputs.extra_poi_categories,
        };

        let bandwidth = ov.bandwidth.or(p.bandwidth).unwrap_or(200.0);
        let truncation_multiple = ov
            .truncation_multiple
            .or(p.truncation_multiple)
            .unwrap_or(3.0);
        if !(truncation_multiple.is_finite() && truncation_multiple >= 1.0) {
            return Err(validation(format!(
                "truncation_multiple must be >= 1, got {truncation_multiple}"
            )));
        }
        let weight_mode = match p.weight_mode.as_deref() {
            None | Some("unit") => EventWeight::Unit,
            Some("swi") => EventWeight::Swi,
            Some(other) => {
                return Err(validation(format!(
                    "weight_mode must be `unit` or `swi`, got `{other}`"
                )))
            }
        };
        let kde = KdeConfig {
            bandwidth,
            lixel_unit: ov.lixel_unit.or(p.lixel_unit).unwrap_or(200.0),
            snap_tolerance: ov.snap_tolerance.or(p.snap_tolerance).unwrap_or(10.0),
            truncation_radius: truncation_multiple * bandwidth,
            weight_mode,
        };
        kde.validate().map_err(|e| validation(e.to_string()))?;

        let alpha = ov.alpha.or(p.alpha).unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(validation(format!("alpha must be in (0, 1), got {alpha}")));
        }
        let permutations = ov.permutations.or(p.permutations).unwrap_or(999);
        if permutations < 99 {
            return Err(validation(format!(
                "permutations must be at least 99, got {permutations}"
            )));
        }
        let jenks_k = ov.jenks_k.or(p.jenks_k).unwrap_or(5);
        if jenks_k == 0 {
            return Err(validation("jenks_k must be at least 1"));
        }

        let day_class_token = ov.day_class.clone().or(p.day_class);
        let day_class = match day_class_token.as_deref() {
            None => DayClass::Weekday,
            Some(t) => DayClass::parse(t)
                .ok_or_else(|| validation(format!("day_class must be weekday or weekend, got `{t}`")))?,
        };

        let heatmap_bin_hours = ov.heatmap_bin_hours.or(p.heatmap_bin_hours).unwrap_or(2);
        if heatmap_bin_hours == 0 || 24 % heatmap_bin_hours != 0 {
            return Err(validation(format!(
                "heatmap_bin_hours must divide 24, got {heatmap_bin_hours}"
            )));
        }

        let core_size = match ov.core_size.clone().or(p.core_size) {
            None => None,
            Some(v) => {
                let arr: [usize; 3] = v.clone().try_into().map_err(|_| {
                    validation(format!("core_size must have exactly 3 entries, got {v:?}"))
                })?;
                if arr.contains(&0) {
                    return Err(validation("core_size entries must be positive"));
                }
                Some(arr)
            }
        };
        let sweep_candidates = ov.sweep_candidates.clone().or(p.sweep_candidates);
        if let Some(c) = &sweep_candidates {
            if c.is_empty() {
                return Err(validation("sweep_candidates must not be empty"));
            }
            if c.contains(&0) {
                return Err(validation("sweep_candidates must be positive"));
            }
        }
        let age_size = p.age_size.unwrap_or(AgeGroup::COUNT);
        let time_size = p.time_size.unwrap_or(24);
        if age_size == 0 || age_size > AgeGroup::COUNT {
            return Err(validation(format!(
                "age_size must be in 1..={}, got {age_size}",
                AgeGroup::COUNT
            )));
        }
        if time_size == 0 || time_size > 24 {
            return Err(validation(format!(
                "time_size must be in 1..=24, got {time_size}"
            )));
        }
        let elbow_tol = p.elbow_tol.unwrap_or(0.01);
        if !(elbow_tol.is_finite() && elbow_tol > 0.0) {
            return Err(validation(format!("elbow_tol must be positive, got {elbow_tol}")));
        }
        let ntd_max_iter = p.ntd_max_iter.unwrap_or(500);
        let ntd_tol = p.ntd_tol.unwrap_or(1e-6);
        let ntd_restarts = p.ntd_restarts.unwrap_or(5);
        if ntd_max_iter == 0 || ntd_restarts == 0 {
            return Err(validation("ntd_max_iter and ntd_restarts must be positive"));
        }
        if !(ntd_tol.is_finite() && ntd_tol >= 0.0) {
            return Err(validation(format!("ntd_tol must be nonnegative, got {ntd_tol}")));
        }

        let response = match p.response.as_deref() {
            None | Some("swi") => Response::Swi,
            Some("count") => Response::Count,
            Some("field") => {
                let path = p
                    .response_field
                    .clone()
                    .ok_or_else(|| validation("response = \"field\" requires response_field"))?;
                let column = p
                    .response_column
                    .clone()
                    .ok_or_else(|| validation("response = \"field\" requires response_column"))?;
                Response::Field {
                    path: resolve(base, path),
                    column,
                }
            }
            Some(other) => {
                return Err(validation(format!(
                    "response must be swi, count or field, got `{other}`"
                )))
            }
        };

        let filter_day_class = match p.filter_day_class.as_deref() {
            None => None,
            Some(t) => Some(
                DayClass::parse(t).ok_or_else(|| {
                    validation(format!("filter_day_class must be weekday or weekend, got `{t}`"))
                })?,
            ),
        };
        let filter_age_groups = match p.filter_age_groups {
            None => None,
            Some(tokens) => {
                let mut set = BTreeSet::new();
                for t in tokens {
                    let g = AgeGroup::parse(&t).ok_or_else(|| {
                        validation(format!("unknown age group `{t}` in filter_age_groups"))
                    })?;
                    set.insert(g);
                }
                Some(set)
            }
        };
        let filter_hours = match p.filter_hours {
            None => None,
            Some(v) => {
                let [lo, hi]: [u32; 2] = v.clone().try_into().map_err(|_| {
                    validation(format!("filter_hours must be [start, end], got {v:?}"))
                })?;
                if lo > hi || hi > 23 {
                    return Err(validation(format!(
                        "filter_hours range [{lo}, {hi}] invalid (0 <= start <= end <= 23)"
                    )));
                }
                Some((lo, hi))
            }
        };
        let filter = CrashFilter {
            day_class: filter_day_class,
            age_groups: filter_age_groups,
            hour_range: filter_hours,
        };

        Ok(RunManifest {
            inputs,
            out_dir: resolve(base, ov.out_dir.clone().unwrap_or(raw.output.dir)),
            seed: ov.seed.or(p.seed),
            kde,
            top_k: ov.top_k.or(p.top_k),
            geojson: ov.geojson.or(p.geojson).unwrap_or(false),
            permutations,
            alpha,
            jenks_k,
            day_class,
            heatmap_bin_hours,
            core_size,
            sweep_candidates,
            age_size,
            time_size,
            elbow_tol,
            ntd_max_iter,
            ntd_tol,
            ntd_restarts,
            top_zones: p.top_zones.unwrap_or(5),
            response,
            compare_with: p.compare_with.map(|q| resolve(base, q)),
            filter,
        })
    }

    /// The seed, or a validation error naming the command that needs it.
    pub fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            validation(format!(
                "`{command}` is stochastic and requires a seed (set params.seed or --seed)"
            ))
        })
    }
}
