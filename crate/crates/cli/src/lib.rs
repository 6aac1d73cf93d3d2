//! Pipeline commands behind the `roadrisk` binary.
//!
//! Each command loads and validates its inputs, computes everything in
//! memory, then writes its report files under the manifest's output
//! directory; a failed validation never leaves partial outputs behind.
//! Given the same manifest and seed, reruns produce byte-identical files.

pub mod manifest;
pub mod output;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use roadrisk_core::autocorr::{
    compare_clusters, lisa, permutation_test_global, LisaClass, LisaResult, SpatialWeights,
};
use roadrisk_core::geodetector::{run_detector_suite, SuiteConfig, SuiteResult};
use roadrisk_core::ingest::{
    self, aggregate_zone_swi_by_ids, assign_zones, load_dataset, temporal_heatmap, CrashRecord,
    Dataset, PoiCategory, SeverityCounts, TemporalHeatmap, ZoneField, ZoneLocator,
};
use roadrisk_core::netkde::{lixelize, net_kde, rank_segments, snap_to_network, EventWeight};
use roadrisk_core::tensor::{
    build_tensor, extract_patterns, ntd, select_core_size, NtdOptions, PatternReport,
    PeakWindows, TuckerModel,
};
use roadrisk_core::{AgeGroup, Severity};

use manifest::{Response, RunManifest};
use output::{density_csv, ensure_dir, fmt_sig, heatmap_svg, lixel_geojson, segments_csv, write_file};

/// Command failure, split by exit code: validation problems exit 2,
/// runtime problems exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ingest::LoadError> for CliError {
    fn from(e: ingest::LoadError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Load the dataset and assign zones to crashes when polygons are present.
fn load_prepared(m: &RunManifest) -> Result<Dataset, CliError> {
    let mut dataset = load_dataset(&m.inputs)?;
    if !dataset.zones.is_empty() {
        assign_zones(&mut dataset.crashes, &dataset.zones);
    }
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// kde
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct KdeSummary {
    pub lixels: usize,
    pub events_used: usize,
    pub events_excluded: usize,
    pub written: Vec<PathBuf>,
}

/// Snap crashes to the network, lixelize, estimate densities and write
/// `density.csv` (plus `segments.csv` and GeoJSON when requested).
pub fn cmd_kde(m: &RunManifest) -> Result<KdeSummary, CliError> {
    let dataset = load_dataset(&m.inputs)?;
    let network = dataset
        .network
        .as_ref()
        .ok_or_else(|| validation("kde requires nodes and edges inputs"))?;
    if m.inputs.crashes.is_none() {
        return Err(validation("kde requires a crashes input"));
    }

    // Fixed accumulation order: crashes sorted by id.
    let mut crashes: Vec<&CrashRecord> = dataset.crashes.iter().collect();
    crashes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut events = Vec::with_capacity(crashes.len());
    let mut excluded = 0usize;
    for crash in crashes {
        match snap_to_network(network, crash.x, crash.y, m.kde.snap_tolerance) {
            Some(snapped) => {
                let weight = match m.kde.weight_mode {
                    EventWeight::Unit => 1.0,
                    EventWeight::Swi => crash.swi_weight() as f64,
                };
                events.push((snapped.position, weight));
            }
            None => excluded += 1,
        }
    }

    let lixels = lixelize(network, m.kde.lixel_unit);
    let densities = net_kde(&events, &lixels, &m.kde, network).map_err(runtime)?;

    ensure_dir(&m.out_dir)?;
    let mut written = Vec::new();
    let density_path = m.out_dir.join("density.csv");
    write_file(&density_path, &density_csv(&lixels, &densities, network))?;
    written.push(density_path);
    if let Some(k) = m.top_k {
        let ranked = rank_segments(&lixels, &densities, network, k);
        let path = m.out_dir.join("segments.csv");
        write_file(&path, &segments_csv(&ranked, &lixels, &densities, network))?;
        written.push(path);
    }
    if m.geojson {
        let path = m.out_dir.join("density.geojson");
        write_file(&path, &lixel_geojson(&lixels, &densities, network))?;
        written.push(path);
    }
    Ok(KdeSummary {
        lixels: lixels.len(),
        events_used: events.len(),
        events_excluded: excluded,
        written,
    })
}

// ---------------------------------------------------------------------------
// moran
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct MoranJson {
    #[serde(rename = "I")]
    i: f64,
    n_perm: u32,
    seed: u64,
    p: f64,
}

#[derive(Debug, Serialize)]
pub struct MoranSummary {
    pub i: f64,
    pub p: f64,
    pub zones: usize,
    pub isolates: usize,
    pub unassigned_crashes: u64,
    pub written: Vec<PathBuf>,
}

fn build_weights(dataset: &Dataset, universe: &[String]) -> Result<SpatialWeights, CliError> {
    if let Some(pairs) = &dataset.adjacency {
        SpatialWeights::from_pairs(universe, pairs).map_err(|e| validation(e.to_string()))
    } else if !dataset.zones.is_empty() {
        Ok(SpatialWeights::queen_from_zones(&dataset.zones))
    } else {
        Err(validation("moran requires zones or an adjacency file"))
    }
}

/// `lisa.csv`: one row per zone in zone-universe order.
fn lisa_csv(results: &[LisaResult]) -> String {
    let mut out = String::from("zone_id,value,z,lag,local_i,p,class\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.zone_id,
            fmt_sig(r.value),
            fmt_sig(r.z),
            fmt_sig(r.lag),
            fmt_sig(r.local_i),
            fmt_sig(r.p),
            r.class.as_str()
        );
    }
    out
}

fn parse_lisa_csv(path: &std::path::Path) -> Result<Vec<LisaResult>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| validation(format!("{}: missing column `{name}`", path.display())))
    };
    let (c_zone, c_value, c_z, c_lag, c_i, c_p, c_class) = (
        col("zone_id")?,
        col("value")?,
        col("z")?,
        col("lag")?,
        col("local_i")?,
        col("p")?,
        col("class")?,
    );
    let mut results = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let num = |c: usize| -> Result<f64, CliError> {
            record
                .get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| validation(format!("{}: bad numeric field", path.display())))
        };
        let class = record
            .get(c_class)
            .and_then(LisaClass::parse)
            .ok_or_else(|| validation(format!("{}: bad class token", path.display())))?;
        results.push(LisaResult {
            zone_id: record.get(c_zone).unwrap_or_default().to_string(),
            value: num(c_value)?,
            z: num(c_z)?,
            lag: num(c_lag)?,
            local_i: num(c_i)?,
            p: num(c_p)?,
            class,
        });
    }
    Ok(results)
}

/// Aggregate zone SWI, run the global permutation test and LISA, and write
/// `moran.json` + `lisa.csv` (plus `changes.csv` when comparing against an
/// earlier run).
pub fn cmd_moran(m: &RunManifest) -> Result<MoranSummary, CliError> {
    let dataset = load_prepared(m)?;
    if m.inputs.crashes.is_none() {
        return Err(validation("moran requires a crashes input"));
    }
    let universe = dataset.zone_universe();
    if universe.is_empty() {
        return Err(validation("moran requires zones or an adjacency file"));
    }
    let weights = build_weights(&dataset, &universe)?;
    let seed = m.require_seed("moran")?;

    let aggregate = aggregate_zone_swi_by_ids(&dataset.crashes, &universe, &m.filter);
    let global =
        permutation_test_global(&aggregate.field, &weights, m.permutations, seed).map_err(runtime)?;
    let lisa_results =
        lisa(&aggregate.field, &weights, m.permutations, seed, m.alpha).map_err(runtime)?;

    let changes = match &m.compare_with {
        Some(path) => {
            let prior = parse_lisa_csv(path)?;
            Some(compare_clusters(&prior, &lisa_results).map_err(runtime)?)
        }
        None => None,
    };

    ensure_dir(&m.out_dir)?;
    let mut written = Vec::new();
    let moran_path = m.out_dir.join("moran.json");
    let json = serde_json::to_string_pretty(&MoranJson {
        i: global.i,
        n_perm: global.n_perm,
        seed: global.seed,
        p: global.p,
    })
    .map_err(runtime)?;
    write_file(&moran_path, &format!("{json}\n"))?;
    written.push(moran_path);

    let lisa_path = m.out_dir.join("lisa.csv");
    write_file(&lisa_path, &lisa_csv(&lisa_results))?;
    written.push(lisa_path);

    if let Some(changes) = changes {
        let mut out = String::from("zone_id,from,to,change\n");
        for c in &changes {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.zone_id,
                c.from.as_str(),
                c.to.as_str(),
                c.change.as_str()
            );
        }
        let path = m.out_dir.join("changes.csv");
        write_file(&path, &out)?;
        written.push(path);
    }

    Ok(MoranSummary {
        i: global.i,
        p: global.p,
        zones: universe.len(),
        isolates: weights.isolates().len(),
        unassigned_crashes: aggregate.unassigned_count,
        written,
    })
}

// ---------------------------------------------------------------------------
// geodetect
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct GeodetectSummary {
    pub factors: usize,
    pub interactions: usize,
    pub skipped: usize,
    pub pois_outside_zones: usize,
    pub written: Vec<PathBuf>,
}

fn response_field(
    m: &RunManifest,
    dataset: &Dataset,
    universe: &[String],
) -> Result<ZoneField, CliError> {
    match &m.response {
        Response::Swi => {
            Ok(aggregate_zone_swi_by_ids(&dataset.crashes, universe, &m.filter).field)
        }
        Response::Count => {
            let mut field = ZoneField::zeros(universe);
            for crash in dataset.crashes.iter().filter(|c| m.filter.matches(c)) {
                if let Some(id) = crash.zone_id.as_deref() {
                    field.add(id, 1.0);
                }
            }
            Ok(field)
        }
        Response::Field { path, column } => {
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_path(path)
                .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
            let headers: Vec<String> = reader
                .headers()
                .map_err(|e| validation(format!("{}: {e}", path.display())))?
                .iter()
                .map(str::to_string)
                .collect();
            let c_zone = headers
                .iter()
                .position(|h| h == "zone_id")
                .ok_or_else(|| validation(format!("{}: missing column `zone_id`", path.display())))?;
            let c_val = headers.iter().position(|h| h == column).ok_or_else(|| {
                validation(format!("{}: missing column `{column}`", path.display()))
            })?;
            let mut values: HashMap<String, f64> = HashMap::new();
            for record in reader.records() {
                let record = record.map_err(|e| validation(format!("{}: {e}", path.display())))?;
                let zone = record.get(c_zone).unwrap_or_default().to_string();
                let value: f64 = record
                    .get(c_val)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| {
                        validation(format!("{}: bad value in column `{column}`", path.display()))
                    })?;
                values.insert(zone, value);
            }
            let mut field = ZoneField::zeros(universe);
            for id in universe {
                match values.get(id) {
                    Some(&v) => {
                        field.set(id, v);
                    }
                    None => {
                        return Err(validation(format!(
                            "{}: zone `{id}` missing from response field",
                            path.display()
                        )))
                    }
                }
            }
            Ok(field)
        }
    }
}

/// `pd.csv`: factor rows in rank order, then interaction rows in rank
/// order. `class` is filled for interactions, `k`/`breaks` for factors.
fn pd_csv(suite: &SuiteResult) -> String {
    let mut out = String::from("factors,pd,rank,p,class,k,breaks\n");
    for f in &suite.factors {
        let breaks = f
            .breaks
            .iter()
            .map(|b| fmt_sig(*b))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},,{},{}",
            f.factor,
            fmt_sig(f.pd),
            f.rank,
            fmt_sig(f.p),
            f.k,
            breaks
        );
    }
    for i in &suite.interactions {
        let _ = writeln!(
            out,
            "{}&{},{},{},{},{},,",
            i.factor_a,
            i.factor_b,
            fmt_sig(i.pd_ab),
            i.rank,
            fmt_sig(i.p),
            i.class.as_str()
        );
    }
    out
}

/// Count POIs per category per zone, stratify by Jenks breaks, and run the
/// factor + interaction detector suite against the configured response.
pub fn cmd_geodetect(m: &RunManifest) -> Result<GeodetectSummary, CliError> {
    let dataset = load_prepared(m)?;
    if dataset.zones.is_empty() {
        return Err(validation("geodetect requires a zones input (polygons)"));
    }
    if m.inputs.pois.is_none() {
        return Err(validation("geodetect requires a pois input"));
    }
    if m.inputs.crashes.is_none() && !matches!(m.response, Response::Field { .. }) {
        return Err(validation("geodetect requires a crashes input unless response = \"field\""));
    }
    let universe = dataset.zone_universe();
    let seed = m.require_seed("geodetect")?;
    let y = response_field(m, &dataset, &universe)?;

    // Per-zone POI counts per category: the nine canonical categories plus
    // anything else observed in the file.
    let zone_index: HashMap<&str, usize> = universe
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut categories: BTreeMap<String, Vec<f64>> = PoiCategory::ALL
        .iter()
        .map(|c| (c.as_str().to_string(), vec![0.0; universe.len()]))
        .collect();
    let locator = ZoneLocator::new(&dataset.zones);
    let mut outside = 0usize;
    for poi in &dataset.pois {
        let counts = categories
            .entry(poi.category.clone())
            .or_insert_with(|| vec![0.0; universe.len()]);
        match locator.locate(poi.x, poi.y).and_then(|z| zone_index.get(z)) {
            Some(&zi) => counts[zi] += 1.0,
            None => outside += 1,
        }
    }
    let factors: Vec<(String, Vec<f64>)> = categories.into_iter().collect();

    let config = SuiteConfig {
        default_k: m.jenks_k,
        k_overrides: BTreeMap::new(),
        n_perm: m.permutations,
        seed,
        top_interactions: None,
    };
    let suite = run_detector_suite(y.values(), &factors, &config).map_err(runtime)?;

    ensure_dir(&m.out_dir)?;
    let mut written = Vec::new();
    let pd_path = m.out_dir.join("pd.csv");
    write_file(&pd_path, &pd_csv(&suite))?;
    written.push(pd_path);
    if !suite.skipped.is_empty() {
        let mut out = String::from("factor,reason\n");
        for s in &suite.skipped {
            let _ = writeln!(out, "{},\"{}\"", s.factor, s.reason.replace('"', "'"));
        }
        let path = m.out_dir.join("skipped.csv");
        write_file(&path, &out)?;
        written.push(path);
    }

    Ok(GeodetectSummary {
        factors: suite.factors.len(),
        interactions: suite.interactions.len(),
        skipped: suite.skipped.len(),
        pois_outside_zones: outside,
        written,
    })
}

// ---------------------------------------------------------------------------
// tensor
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct TensorSummary {
    pub dims: [usize; 3],
    pub core: [usize; 3],
    pub objective: f64,
    pub iterations: usize,
    pub swept: bool,
    pub trivial: bool,
    pub written: Vec<PathBuf>,
}

fn factor_csv(header: &str, labels: &[String], matrix: &roadrisk_core::tensor::Matrix) -> String {
    let mut out = String::from(header);
    for c in 0..matrix.cols {
        let _ = write!(out, ",p{c}");
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        let _ = write!(out, "{label}");
        for c in 0..matrix.cols {
            let _ = write!(out, ",{}", fmt_sig(matrix.get(r, c)));
        }
        out.push('\n');
    }
    out
}

fn write_tensor_outputs(
    m: &RunManifest,
    model: &TuckerModel,
    patterns: &PatternReport,
    universe: &[String],
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let spatial_path = m.out_dir.join("factors_spatial.csv");
    write_file(&spatial_path, &factor_csv("zone_id", universe, &model.factors[0]))?;
    written.push(spatial_path);

    let age_labels: Vec<String> = AgeGroup::ALL.iter().map(|a| a.as_str().to_string()).collect();
    let age_path = m.out_dir.join("factors_age.csv");
    write_file(&age_path, &factor_csv("age_band", &age_labels, &model.factors[1]))?;
    written.push(age_path);

    let hour_labels: Vec<String> = (0..24).map(|h| h.to_string()).collect();
    let time_path = m.out_dir.join("factors_time.csv");
    write_file(&time_path, &factor_csv("hour", &hour_labels, &model.factors[2]))?;
    written.push(time_path);

    let [j1, j2, j3] = model.core.dims();
    let mut core_out = String::from("j1,j2,j3,value\n");
    for i in 0..j1 {
        for j in 0..j2 {
            for k in 0..j3 {
                let _ = writeln!(core_out, "{i},{j},{k},{}", fmt_sig(model.core.get(i, j, k)));
            }
        }
    }
    let core_path = m.out_dir.join("core.csv");
    write_file(&core_path, &core_out)?;
    written.push(core_path);

    let patterns_path = m.out_dir.join("patterns.json");
    let json = serde_json::to_string_pretty(patterns).map_err(runtime)?;
    write_file(&patterns_path, &format!("{json}\n"))?;
    written.push(patterns_path);

    // Per-(age pattern, time pattern) zone intensity fields; these feed
    // detector runs with response = "field".
    let mut fields = String::from("zone_id");
    for j in 0..j2 {
        for k in 0..j3 {
            let _ = write!(fields, ",a{j}_t{k}");
        }
    }
    fields.push('\n');
    let mut columns = Vec::new();
    for j in 0..j2 {
        for k in 0..j3 {
            let field = roadrisk_core::tensor::pattern_zone_field(model, universe, j, k)
                .map_err(runtime)?;
            columns.push(field.values().to_vec());
        }
    }
    for (zi, zone) in universe.iter().enumerate() {
        let _ = write!(fields, "{zone}");
        for col in &columns {
            let _ = write!(fields, ",{}", fmt_sig(col[zi]));
        }
        fields.push('\n');
    }
    let fields_path = m.out_dir.join("pattern_fields.csv");
    write_file(&fields_path, &fields)?;
    written.push(fields_path);
    Ok(())
}

/// Build the region x age x hour tensor for the configured day class, fit
/// (or sweep) a nonnegative Tucker model and write factor/core/pattern
/// reports.
pub fn cmd_tensor(m: &RunManifest) -> Result<TensorSummary, CliError> {
    let dataset = load_prepared(m)?;
    if m.inputs.crashes.is_none() {
        return Err(validation("tensor requires a crashes input"));
    }
    let universe = dataset.zone_universe();
    if universe.is_empty() {
        return Err(validation(
            "tensor requires zones, an adjacency file, or crashes with zone ids",
        ));
    }
    let seed = m.require_seed("tensor")?;
    let tensor = build_tensor(&dataset.crashes, &universe, m.day_class);
    let dims = tensor.dims();

    let opts = NtdOptions {
        max_iter: m.ntd_max_iter,
        tol: m.ntd_tol,
        restarts: m.ntd_restarts,
        seed,
        eps: 1e-9,
    };

    ensure_dir(&m.out_dir)?;
    let mut written = Vec::new();
    let (core_size, swept) = match (&m.sweep_candidates, m.core_size) {
        (Some(candidates), _) => {
            if let Some(&bad) = candidates.iter().find(|&&c| c > dims[0]) {
                return Err(validation(format!(
                    "sweep candidate {bad} exceeds the {} zones in the universe",
                    dims[0]
                )));
            }
            let sweep = select_core_size(
                &tensor,
                candidates,
                m.age_size,
                m.time_size,
                m.elbow_tol,
                &opts,
            )
            .map_err(runtime)?;
            let mut out = String::from("candidate,kl,objective\n");
            for row in &sweep.rows {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    row.candidate,
                    fmt_sig(row.kl),
                    fmt_sig(row.objective)
                );
            }
            let path = m.out_dir.join("sweep.csv");
            write_file(&path, &out)?;
            written.push(path);
            (sweep.selected, true)
        }
        (None, Some(size)) => {
            for (n, (&s, &d)) in size.iter().zip(dims.iter()).enumerate() {
                if s > d {
                    return Err(validation(format!(
                        "core_size[{n}] = {s} exceeds tensor dimension {d}"
                    )));
                }
            }
            (size, false)
        }
        (None, None) => {
            return Err(validation(
                "tensor requires core_size or sweep_candidates in the manifest",
            ))
        }
    };

    let model = ntd(&tensor, core_size, &opts).map_err(runtime)?;
    let patterns = extract_patterns(&model, &universe, m.top_zones, &PeakWindows::default());
    write_tensor_outputs(m, &model, &patterns, &universe, &mut written)?;

    Ok(TensorSummary {
        dims,
        core: core_size,
        objective: model.objective,
        iterations: model.iterations,
        swept,
        trivial: model.trivial,
        written,
    })
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ReportJson {
    crashes: CrashTotals,
    heatmap: TemporalHeatmap,
    #[serde(skip_serializing_if = "Option::is_none")]
    zones: Option<ZoneTotals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pois: Option<PoiTotals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<NetworkTotals>,
}

#[derive(Debug, Serialize)]
struct CrashTotals {
    total: usize,
    by_severity: BTreeMap<String, u64>,
    by_age_group: BTreeMap<String, u64>,
    total_swi: u64,
}

#[derive(Debug, Serialize)]
struct ZoneTotals {
    count: usize,
    assigned_swi: u64,
    unassigned_count: u64,
    unassigned_swi: u64,
}

#[derive(Debug, Serialize)]
struct PoiTotals {
    total: usize,
    by_category: BTreeMap<String, u64>,
}

#[derive(Debug, Serialize)]
struct NetworkTotals {
    nodes: usize,
    edges: usize,
    total_length_m: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportSummary {
    pub crashes: usize,
    pub total_swi: u64,
    pub written: Vec<PathBuf>,
}

/// Aggregate dataset totals and the weekly heatmap into `report.json` and
/// `heatmap.svg`.
pub fn cmd_report(m: &RunManifest) -> Result<ReportSummary, CliError> {
    let dataset = load_prepared(m)?;
    if m.inputs.crashes.is_none() {
        return Err(validation("report requires a crashes input"));
    }
    let heatmap =
        temporal_heatmap(&dataset.crashes, m.heatmap_bin_hours).map_err(|e| validation(e.to_string()))?;

    let mut severity_counts = SeverityCounts::default();
    let mut by_age: BTreeMap<String, u64> = AgeGroup::ALL
        .iter()
        .map(|a| (a.as_str().to_string(), 0))
        .collect();
    for crash in &dataset.crashes {
        severity_counts.add(crash.severity);
        *by_age.get_mut(crash.age_group.as_str()).unwrap() += 1;
    }
    let by_severity: BTreeMap<String, u64> = [
        (Severity::Fatal.as_str().to_string(), severity_counts.n_fatal),
        (Severity::Serious.as_str().to_string(), severity_counts.n_serious),
        (Severity::Slight.as_str().to_string(), severity_counts.n_slight),
    ]
    .into_iter()
    .collect();

    let zones = if dataset.zones.is_empty() {
        None
    } else {
        let universe = dataset.zone_universe();
        let agg = aggregate_zone_swi_by_ids(&dataset.crashes, &universe, &Default::default());
        Some(ZoneTotals {
            count: universe.len(),
            assigned_swi: agg.field.total() as u64,
            unassigned_count: agg.unassigned_count,
            unassigned_swi: agg.unassigned_swi,
        })
    };
    let pois = if dataset.pois.is_empty() && m.inputs.pois.is_none() {
        None
    } else {
        let mut by_category: BTreeMap<String, u64> = BTreeMap::new();
        for poi in &dataset.pois {
            *by_category.entry(poi.category.clone()).or_insert(0) += 1;
        }
        Some(PoiTotals {
            total: dataset.pois.len(),
            by_category,
        })
    };
    let network = dataset.network.as_ref().map(|n| NetworkTotals {
        nodes: n.n_nodes(),
        edges: n.n_edges(),
        total_length_m: n.total_length(),
    });

    let report = ReportJson {
        crashes: CrashTotals {
            total: dataset.crashes.len(),
            by_severity,
            by_age_group: by_age,
            total_swi: severity_counts.swi(),
        },
        heatmap: heatmap.clone(),
        zones,
        pois,
        network,
    };

    ensure_dir(&m.out_dir)?;
    let mut written = Vec::new();
    let report_path = m.out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    write_file(&report_path, &format!("{json}\n"))?;
    written.push(report_path);
    let svg_path = m.out_dir.join("heatmap.svg");
    write_file(&svg_path, &heatmap_svg(&heatmap))?;
    written.push(svg_path);

    Ok(ReportSummary {
        crashes: dataset.crashes.len(),
        total_swi: report.crashes.total_swi,
        written,
    })
}
