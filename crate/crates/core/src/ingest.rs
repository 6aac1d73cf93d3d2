//! Input parsing, validation and event aggregation.
//!
//! This module owns every file parser in the pipeline (crash, POI, zone,
//! adjacency and network files), the severity-weighted index (SWI), the
//! point-in-zone assignment and the weekly temporal heatmap.
//!
//! Coordinates are planar metric (meters) throughout. Geographic lat/lon
//! input is rejected, not reprojected: distance thresholds elsewhere in the
//! pipeline are metric and reprojection is out of scope.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom;
use crate::netkde::{EdgeSpec, NetworkError, RoadNetwork};

/// Tolerance (meters) for deciding that a point lies on a polygon boundary.
const BOUNDARY_EPS: f64 = 1e-9;

/// Crash severity class. Exactly three classes exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fatal,
    Serious,
    Slight,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Fatal, Severity::Serious, Severity::Slight];

    /// 5-3-1 severity weight.
    pub fn weight(self) -> u64 {
        match self {
            Severity::Fatal => 5,
            Severity::Serious => 3,
            Severity::Slight => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Fatal => "fatal",
            Severity::Serious => "serious",
            Severity::Slight => "slight",
        }
    }

    /// Case-insensitive parse after trimming; `None` for unknown tokens.
    pub fn parse(token: &str) -> Option<Severity> {
        match norm_token(token).as_str() {
            "fatal" => Some(Severity::Fatal),
            "serious" => Some(Severity::Serious),
            "slight" => Some(Severity::Slight),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Casualty age band. The seven bands are fixed: the age axis of the
/// region x age x hour tensor has size 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "0-18")]
    A0To18,
    #[serde(rename = "19-25")]
    A19To25,
    #[serde(rename = "26-35")]
    A26To35,
    #[serde(rename = "36-45")]
    A36To45,
    #[serde(rename = "46-55")]
    A46To55,
    #[serde(rename = "56-65")]
    A56To65,
    #[serde(rename = "over-65")]
    Over65,
}

impl AgeGroup {
    pub const COUNT: usize = 7;
    pub const ALL: [AgeGroup; 7] = [
        AgeGroup::A0To18,
        AgeGroup::A19To25,
        AgeGroup::A26To35,
        AgeGroup::A36To45,
        AgeGroup::A46To55,
        AgeGroup::A56To65,
        AgeGroup::Over65,
    ];

    /// Position of the band on the tensor age axis, 0..6.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::A0To18 => "0-18",
            AgeGroup::A19To25 => "19-25",
            AgeGroup::A26To35 => "26-35",
            AgeGroup::A36To45 => "36-45",
            AgeGroup::A46To55 => "46-55",
            AgeGroup::A56To65 => "56-65",
            AgeGroup::Over65 => "over-65",
        }
    }

    pub fn parse(token: &str) -> Option<AgeGroup> {
        let t = norm_token(token);
        Self::ALL.iter().copied().find(|a| a.as_str() == t)
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weekday (Mon-Fri) vs weekend (Sat-Sun) split used by filters and tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayClass {
    Weekday,
    Weekend,
}

impl DayClass {
    pub fn parse(token: &str) -> Option<DayClass> {
        match norm_token(token).as_str() {
            "weekday" | "weekdays" => Some(DayClass::Weekday),
            "weekend" | "weekends" => Some(DayClass::Weekend),
            _ => None,
        }
    }
}

/// One crash point event.
#[derive(Debug, Clone, PartialEq)]
pub struct CrashRecord {
    pub id: String,
    /// Planar easting in meters.
    pub x: f64,
    /// Planar northing in meters.
    pub y: f64,
    /// Calendar datetime, minute precision.
    pub timestamp: NaiveDateTime,
    pub severity: Severity,
    pub age_group: AgeGroup,
    /// Zone containing the event, when known or already assigned.
    pub zone_id: Option<String>,
}

impl CrashRecord {
    /// Severity weight of this single event (its SWI contribution).
    pub fn swi_weight(&self) -> u64 {
        self.severity.weight()
    }

    /// Hour of day, 0..23.
    pub fn hour(&self) -> u32 {
        self.timestamp.hour()
    }

    /// Day of week with Monday = 0 .. Sunday = 6.
    pub fn weekday_index(&self) -> usize {
        self.timestamp.weekday().num_days_from_monday() as usize
    }

    pub fn day_class(&self) -> DayClass {
        if self.weekday_index() >= 5 {
            DayClass::Weekend
        } else {
            DayClass::Weekday
        }
    }
}

/// Crash counts by severity class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub n_fatal: u64,
    pub n_serious: u64,
    pub n_slight: u64,
}

impl SeverityCounts {
    pub fn add(&mut self, severity: Severity) {
        match severity {
            Severity::Fatal => self.n_fatal += 1,
            Severity::Serious => self.n_serious += 1,
            Severity::Slight => self.n_slight += 1,
        }
    }

    pub fn swi(&self) -> u64 {
        compute_swi(self)
    }
}

/// Severity-weighted index: `5*fatal + 3*serious + slight`.
///
/// Total and additive: `swi(a + b) = swi(a) + swi(b)` and monotone
/// nondecreasing in each count.
pub fn compute_swi(counts: &SeverityCounts) -> u64 {
    5 * counts.n_fatal + 3 * counts.n_serious + counts.n_slight
}

/// The nine canonical POI categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PoiCategory {
    Work,
    Attraction,
    Education,
    Shop,
    Restaurant,
    Station,
    Entertainment,
    Accommodation,
    Parking,
}

impl PoiCategory {
    pub const ALL: [PoiCategory; 9] = [
        PoiCategory::Work,
        PoiCategory::Attraction,
        PoiCategory::Education,
        PoiCategory::Shop,
        PoiCategory::Restaurant,
        PoiCategory::Station,
        PoiCategory::Entertainment,
        PoiCategory::Accommodation,
        PoiCategory::Parking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoiCategory::Work => "WORK",
            PoiCategory::Attraction => "ATTRACTION",
            PoiCategory::Education => "EDUCATION",
            PoiCategory::Shop => "SHOP",
            PoiCategory::Restaurant => "RESTAURANT",
            PoiCategory::Station => "STATION",
            PoiCategory::Entertainment => "ENTERTAINMENT",
            PoiCategory::Accommodation => "ACCOMMODATION",
            PoiCategory::Parking => "PARKING",
        }
    }

    pub fn parse(token: &str) -> Option<PoiCategory> {
        let t = token.trim().to_ascii_uppercase();
        Self::ALL.iter().copied().find(|c| c.as_str() == t)
    }
}

impl fmt::Display for PoiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A point of interest. `category` is stored normalized (uppercase); it is
/// either one of [`PoiCategory::ALL`] or an extra category enabled at load
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub id: String,
    pub category: String,
    pub x: f64,
    pub y: f64,
}

/// A polygonal analysis zone. Rings are closed vertex lists (first ==
/// last); additional rings are treated as holes under the even-odd rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: String,
    pub rings: Vec<Vec<[f64; 2]>>,
}

impl Zone {
    /// Validate ring structure. Rings must be closed, have at least four
    /// vertices and enclose a nonzero area.
    pub fn validate(&self) -> Result<(), String> {
        if self.zone_id.is_empty() {
            return Err("empty zone_id".into());
        }
        if self.rings.is_empty() {
            return Err(format!("zone `{}` has no rings", self.zone_id));
        }
        for (ri, ring) in self.rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(format!(
                    "zone `{}` ring {} has {} vertices, need at least 4",
                    self.zone_id,
                    ri,
                    ring.len()
                ));
            }
            if ring.first() != ring.last() {
                return Err(format!(
                    "zone `{}` ring {} is not closed (first vertex != last)",
                    self.zone_id, ri
                ));
            }
            if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(format!(
                    "zone `{}` ring {} has non-finite coordinates",
                    self.zone_id, ri
                ));
            }
            if geom::ring_area(ring).abs() <= f64::EPSILON {
                return Err(format!(
                    "zone `{}` ring {} is degenerate (zero area)",
                    self.zone_id, ri
                ));
            }
        }
        Ok(())
    }

    /// Even-odd point-in-polygon test over all rings; boundary points count
    /// as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        for ring in &self.rings {
            for seg in ring.windows(2) {
                let (d2, _) = geom::dist2_point_segment([x, y], seg[0], seg[1]);
                if d2.sqrt() <= BOUNDARY_EPS {
                    return true;
                }
            }
        }
        let mut inside = false;
        for ring in &self.rings {
            for seg in ring.windows(2) {
                let [x1, y1] = seg[0];
                let [x2, y2] = seg[1];
                if (y1 > y) != (y2 > y) {
                    let x_cross = (x2 - x1) * (y - y1) / (y2 - y1) + x1;
                    if x < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

/// Assign a point to the zone containing it. Boundary points count as
/// inside; when several zones contain the point the lexicographically
/// smallest `zone_id` wins, so the result does not depend on zone order.
pub fn assign_zone(x: f64, y: f64, zones: &[Zone]) -> Option<&str> {
    let mut best: Option<&str> = None;
    for zone in zones {
        if zone.contains(x, y) {
            match best {
                Some(b) if b <= zone.zone_id.as_str() => {}
                _ => best = Some(&zone.zone_id),
            }
        }
    }
    best
}

/// Batch point-in-zone lookups with precomputed bounding boxes. Same
/// semantics as [`assign_zone`]; the bbox prefilter keeps city-scale zone
/// sets (thousands of polygons) practical.
pub struct ZoneLocator<'a> {
    zones: &'a [Zone],
    bboxes: Vec<[f64; 4]>,
}

impl<'a> ZoneLocator<'a> {
    pub fn new(zones: &'a [Zone]) -> ZoneLocator<'a> {
        let bboxes = zones
            .iter()
            .map(|zone| {
                let mut bb = [
                    f64::INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::NEG_INFINITY,
                ];
                for ring in &zone.rings {
                    for p in ring {
                        bb[0] = bb[0].min(p[0]);
                        bb[1] = bb[1].min(p[1]);
                        bb[2] = bb[2].max(p[0]);
                        bb[3] = bb[3].max(p[1]);
                    }
                }
                bb
            })
            .collect();
        ZoneLocator { zones, bboxes }
    }

    pub fn locate(&self, x: f64, y: f64) -> Option<&'a str> {
        let mut best: Option<&str> = None;
        for (zone, bb) in self.zones.iter().zip(&self.bboxes) {
            if x < bb[0] - BOUNDARY_EPS
                || x > bb[2] + BOUNDARY_EPS
                || y < bb[1] - BOUNDARY_EPS
                || y > bb[3] + BOUNDARY_EPS
            {
                continue;
            }
            if zone.contains(x, y) {
                match best {
                    Some(b) if b <= zone.zone_id.as_str() => {}
                    _ => best = Some(&zone.zone_id),
                }
            }
        }
        best
    }
}

/// Counts from a batch zone-assignment pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZoneAssignStats {
    pub assigned: u64,
    pub unassigned: u64,
    /// Records that already carried a zone id and were left untouched.
    pub preassigned: u64,
}

/// Fill in `zone_id` for every crash that does not carry one yet.
pub fn assign_zones(crashes: &mut [CrashRecord], zones: &[Zone]) -> ZoneAssignStats {
    let locator = ZoneLocator::new(zones);
    let mut stats = ZoneAssignStats::default();
    for crash in crashes.iter_mut() {
        if crash.zone_id.is_some() {
            stats.preassigned += 1;
            continue;
        }
        match locator.locate(crash.x, crash.y) {
            Some(id) => {
                crash.zone_id = Some(id.to_string());
                stats.assigned += 1;
            }
            None => stats.unassigned += 1,
        }
    }
    stats
}

/// Per-zone scalar field. Zone order is preserved from construction and
/// defines the row order of every derived report.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneField {
    ids: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ZoneField {
    pub fn new(ids: Vec<String>, values: Vec<f64>) -> ZoneField {
        assert_eq!(ids.len(), values.len(), "ids/values length mismatch");
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        ZoneField { ids, values, index }
    }

    pub fn zeros(ids: &[String]) -> ZoneField {
        ZoneField::new(ids.to_vec(), vec![0.0; ids.len()])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, zone_id: &str) -> Option<f64> {
        self.index.get(zone_id).map(|&i| self.values[i])
    }

    pub fn set(&mut self, zone_id: &str, value: f64) -> bool {
        match self.index.get(zone_id) {
            Some(&i) => {
                self.values[i] = value;
                true
            }
            None => false,
        }
    }

    pub fn add(&mut self, zone_id: &str, delta: f64) -> bool {
        match self.index.get(zone_id) {
            Some(&i) => {
                self.values[i] += delta;
                true
            }
            None => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.ids
            .iter()
            .zip(self.values.iter())
            .map(|(id, v)| (id.as_str(), *v))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Predicate over crash records used by zone aggregation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrashFilter {
    pub day_class: Option<DayClass>,
    pub age_groups: Option<BTreeSet<AgeGroup>>,
    /// Inclusive hour range, both ends 0..=23.
    pub hour_range: Option<(u32, u32)>,
}

impl CrashFilter {
    pub fn matches(&self, crash: &CrashRecord) -> bool {
        if let Some(dc) = self.day_class {
            if crash.day_class() != dc {
                return false;
            }
        }
        if let Some(groups) = &self.age_groups {
            if !groups.contains(&crash.age_group) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.hour_range {
            let h = crash.hour();
            if h < lo || h > hi {
                return false;
            }
        }
        true
    }
}

/// Result of aggregating crash SWI per zone.
#[derive(Debug, Clone)]
pub struct ZoneAggregate {
    pub field: ZoneField,
    /// Filtered crashes that fell in no zone.
    pub unassigned_count: u64,
    /// Their total SWI; `field.total() + unassigned_swi` equals the SWI of
    /// all filtered crashes.
    pub unassigned_swi: u64,
}

/// Sum SWI per zone over the filtered crashes. Zones without crashes get 0;
/// crashes outside every zone go to the unassigned tally.
pub fn aggregate_zone_swi(
    crashes: &[CrashRecord],
    zones: &[Zone],
    filter: &CrashFilter,
) -> ZoneAggregate {
    let ids: Vec<String> = zones.iter().map(|z| z.zone_id.clone()).collect();
    let mut field = ZoneField::zeros(&ids);
    let mut unassigned_count = 0u64;
    let mut unassigned_swi = 0u64;
    for crash in crashes.iter().filter(|c| filter.matches(c)) {
        let zone = match &crash.zone_id {
            Some(id) if field.get(id).is_some() => Some(id.clone()),
            Some(_) => None,
            None => assign_zone(crash.x, crash.y, zones).map(str::to_string),
        };
        match zone {
            Some(id) => {
                field.add(&id, crash.swi_weight() as f64);
            }
            None => {
                unassigned_count += 1;
                unassigned_swi += crash.swi_weight();
            }
        }
    }
    ZoneAggregate {
        field,
        unassigned_count,
        unassigned_swi,
    }
}

/// [`aggregate_zone_swi`] over an explicit zone universe, using only the
/// `zone_id` already carried by each crash (no geometry).
pub fn aggregate_zone_swi_by_ids(
    crashes: &[CrashRecord],
    zone_ids: &[String],
    filter: &CrashFilter,
) -> ZoneAggregate {
    let mut field = ZoneField::zeros(zone_ids);
    let mut unassigned_count = 0u64;
    let mut unassigned_swi = 0u64;
    for crash in crashes.iter().filter(|c| filter.matches(c)) {
        let added = crash
            .zone_id
            .as_deref()
            .is_some_and(|id| field.add(id, crash.swi_weight() as f64));
        if !added {
            unassigned_count += 1;
            unassigned_swi += crash.swi_weight();
        }
    }
    ZoneAggregate {
        field,
        unassigned_count,
        unassigned_swi,
    }
}

/// Weekly SWI heatmap: 7 day rows by `24 / bin_width_hours` time bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemporalHeatmap {
    pub bin_width_hours: u32,
    /// Rows Monday..Sunday, each `24 / bin_width_hours` cells of SWI totals.
    pub cells: Vec<Vec<u64>>,
}

impl TemporalHeatmap {
    pub fn n_bins(&self) -> usize {
        (24 / self.bin_width_hours) as usize
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn max(&self) -> u64 {
        self.cells.iter().flatten().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid heatmap bin width {0}: must divide 24")]
    InvalidBinWidth(u32),
}

/// Sum SWI per (day-of-week, time bin); the bin of a crash is
/// `floor(hour / bin_width_hours)`.
pub fn temporal_heatmap(
    crashes: &[CrashRecord],
    bin_width_hours: u32,
) -> Result<TemporalHeatmap, IngestError> {
    if bin_width_hours == 0 || 24 % bin_width_hours != 0 {
        return Err(IngestError::InvalidBinWidth(bin_width_hours));
    }
    let n_bins = (24 / bin_width_hours) as usize;
    let mut cells = vec![vec![0u64; n_bins]; 7];
    for crash in crashes {
        let day = crash.weekday_index();
        let bin = (crash.hour() / bin_width_hours) as usize;
        cells[day][bin] += crash.swi_weight();
    }
    Ok(TemporalHeatmap {
        bin_width_hours,
        cells,
    })
}

// ---------------------------------------------------------------------------
// File loading
// ---------------------------------------------------------------------------

/// One rejected input row.
#[derive(Debug, Clone)]
pub struct RowError {
    pub line: u64,
    pub column: String,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column `{}`: {}",
            self.line, self.column, self.message
        )
    }
}

fn format_row_errors(errors: &[RowError]) -> String {
    const SHOWN: usize = 12;
    let mut out = String::new();
    for e in errors.iter().take(SHOWN) {
        out.push_str("  ");
        out.push_str(&e.to_string());
        out.push('\n');
    }
    if errors.len() > SHOWN {
        out.push_str(&format!("  ... and {} more\n", errors.len() - SHOWN));
    }
    out
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: missing required column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{}: {} invalid row(s):\n{}", path.display(), errors.len(), format_row_errors(errors))]
    Rows { path: PathBuf, errors: Vec<RowError> },
}

/// Minimal CSV reader wrapper that reports header/row context.
struct CsvTable {
    path: PathBuf,
    headers: Vec<String>,
    records: Vec<(u64, csv::StringRecord)>,
}

impl CsvTable {
    fn open(path: &Path) -> Result<CsvTable, LoadError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => LoadError::Io {
                    path: path.to_path_buf(),
                    source: match e.into_kind() {
                        csv::ErrorKind::Io(io) => io,
                        _ => unreachable!(),
                    },
                },
                _ => LoadError::Csv {
                    path: path.to_path_buf(),
                    source: e,
                },
            })?;
        let headers = reader
            .headers()
            .map_err(|e| LoadError::Csv {
                path: path.to_path_buf(),
                source: e,
            })?
            .iter()
            .map(|h| h.trim().to_ascii_lowercase())
            .collect();
        let mut records = Vec::new();
        for result in reader.records() {
            let record = result.map_err(|e| LoadError::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            records.push((line, record));
        }
        Ok(CsvTable {
            path: path.to_path_buf(),
            headers,
            records,
        })
    }

    fn column(&self, name: &str) -> Result<usize, LoadError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LoadError::MissingColumn {
                path: self.path.clone(),
                column: name.to_string(),
            })
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn field<'r>(
    record: &'r csv::StringRecord,
    idx: usize,
    line: u64,
    column: &str,
    errors: &mut Vec<RowError>,
) -> Option<&'r str> {
    match record.get(idx) {
        Some(v) if !v.is_empty() => Some(v),
        _ => {
            errors.push(RowError {
                line,
                column: column.to_string(),
                message: "missing value".into(),
            });
            None
        }
    }
}

fn parse_coord(
    raw: &str,
    line: u64,
    column: &str,
    errors: &mut Vec<RowError>,
) -> Option<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        Ok(_) => {
            errors.push(RowError {
                line,
                column: column.to_string(),
                message: "coordinate must be finite".into(),
            });
            None
        }
        Err(_) => {
            errors.push(RowError {
                line,
                column: column.to_string(),
                message: format!("`{raw}` is not a number"),
            });
            None
        }
    }
}

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

fn parse_datetime(raw: &str) -> Option<NaiveDateTime> {
    DATETIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw.trim(), f).ok())
}

/// Load `crashes.csv`: `id,x,y,datetime,severity,age_group[,zone_id]`.
pub fn load_crashes(path: &Path) -> Result<Vec<CrashRecord>, LoadError> {
    let table = CsvTable::open(path)?;
    let c_id = table.column("id")?;
    let c_x = table.column("x")?;
    let c_y = table.column("y")?;
    let c_dt = table.column("datetime")?;
    let c_sev = table.column("severity")?;
    let c_age = table.column("age_group")?;
    let c_zone = table.optional_column("zone_id");

    let mut crashes = Vec::with_capacity(table.records.len());
    let mut errors = Vec::new();
    for (line, record) in &table.records {
        let line = *line;
        let id = field(record, c_id, line, "id", &mut errors);
        let x = field(record, c_x, line, "x", &mut errors)
            .and_then(|v| parse_coord(v, line, "x", &mut errors));
        let y = field(record, c_y, line, "y", &mut errors)
            .and_then(|v| parse_coord(v, line, "y", &mut errors));
        let ts = field(record, c_dt, line, "datetime", &mut errors).and_then(|v| {
            parse_datetime(v).or_else(|| {
                errors.push(RowError {
                    line,
                    column: "datetime".into(),
                    message: format!("`{v}` is not an ISO 8601 datetime"),
                });
                None
            })
        });
        let severity = field(record, c_sev, line, "severity", &mut errors).and_then(|v| {
            Severity::parse(v).or_else(|| {
                errors.push(RowError {
                    line,
                    column: "severity".into(),
                    message: format!("unknown severity token `{v}`"),
                });
                None
            })
        });
        let age = field(record, c_age, line, "age_group", &mut errors).and_then(|v| {
            AgeGroup::parse(v).or_else(|| {
                errors.push(RowError {
                    line,
                    column: "age_group".into(),
                    message: format!("unknown age group `{v}` (expected one of the 7 bands)"),
                });
                None
            })
        });
        let zone_id = c_zone
            .and_then(|c| record.get(c))
            .filter(|v| !v.is_empty())
            .map(str::to_string);
        if let (Some(id), Some(x), Some(y), Some(timestamp), Some(severity), Some(age_group)) =
            (id, x, y, ts, severity, age)
        {
            crashes.push(CrashRecord {
                id: id.to_string(),
                x,
                y,
                timestamp,
                severity,
                age_group,
                zone_id,
            });
        }
    }
    if errors.is_empty() {
        Ok(crashes)
    } else {
        Err(LoadError::Rows {
            path: table.path,
            errors,
        })
    }
}

/// Load `pois.csv`: `id,category,x,y`. `extra_categories` extends the nine
/// canonical categories; tokens are matched case-insensitively.
pub fn load_pois(path: &Path, extra_categories: &[String]) -> Result<Vec<PoiRecord>, LoadError> {
    let table = CsvTable::open(path)?;
    let c_id = table.column("id")?;
    let c_cat = table.column("category")?;
    let c_x = table.column("x")?;
    let c_y = table.column("y")?;

    let extras: HashSet<String> = extra_categories
        .iter()
        .map(|c| c.trim().to_ascii_uppercase())
        .collect();

    let mut pois = Vec::with_capacity(table.records.len());
    let mut errors = Vec::new();
    for (line, record) in &table.records {
        let line = *line;
        let id = field(record, c_id, line, "id", &mut errors);
        let category = field(record, c_cat, line, "category", &mut errors).and_then(|v| {
            let norm = v.trim().to_ascii_uppercase();
            if PoiCategory::parse(&norm).is_some() || extras.contains(&norm) {
                Some(norm)
            } else {
                errors.push(RowError {
                    line,
                    column: "category".into(),
                    message: format!("unknown POI category `{v}`"),
                });
                None
            }
        });
        let x = field(record, c_x, line, "x", &mut errors)
            .and_then(|v| parse_coord(v, line, "x", &mut errors));
        let y = field(record, c_y, line, "y", &mut errors)
            .and_then(|v| parse_coord(v, line, "y", &mut errors));
        if let (Some(id), Some(category), Some(x), Some(y)) = (id, category, x, y) {
            pois.push(PoiRecord {
                id: id.to_string(),
                category,
                x,
                y,
            });
        }
    }
    if errors.is_empty() {
        Ok(pois)
    } else {
        Err(LoadError::Rows {
            path: table.path,
            errors,
        })
    }
}

/// Load `zones.json`: `[{"zone_id": ..., "rings": [[[x, y], ...], ...]}]`.
pub fn load_zones(path: &Path) -> Result<Vec<Zone>, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let zones: Vec<Zone> = serde_json::from_str(&text).map_err(|e| LoadError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut seen = HashSet::new();
    for zone in &zones {
        zone.validate().map_err(|message| LoadError::Schema {
            path: path.to_path_buf(),
            message,
        })?;
        if !seen.insert(zone.zone_id.clone()) {
            return Err(LoadError::Schema {
                path: path.to_path_buf(),
                message: format!("duplicate zone_id `{}`", zone.zone_id),
            });
        }
    }
    Ok(zones)
}

/// Load `adjacency.csv`: `zone_a,zone_b`, one undirected pair per line.
/// Duplicate pairs (in either orientation) are deduplicated.
pub fn load_adjacency(path: &Path) -> Result<Vec<(String, String)>, LoadError> {
    let table = CsvTable::open(path)?;
    let c_a = table.column("zone_a")?;
    let c_b = table.column("zone_b")?;
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, record) in &table.records {
        let line = *line;
        let a = field(record, c_a, line, "zone_a", &mut errors);
        let b = field(record, c_b, line, "zone_b", &mut errors);
        if let (Some(a), Some(b)) = (a, b) {
            if a == b {
                errors.push(RowError {
                    line,
                    column: "zone_b".into(),
                    message: format!("self-neighbor pair `{a}`"),
                });
                continue;
            }
            let pair = if a <= b {
                (a.to_string(), b.to_string())
            } else {
                (b.to_string(), a.to_string())
            };
            seen.insert(pair);
        }
    }
    if errors.is_empty() {
        Ok(seen.into_iter().collect())
    } else {
        Err(LoadError::Rows {
            path: table.path,
            errors,
        })
    }
}

/// Load `nodes.csv` (`node_id,x,y`) and `edges.csv`
/// (`edge_id,from,to[,geometry]`) into a validated road network. The
/// `geometry` column holds `x1 y1;x2 y2;...` and defaults to the straight
/// segment between the endpoint nodes.
pub fn load_network(nodes_path: &Path, edges_path: &Path) -> Result<RoadNetwork, LoadError> {
    let nodes_table = CsvTable::open(nodes_path)?;
    let c_nid = nodes_table.column("node_id")?;
    let c_nx = nodes_table.column("x")?;
    let c_ny = nodes_table.column("y")?;
    let mut errors = Vec::new();
    let mut nodes = Vec::new();
    for (line, record) in &nodes_table.records {
        let line = *line;
        let id = field(record, c_nid, line, "node_id", &mut errors);
        let x = field(record, c_nx, line, "x", &mut errors)
            .and_then(|v| parse_coord(v, line, "x", &mut errors));
        let y = field(record, c_ny, line, "y", &mut errors)
            .and_then(|v| parse_coord(v, line, "y", &mut errors));
        if let (Some(id), Some(x), Some(y)) = (id, x, y) {
            nodes.push((id.to_string(), x, y));
        }
    }
    if !errors.is_empty() {
        return Err(LoadError::Rows {
            path: nodes_table.path,
            errors,
        });
    }

    let edges_table = CsvTable::open(edges_path)?;
    let c_eid = edges_table.column("edge_id")?;
    let c_from = edges_table.column("from")?;
    let c_to = edges_table.column("to")?;
    let c_geom = edges_table.optional_column("geometry");
    let mut edges = Vec::new();
    for (line, record) in &edges_table.records {
        let line = *line;
        let id = field(record, c_eid, line, "edge_id", &mut errors);
        let from = field(record, c_from, line, "from", &mut errors);
        let to = field(record, c_to, line, "to", &mut errors);
        let geometry = match c_geom.and_then(|c| record.get(c)).filter(|v| !v.is_empty()) {
            Some(raw) => match parse_geometry(raw) {
                Some(pts) => Some(pts),
                None => {
                    errors.push(RowError {
                        line,
                        column: "geometry".into(),
                        message: format!("cannot parse polyline `{raw}`"),
                    });
                    continue;
                }
            },
            None => None,
        };
        if let (Some(id), Some(from), Some(to)) = (id, from, to) {
            edges.push(EdgeSpec {
                id: id.to_string(),
                from: from.to_string(),
                to: to.to_string(),
                geometry,
            });
        }
    }
    if !errors.is_empty() {
        return Err(LoadError::Rows {
            path: edges_table.path,
            errors,
        });
    }

    RoadNetwork::new(nodes, edges).map_err(|e: NetworkError| LoadError::Schema {
        path: edges_path.to_path_buf(),
        message: e.to_string(),
    })
}

fn parse_geometry(raw: &str) -> Option<Vec<[f64; 2]>> {
    let mut points = Vec::new();
    for part in raw.split(';') {
        let mut it = part.split_whitespace();
        let x = it.next()?.parse::<f64>().ok()?;
        let y = it.next()?.parse::<f64>().ok()?;
        if it.next().is_some() || !x.is_finite() || !y.is_finite() {
            return None;
        }
        points.push([x, y]);
    }
    if points.len() >= 2 {
        Some(points)
    } else {
        None
    }
}

/// Input file locations for [`load_dataset`]. Every part is optional;
/// commands validate that the parts they need are present.
#[derive(Debug, Clone, Default)]
pub struct DatasetPaths {
    pub crashes: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    /// Declared coordinate reference; only planar meters are accepted.
    pub crs: Option<String>,
    pub extra_poi_categories: Vec<String>,
}

/// Fully validated input aggregate.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub crashes: Vec<CrashRecord>,
    pub pois: Vec<PoiRecord>,
    pub zones: Vec<Zone>,
    pub adjacency: Option<Vec<(String, String)>>,
    pub network: Option<RoadNetwork>,
}

impl Dataset {
    /// Zone universe in report order: the zone file order when polygons are
    /// given, otherwise the sorted distinct ids referenced by the adjacency
    /// file and the crash records.
    pub fn zone_universe(&self) -> Vec<String> {
        if !self.zones.is_empty() {
            return self.zones.iter().map(|z| z.zone_id.clone()).collect();
        }
        let mut ids = BTreeSet::new();
        if let Some(pairs) = &self.adjacency {
            for (a, b) in pairs {
                ids.insert(a.clone());
                ids.insert(b.clone());
            }
        }
        for crash in &self.crashes {
            if let Some(z) = &crash.zone_id {
                ids.insert(z.clone());
            }
        }
        ids.into_iter().collect()
    }
}

/// Load and cross-validate every file named in `paths`.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset, LoadError> {
    if let Some(crs) = &paths.crs {
        let t = norm_token(crs);
        if t != "planar" && t != "planar-meters" {
            return Err(LoadError::Schema {
                path: paths.crashes.clone().unwrap_or_default(),
                message: format!(
                    "unsupported crs `{crs}`: coordinates must be planar meters \
                     (reprojection is not performed)"
                ),
            });
        }
    }
    let crashes = match &paths.crashes {
        Some(p) => load_crashes(p)?,
        None => Vec::new(),
    };
    let pois = match &paths.pois {
        Some(p) => load_pois(p, &paths.extra_poi_categories)?,
        None => Vec::new(),
    };
    let zones = match &paths.zones {
        Some(p) => load_zones(p)?,
        None => Vec::new(),
    };
    let adjacency = match &paths.adjacency {
        Some(p) => Some(load_adjacency(p)?),
        None => None,
    };
    let network = match (&paths.nodes, &paths.edges) {
        (Some(n), Some(e)) => Some(load_network(n, e)?),
        (None, None) => None,
        (Some(_), None) | (None, Some(_)) => {
            return Err(LoadError::Schema {
                path: paths.nodes.clone().or(paths.edges.clone()).unwrap(),
                message: "nodes and edges files must be provided together".into(),
            });
        }
    };

    // Explicit crash zone ids must exist when polygons are given.
    if !zones.is_empty() {
        let known: HashSet<&str> = zones.iter().map(|z| z.zone_id.as_str()).collect();
        let bad: Vec<&CrashRecord> = crashes
            .iter()
            .filter(|c| c.zone_id.as_deref().is_some_and(|z| !known.contains(z)))
            .collect();
        if !bad.is_empty() {
            return Err(LoadError::Schema {
                path: paths.crashes.clone().unwrap_or_default(),
                message: format!(
                    "crash `{}` references unknown zone `{}`{}",
                    bad[0].id,
                    bad[0].zone_id.as_deref().unwrap_or(""),
                    if bad.len() > 1 {
                        format!(" (and {} more)", bad.len() - 1)
                    } else {
                        String::new()
                    }
                ),
            });
        }
        if let Some(pairs) = &adjacency {
            for (a, b) in pairs {
                if !known.contains(a.as_str()) || !known.contains(b.as_str()) {
                    return Err(LoadError::Schema {
                        path: paths.adjacency.clone().unwrap_or_default(),
                        message: format!("adjacency pair ({a},{b}) references unknown zone"),
                    });
                }
            }
        }
    }

    Ok(Dataset {
        crashes,
        pois,
        zones,
        adjacency,
        network,
    })
}

fn norm_token(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace([' ', '_'], "-")
}
