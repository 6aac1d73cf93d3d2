//! Spatial autocorrelation: queen-contiguity weights, global Moran's I and
//! local indicators (LISA) with permutation significance.
//!
//! Global I uses binary weights as printed:
//!
//! `I = n * sum_ij w_ij d_i d_j / (sum_ij w_ij * sum_i d_i^2)`
//!
//! with `d_i` the deviation of zone i's value from the mean. The LISA
//! statistic standardizes values with the population (1/n) standard
//! deviation and uses a row-standardized spatial lag,
//! `I_i = z_i * mean(z_j, j in N(i))`, the usual local-Moran convention.
//!
//! Significance is a pseudo p-value `(1 + exceedances) / (1 + n_perm)`.
//! The global test counts permutations with `I_perm >= I_obs` (upper tail),
//! which makes the p-value uniform under the null. LISA uses the Anselin
//! conditional scheme (the value at i stays fixed, neighbor values are
//! drawn from the remaining n-1) and counts the tail matching the sign of
//! the observed local statistic so that both cluster and outlier classes
//! can reach significance.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Zone, ZoneField};

#[derive(Debug, Error)]
pub enum AutocorrError {
    #[error("field has zero variance")]
    ZeroVariance,
    #[error("weights contain no neighbor pairs")]
    NoNeighborPairs,
    #[error("zone universe mismatch between field and weights")]
    ZoneMismatch,
    #[error("adjacency references unknown zone `{0}`")]
    UnknownZone(String),
    #[error("need at least {min} permutations, got {got}")]
    TooFewPermutations { min: u32, got: u32 },
    #[error("LISA results cover different zone sets")]
    MismatchedZoneSets,
}

/// Symmetric neighbor lists over a fixed zone universe. No self-neighbors;
/// zones without neighbors are isolates.
#[derive(Debug, Clone)]
pub struct SpatialWeights {
    ids: Vec<String>,
    neighbors: Vec<Vec<usize>>,
}

/// Vertex coordinates are quantized to this grid (meters) before queen
/// vertex matching.
const VERTEX_QUANTUM: f64 = 1e-6;

impl SpatialWeights {
    /// Queen contiguity from polygons: two zones are neighbors when they
    /// share at least one vertex (after quantizing coordinates to 1e-6 m)
    /// or a stretch of boundary, detected as a vertex of one zone lying on
    /// a boundary segment of the other.
    pub fn queen_from_zones(zones: &[Zone]) -> SpatialWeights {
        let ids: Vec<String> = zones.iter().map(|z| z.zone_id.clone()).collect();
        let n = zones.len();
        let mut neighbor_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];

        // Shared quantized vertices.
        let mut vertex_zones: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (zi, zone) in zones.iter().enumerate() {
            for ring in &zone.rings {
                for p in ring.iter().take(ring.len().saturating_sub(1)) {
                    let key = quantize(*p);
                    let entry = vertex_zones.entry(key).or_default();
                    if entry.last() != Some(&zi) {
                        entry.push(zi);
                    }
                }
            }
        }
        for owners in vertex_zones.values() {
            for (i, &a) in owners.iter().enumerate() {
                for &b in &owners[i + 1..] {
                    if a != b {
                        neighbor_sets[a].insert(b);
                        neighbor_sets[b].insert(a);
                    }
                }
            }
        }

        // Boundary contact without a shared vertex: a vertex of one polygon
        // sitting on a segment of the other (bounding boxes prefilter).
        let boxes: Vec<[f64; 4]> = zones.iter().map(zone_bbox).collect();
        for a in 0..n {
            for b in (a + 1)..n {
                if neighbor_sets[a].contains(&b) {
                    continue;
                }
                if !bbox_touch(&boxes[a], &boxes[b]) {
                    continue;
                }
                if vertex_on_boundary(&zones[a], &zones[b])
                    || vertex_on_boundary(&zones[b], &zones[a])
                {
                    neighbor_sets[a].insert(b);
                    neighbor_sets[b].insert(a);
                }
            }
        }

        SpatialWeights {
            ids,
            neighbors: neighbor_sets
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
        }
    }

    /// Weights from explicit undirected pairs over a given zone universe.
    /// Pairs are deduplicated and symmetrized.
    pub fn from_pairs(
        ids: &[String],
        pairs: &[(String, String)],
    ) -> Result<SpatialWeights, AutocorrError> {
        let index: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut neighbor_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        for (a, b) in pairs {
            let ia = *index
                .get(a.as_str())
                .ok_or_else(|| AutocorrError::UnknownZone(a.clone()))?;
            let ib = *index
                .get(b.as_str())
                .ok_or_else(|| AutocorrError::UnknownZone(b.clone()))?;
            if ia == ib {
                continue;
            }
            neighbor_sets[ia].insert(ib);
            neighbor_sets[ib].insert(ia);
        }
        Ok(SpatialWeights {
            ids: ids.to_vec(),
            neighbors: neighbor_sets
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Zones with no neighbors.
    pub fn isolates(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.neighbors[i].is_empty())
            .collect()
    }

    /// Total number of directed neighbor links (`sum_ij w_ij` for binary
    /// weights).
    pub fn total_links(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

fn quantize(p: [f64; 2]) -> (i64, i64) {
    (
        (p[0] / VERTEX_QUANTUM).round() as i64,
        (p[1] / VERTEX_QUANTUM).round() as i64,
    )
}

fn zone_bbox(zone: &Zone) -> [f64; 4] {
    let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for ring in &zone.rings {
        for p in ring {
            bb[0] = bb[0].min(p[0]);
            bb[1] = bb[1].min(p[1]);
            bb[2] = bb[2].max(p[0]);
            bb[3] = bb[3].max(p[1]);
        }
    }
    bb
}

fn bbox_touch(a: &[f64; 4], b: &[f64; 4]) -> bool {
    let eps = VERTEX_QUANTUM;
    a[0] <= b[2] + eps && b[0] <= a[2] + eps && a[1] <= b[3] + eps && b[1] <= a[3] + eps
}

/// Any vertex of `a` lying on a boundary segment of `b`.
fn vertex_on_boundary(a: &Zone, b: &Zone) -> bool {
    for ring_a in &a.rings {
        for p in ring_a.iter().take(ring_a.len().saturating_sub(1)) {
            for ring_b in &b.rings {
                for seg in ring_b.windows(2) {
                    let (d2, _) = crate::geom::dist2_point_segment(*p, seg[0], seg[1]);
                    if d2.sqrt() <= VERTEX_QUANTUM {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn deviations(values: &[f64]) -> Result<(Vec<f64>, f64), AutocorrError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let devs: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = devs.iter().map(|d| d * d).sum();
    if ss <= 0.0 {
        return Err(AutocorrError::ZeroVariance);
    }
    Ok((devs, ss))
}

fn check_universe(field: &ZoneField, weights: &SpatialWeights) -> Result<(), AutocorrError> {
    if field.ids() != weights.ids() {
        return Err(AutocorrError::ZoneMismatch);
    }
    Ok(())
}

/// Global Moran's I with binary weights.
pub fn global_morans_i(field: &ZoneField, weights: &SpatialWeights) -> Result<f64, AutocorrError> {
    check_universe(field, weights)?;
    let (devs, ss) = deviations(field.values())?;
    let s0 = weights.total_links() as f64;
    if s0 == 0.0 {
        return Err(AutocorrError::NoNeighborPairs);
    }
    Ok(morans_i_from_deviations(&devs, ss, weights))
}

fn morans_i_from_deviations(devs: &[f64], ss: f64, weights: &SpatialWeights) -> f64 {
    let n = devs.len() as f64;
    let s0 = weights.total_links() as f64;
    let mut num = 0.0;
    for (i, di) in devs.iter().enumerate() {
        for &j in weights.neighbors(i) {
            num += di * devs[j];
        }
    }
    n * num / (s0 * ss)
}

#[derive(Debug, Clone, Serialize)]
pub struct GlobalMoranTest {
    pub i: f64,
    pub p: f64,
    pub n_perm: u32,
    pub seed: u64,
}

/// RNG for one permutation replicate: all replicates share the seed and
/// differ only in the stream, so results do not depend on evaluation order.
fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MIN_PERMUTATIONS: u32 = 99;

/// Permutation test for global Moran's I. Values are randomly reassigned
/// to zones `n_perm` times; `p = (1 + #{I_perm >= I_obs}) / (1 + n_perm)`.
pub fn permutation_test_global(
    field: &ZoneField,
    weights: &SpatialWeights,
    n_perm: u32,
    seed: u64,
) -> Result<GlobalMoranTest, AutocorrError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(AutocorrError::TooFewPermutations {
            min: MIN_PERMUTATIONS,
            got: n_perm,
        });
    }
    check_universe(field, weights)?;
    let (devs, ss) = deviations(field.values())?;
    if weights.total_links() == 0 {
        return Err(AutocorrError::NoNeighborPairs);
    }
    let observed = morans_i_from_deviations(&devs, ss, weights);
    let mut exceed = 0u32;
    let mut shuffled = devs.clone();
    for rep in 0..n_perm {
        let mut rng = replicate_rng(seed, rep as u64);
        shuffled.copy_from_slice(&devs);
        shuffled.shuffle(&mut rng);
        let i_perm = morans_i_from_deviations(&shuffled, ss, weights);
        if i_perm >= observed {
            exceed += 1;
        }
    }
    Ok(GlobalMoranTest {
        i: observed,
        p: (1.0 + exceed as f64) / (1.0 + n_perm as f64),
        n_perm,
        seed,
    })
}

/// LISA cluster class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LisaClass {
    #[serde(rename = "HH")]
    HighHigh,
    #[serde(rename = "LL")]
    LowLow,
    #[serde(rename = "HL")]
    HighLow,
    #[serde(rename = "LH")]
    LowHigh,
    #[serde(rename = "not_significant")]
    NotSignificant,
}

impl LisaClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LisaClass::HighHigh => "HH",
            LisaClass::LowLow => "LL",
            LisaClass::HighLow => "HL",
            LisaClass::LowHigh => "LH",
            LisaClass::NotSignificant => "not_significant",
        }
    }

    pub fn parse(token: &str) -> Option<LisaClass> {
        match token.trim() {
            "HH" => Some(LisaClass::HighHigh),
            "LL" => Some(LisaClass::LowLow),
            "HL" => Some(LisaClass::HighLow),
            "LH" => Some(LisaClass::LowHigh),
            "not_significant" => Some(LisaClass::NotSignificant),
            _ => None,
        }
    }

    pub fn is_significant(self) -> bool {
        self != LisaClass::NotSignificant
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LisaResult {
    pub zone_id: String,
    pub value: f64,
    /// Standardized value, population (1/n) standard deviation.
    pub z: f64,
    /// Row-standardized spatial lag of z.
    pub lag: f64,
    pub local_i: f64,
    pub p: f64,
    pub class: LisaClass,
}

/// Local Moran statistics with conditional-permutation significance and
/// HH/LL/HL/LH classification at level `alpha`. Isolates get lag 0 and are
/// never significant.
pub fn lisa(
    field: &ZoneField,
    weights: &SpatialWeights,
    n_perm: u32,
    seed: u64,
    alpha: f64,
) -> Result<Vec<LisaResult>, AutocorrError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(AutocorrError::TooFewPermutations {
            min: MIN_PERMUTATIONS,
            got: n_perm,
        });
    }
    check_universe(field, weights)?;
    let n = field.len();
    let (devs, ss) = deviations(field.values())?;
    let sigma = (ss / n as f64).sqrt();
    let z: Vec<f64> = devs.iter().map(|d| d / sigma).collect();

    let mut results = Vec::with_capacity(n);
    for i in 0..n {
        let neigh = weights.neighbors(i);
        let (lag, local_i, p) = if neigh.is_empty() {
            (0.0, 0.0, 1.0)
        } else {
            let lag = neigh.iter().map(|&j| z[j]).sum::<f64>() / neigh.len() as f64;
            let local_i = z[i] * lag;
            // Conditional permutation: z_i fixed, neighbors drawn from the
            // other n-1 values.
            let mut pool: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| z[j]).collect();
            let k = neigh.len();
            let mut rng = replicate_rng(seed, (1u64 << 32) + i as u64);
            let mut exceed = 0u32;
            for _ in 0..n_perm {
                let (picked, _) = pool.partial_shuffle(&mut rng, k);
                let lag_perm = picked.iter().sum::<f64>() / k as f64;
                let i_perm = z[i] * lag_perm;
                let hit = if local_i >= 0.0 {
                    i_perm >= local_i
                } else {
                    i_perm <= local_i
                };
                if hit {
                    exceed += 1;
                }
            }
            let p = (1.0 + exceed as f64) / (1.0 + n_perm as f64);
            (lag, local_i, p)
        };
        let class = if p > alpha || z[i] == 0.0 || lag == 0.0 {
            LisaClass::NotSignificant
        } else {
            match (z[i] > 0.0, lag > 0.0) {
                (true, true) => LisaClass::HighHigh,
                (false, false) => LisaClass::LowLow,
                (true, false) => LisaClass::HighLow,
                (false, true) => LisaClass::LowHigh,
            }
        };
        results.push(LisaResult {
            zone_id: field.ids()[i].clone(),
            value: field.values()[i],
            z: z[i],
            lag,
            local_i,
            p,
            class,
        });
    }
    Ok(results)
}

/// Zone-wise change between two LISA runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeLabel {
    Unchanged,
    Gained,
    Lost,
    Switched,
}

impl ChangeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ChangeLabel::Unchanged => "unchanged",
            ChangeLabel::Gained => "gained",
            ChangeLabel::Lost => "lost",
            ChangeLabel::Switched => "switched",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterChange {
    pub zone_id: String,
    pub from: LisaClass,
    pub to: LisaClass,
    pub change: ChangeLabel,
}

/// Compare the significant classes of two LISA runs over the same zone
/// universe. Output follows the zone order of `a`.
pub fn compare_clusters(
    a: &[LisaResult],
    b: &[LisaResult],
) -> Result<Vec<ClusterChange>, AutocorrError> {
    if a.len() != b.len() {
        return Err(AutocorrError::MismatchedZoneSets);
    }
    let b_by_zone: HashMap<&str, &LisaResult> =
        b.iter().map(|r| (r.zone_id.as_str(), r)).collect();
    let mut changes = Vec::with_capacity(a.len());
    for ra in a {
        let rb = b_by_zone
            .get(ra.zone_id.as_str())
            .ok_or(AutocorrError::MismatchedZoneSets)?;
        let change = match (ra.class.is_significant(), rb.class.is_significant()) {
            (false, false) => ChangeLabel::Unchanged,
            (false, true) => ChangeLabel::Gained,
            (true, false) => ChangeLabel::Lost,
            (true, true) if ra.class == rb.class => ChangeLabel::Unchanged,
            (true, true) => ChangeLabel::Switched,
        };
        changes.push(ClusterChange {
            zone_id: ra.zone_id.clone(),
            from: ra.class,
            to: rb.class,
            change,
        });
    }
    Ok(changes)
}
