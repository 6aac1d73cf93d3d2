//! Geographical detector: Jenks natural-breaks stratification plus factor
//! and interaction detectors over a zone-level response field.
//!
//! The power determinant (PD, the q statistic) of a stratification is
//!
//! `PD = 1 - sum_h N_h sigma_h^2 / (N sigma^2)`
//!
//! with population variances throughout: the share of the response variance
//! explained by the strata. The interaction detector evaluates the
//! cross-product stratification of two factors and classifies the result
//! against the individual PD values. Significance is a permutation test
//! (the response is shuffled over zones), which is distribution-free and
//! exactly reproducible from a seed; this deviates from the noncentral-F
//! test of the classical geodetector literature.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{distinct} distinct value(s) cannot fill {k} classes")]
    TooFewDistinct { distinct: usize, k: usize },
    #[error("response field has zero variance")]
    ZeroVariance,
    #[error("stratum {0} is empty (re-stratify with smaller k)")]
    EmptyStratum(usize),
    #[error("response and strata cover different zone counts ({y} vs {strata})")]
    LengthMismatch { y: usize, strata: usize },
    #[error("need at least {min} permutations, got {got}")]
    TooFewPermutations { min: u32, got: u32 },
    #[error("values must be finite")]
    NonFiniteValue,
}

/// Jenks natural breaks: the contiguous k-partition of the sorted values
/// minimizing total within-class sum of squared deviations, found exactly
/// by dynamic programming over runs of equal values. Returns the k-1
/// interior boundaries as data values (upper bound of each class). Cost
/// ties resolve to the lexicographically smallest break positions.
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<Vec<f64>, DetectorError> {
    if k == 0 {
        return Err(DetectorError::InvalidK);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DetectorError::NonFiniteValue);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    // Collapse into runs of equal values; classes never split a run, which
    // keeps the value-based labeling rule consistent with the partition
    // (an optimal partition always exists that does not straddle ties).
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in &sorted {
        match blocks.last_mut() {
            Some((bv, count)) if *bv == v => *count += 1,
            _ => blocks.push((v, 1)),
        }
    }
    let n_blocks = blocks.len();
    if n_blocks < k {
        return Err(DetectorError::TooFewDistinct {
            distinct: n_blocks,
            k,
        });
    }

    // Weighted prefix sums over blocks.
    let mut pre_w = vec![0.0; n_blocks + 1];
    let mut pre_s = vec![0.0; n_blocks + 1];
    let mut pre_s2 = vec![0.0; n_blocks + 1];
    for (b, &(v, c)) in blocks.iter().enumerate() {
        let w = c as f64;
        pre_w[b + 1] = pre_w[b] + w;
        pre_s[b + 1] = pre_s[b] + w * v;
        pre_s2[b + 1] = pre_s2[b] + w * v * v;
    }
    // Within-class SS of blocks lo..hi (half-open).
    let ssd = |lo: usize, hi: usize| -> f64 {
        let w = pre_w[hi] - pre_w[lo];
        let s = pre_s[hi] - pre_s[lo];
        let s2 = pre_s2[hi] - pre_s2[lo];
        (s2 - s * s / w).max(0.0)
    };

    // suffix[j][i] = minimal cost of splitting blocks i.. into j classes.
    let mut suffix = vec![vec![f64::INFINITY; n_blocks + 1]; k + 1];
    for i in 0..n_blocks {
        suffix[1][i] = ssd(i, n_blocks);
    }
    for j in 2..=k {
        for i in 0..n_blocks {
            // First class covers blocks i..t (at least one block, leaving
            // enough blocks for the remaining j-1 classes).
            let max_t = n_blocks - (j - 1);
            let mut best = f64::INFINITY;
            for t in (i + 1)..=max_t {
                let cost = ssd(i, t) + suffix[j - 1][t];
                if cost < best {
                    best = cost;
                }
            }
            suffix[j][i] = best;
        }
    }

    // Forward reconstruction, taking the smallest boundary on ties so the
    // break vector is lexicographically smallest.
    let mut breaks = Vec::with_capacity(k - 1);
    let mut i = 0;
    for j in (2..=k).rev() {
        let max_t = n_blocks - (j - 1);
        let target = suffix[j][i];
        let mut chosen = max_t;
        for t in (i + 1)..=max_t {
            if ssd(i, t) + suffix[j - 1][t] <= target {
                chosen = t;
                break;
            }
        }
        breaks.push(blocks[chosen - 1].0);
        i = chosen;
    }
    Ok(breaks)
}

/// Label each value by its stratum: stratum `h` iff
/// `breaks[h-1] < value <= breaks[h]`.
pub fn stratify(values: &[f64], breaks: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| breaks.partition_point(|&b| b < v))
        .collect()
}

/// Per-zone stratum labels for one factor.
#[derive(Debug, Clone, Serialize)]
pub struct StrataAssignment {
    pub factor: String,
    /// Labels in 0..n_strata, every stratum nonempty.
    pub labels: Vec<usize>,
    pub n_strata: usize,
    /// Interior break values when the strata came from Jenks; empty for
    /// externally supplied labelings.
    pub breaks: Vec<f64>,
}

impl StrataAssignment {
    /// Stratify `values` by Jenks natural breaks into `k` classes.
    pub fn from_values(
        factor: &str,
        values: &[f64],
        k: usize,
    ) -> Result<StrataAssignment, DetectorError> {
        let breaks = jenks_breaks(values, k)?;
        let labels = stratify(values, &breaks);
        Ok(StrataAssignment {
            factor: factor.to_string(),
            labels,
            n_strata: k,
            breaks,
        })
    }

    /// Adopt an arbitrary labeling, compacting labels so that every
    /// stratum in 0..n_strata is nonempty.
    pub fn from_labels(factor: &str, labels: &[usize]) -> StrataAssignment {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let remap: BTreeMap<usize, usize> = distinct
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        StrataAssignment {
            factor: factor.to_string(),
            labels: labels.iter().map(|l| remap[l]).collect(),
            n_strata: distinct.len(),
            breaks: Vec::new(),
        }
    }

    /// Cross-product stratification: observed (label_a, label_b) pairs
    /// become the strata; unobserved pairs are dropped.
    pub fn cross(&self, other: &StrataAssignment) -> StrataAssignment {
        assert_eq!(self.labels.len(), other.labels.len());
        let mut pair_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(self.labels.len());
        for (&la, &lb) in self.labels.iter().zip(&other.labels) {
            let next = pair_ids.len();
            let id = *pair_ids.entry((la, lb)).or_insert(next);
            labels.push(id);
        }
        StrataAssignment {
            factor: format!("{}&{}", self.factor, other.factor),
            n_strata: pair_ids.len(),
            labels,
            breaks: Vec::new(),
        }
    }
}

/// Power determinant of a stratification over the response `y`.
pub fn factor_detector(y: &[f64], strata: &StrataAssignment) -> Result<f64, DetectorError> {
    if y.len() != strata.labels.len() {
        return Err(DetectorError::LengthMismatch {
            y: y.len(),
            strata: strata.labels.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DetectorError::NonFiniteValue);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst <= 0.0 {
        return Err(DetectorError::ZeroVariance);
    }
    let l = strata.n_strata;
    let mut count = vec![0usize; l];
    let mut sum = vec![0.0; l];
    for (&label, &v) in strata.labels.iter().zip(y) {
        count[label] += 1;
        sum[label] += v;
    }
    if let Some(h) = count.iter().position(|&c| c == 0) {
        return Err(DetectorError::EmptyStratum(h));
    }
    let mut ssw = 0.0;
    let means: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| s / c as f64)
        .collect();
    for (&label, &v) in strata.labels.iter().zip(y) {
        let d = v - means[label];
        ssw += d * d;
    }
    Ok((1.0 - ssw / sst).clamp(0.0, 1.0))
}

const MIN_PERMUTATIONS: u32 = 99;

fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Permutation significance of a PD value: the response is shuffled over
/// zones `n_perm` times; `p = (1 + #{PD_perm >= PD_obs}) / (1 + n_perm)`.
pub fn pd_significance(
    y: &[f64],
    strata: &StrataAssignment,
    n_perm: u32,
    seed: u64,
) -> Result<f64, DetectorError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(DetectorError::TooFewPermutations {
            min: MIN_PERMUTATIONS,
            got: n_perm,
        });
    }
    let observed = factor_detector(y, strata)?;
    let mut shuffled = y.to_vec();
    let mut exceed = 0u32;
    for rep in 0..n_perm {
        let mut rng = replicate_rng(seed, rep as u64);
        shuffled.copy_from_slice(y);
        shuffled.shuffle(&mut rng);
        let pd = factor_detector(&shuffled, strata)?;
        if pd >= observed {
            exceed += 1;
        }
    }
    Ok((1.0 + exceed as f64) / (1.0 + n_perm as f64))
}

/// How the joint effect of two factors compares to their individual
/// effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionClass {
    WeakenNonlinear,
    WeakenUnivariate,
    EnhanceBivariate,
    Independent,
    EnhanceNonlinear,
}

impl InteractionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionClass::WeakenNonlinear => "weaken_nonlinear",
            InteractionClass::WeakenUnivariate => "weaken_univariate",
            InteractionClass::EnhanceBivariate => "enhance_bivariate",
            InteractionClass::Independent => "independent",
            InteractionClass::EnhanceNonlinear => "enhance_nonlinear",
        }
    }
}

impl fmt::Display for InteractionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const INDEPENDENCE_TOL: f64 = 1e-9;

/// Total classification of an interaction triple. Exact arithmetic
/// guarantees `pd_ab >= max(pd_a, pd_b)` (refinement), so the weaken
/// branches only trigger on genuinely smaller joint PD.
pub fn classify_interaction(pd_a: f64, pd_b: f64, pd_ab: f64) -> InteractionClass {
    let sum = pd_a + pd_b;
    let min = pd_a.min(pd_b);
    let max = pd_a.max(pd_b);
    if (pd_ab - sum).abs() <= INDEPENDENCE_TOL {
        InteractionClass::Independent
    } else if pd_ab > sum {
        InteractionClass::EnhanceNonlinear
    } else if pd_ab < min {
        InteractionClass::WeakenNonlinear
    } else if pd_ab < max {
        InteractionClass::WeakenUnivariate
    } else {
        InteractionClass::EnhanceBivariate
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Interaction {
    pub pd_a: f64,
    pub pd_b: f64,
    pub pd_ab: f64,
    pub class: InteractionClass,
}

/// Joint PD of two factors via their cross-product stratification.
pub fn interaction_detector(
    y: &[f64],
    strata_a: &StrataAssignment,
    strata_b: &StrataAssignment,
) -> Result<Interaction, DetectorError> {
    let pd_a = factor_detector(y, strata_a)?;
    let pd_b = factor_detector(y, strata_b)?;
    let cross = strata_a.cross(strata_b);
    let pd_ab = factor_detector(y, &cross)?;
    Ok(Interaction {
        pd_a,
        pd_b,
        pd_ab,
        class: classify_interaction(pd_a, pd_b, pd_ab),
    })
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    /// Jenks class count per factor unless overridden.
    pub default_k: usize,
    pub k_overrides: BTreeMap<String, usize>,
    pub n_perm: u32,
    pub seed: u64,
    /// Keep only the top-m interactions after ranking; `None` keeps all.
    pub top_interactions: Option<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            default_k: 5,
            k_overrides: BTreeMap::new(),
            n_perm: 999,
            seed: 0,
            top_interactions: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorOutcome {
    pub factor: String,
    pub pd: f64,
    pub p: f64,
    pub rank: usize,
    pub k: usize,
    pub breaks: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InteractionOutcome {
    pub factor_a: String,
    pub factor_b: String,
    pub pd_a: f64,
    pub pd_b: f64,
    pub pd_ab: f64,
    pub p: f64,
    pub class: InteractionClass,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedFactor {
    pub factor: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub factors: Vec<FactorOutcome>,
    pub interactions: Vec<InteractionOutcome>,
    pub skipped: Vec<SkippedFactor>,
}

/// Stratify every factor by Jenks breaks, run the factor detector on each
/// and the interaction detector on every pair, and rank both lists by PD.
/// Factors that cannot be stratified or evaluated are reported as skipped.
pub fn run_detector_suite(
    y: &[f64],
    factors: &[(String, Vec<f64>)],
    config: &SuiteConfig,
) -> Result<SuiteResult, DetectorError> {
    let mut sorted: Vec<&(String, Vec<f64>)> = factors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let mut skipped = Vec::new();
    let mut evaluated: Vec<(String, StrataAssignment, f64, f64)> = Vec::new();
    for (fi, (name, values)) in sorted.iter().enumerate() {
        let k = *config.k_overrides.get(name).unwrap_or(&config.default_k);
        let result = StrataAssignment::from_values(name, values, k).and_then(|strata| {
            let pd = factor_detector(y, &strata)?;
            let p = pd_significance(y, &strata, config.n_perm, config.seed ^ (fi as u64))?;
            Ok((strata, pd, p))
        });
        match result {
            Ok((strata, pd, p)) => evaluated.push((name.clone(), strata, pd, p)),
            Err(e) => skipped.push(SkippedFactor {
                factor: name.clone(),
                reason: e.to_string(),
            }),
        }
    }

    let mut factor_rows: Vec<FactorOutcome> = evaluated
        .iter()
        .map(|(name, strata, pd, p)| FactorOutcome {
            factor: name.clone(),
            pd: *pd,
            p: *p,
            rank: 0,
            k: strata.n_strata,
            breaks: strata.breaks.clone(),
        })
        .collect();
    factor_rows.sort_by(|a, b| b.pd.total_cmp(&a.pd).then_with(|| a.factor.cmp(&b.factor)));
    for (i, row) in factor_rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }

    let mut interaction_rows = Vec::new();
    for i in 0..evaluated.len() {
        for j in (i + 1)..evaluated.len() {
            let (name_a, strata_a, pd_a, _) = &evaluated[i];
            let (name_b, strata_b, pd_b, _) = &evaluated[j];
            let cross = strata_a.cross(strata_b);
            match factor_detector(y, &cross) {
                Ok(pd_ab) => {
                    let p = pd_significance(
                        y,
                        &cross,
                        config.n_perm,
                        config.seed ^ (((i as u64) << 16) | j as u64) ^ 0x9e37,
                    )?;
                    interaction_rows.push(InteractionOutcome {
                        factor_a: name_a.clone(),
                        factor_b: name_b.clone(),
                        pd_a: *pd_a,
                        pd_b: *pd_b,
                        pd_ab,
                        p,
                        class: classify_interaction(*pd_a, *pd_b, pd_ab),
                        rank: 0,
                    });
                }
                Err(e) => skipped.push(SkippedFactor {
                    factor: format!("{name_a}&{name_b}"),
                    reason: e.to_string(),
                }),
            }
        }
    }
    interaction_rows.sort_by(|a, b| {
        b.pd_ab
            .total_cmp(&a.pd_ab)
            .then_with(|| a.factor_a.cmp(&b.factor_a))
            .then_with(|| a.factor_b.cmp(&b.factor_b))
    });
    for (i, row) in interaction_rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    if let Some(m) = config.top_interactions {
        interaction_rows.truncate(m);
    }

    Ok(SuiteResult {
        factors: factor_rows,
        interactions: interaction_rows,
        skipped,
    })
}
