//! Region x age x hour SWI tensors and nonnegative Tucker decomposition.
//!
//! The decomposition minimizes `0.5 * ||G x1 A1 x2 A2 x3 A3 - X||_F^2`
//! subject to nonnegativity of the core `G` and the three factor matrices,
//! using Lee-Seung style multiplicative updates. Each update step solves a
//! nonnegative least-squares subproblem with the other blocks fixed, so
//! the objective is non-increasing across iterations; the solver asserts
//! that invariant as it runs. `restarts` seeded random initializations are
//! fitted and the best objective wins.
//!
//! Core-size selection sweeps the spatial rank with the age/time ranks
//! fixed, scoring each fit by the KL divergence between the (sum-1
//! normalized) input and its reconstruction, and picks the first candidate
//! whose improvement over its predecessor falls below the elbow tolerance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{AgeGroup, CrashRecord, DayClass, ZoneField};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tensor has negative entries")]
    NegativeEntry,
    #[error("tensor is all zero")]
    AllZero,
    #[error("core size {got:?} invalid for tensor dims {dims:?}")]
    InvalidCoreSize { got: [usize; 3], dims: [usize; 3] },
    #[error("pattern index {index} out of range for mode of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("no sweep candidates supplied")]
    EmptyCandidates,
}

/// Dense 3-mode tensor, row-major over (i, j, k).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Tensor3 {
        Tensor3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Tensor3 {
        assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Tensor3 { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Square root of the sum of squared entries (Euclidean norm of the
    /// flattened tensor).
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Divide by the maximum entry so the largest value becomes 1; an
    /// all-zero tensor is left untouched. Returns the scale used.
    pub fn normalize_max(&mut self) -> f64 {
        let m = self.max_entry();
        if m > 0.0 {
            for v in &mut self.data {
                *v /= m;
            }
        }
        m
    }

    /// Mode-n matricization: rows index mode n, columns run over the other
    /// two modes with the later mode fastest.
    pub fn unfold(&self, mode: usize) -> Matrix {
        let [i_n, j_n, k_n] = self.dims;
        match mode {
            0 => {
                let mut m = Matrix::zeros(i_n, j_n * k_n);
                for i in 0..i_n {
                    for j in 0..j_n {
                        for k in 0..k_n {
                            m.set(i, j * k_n + k, self.get(i, j, k));
                        }
                    }
                }
                m
            }
            1 => {
                let mut m = Matrix::zeros(j_n, i_n * k_n);
                for i in 0..i_n {
                    for j in 0..j_n {
                        for k in 0..k_n {
                            m.set(j, i * k_n + k, self.get(i, j, k));
                        }
                    }
                }
                m
            }
            2 => {
                let mut m = Matrix::zeros(k_n, i_n * j_n);
                for i in 0..i_n {
                    for j in 0..j_n {
                        for k in 0..k_n {
                            m.set(k, i * j_n + j, self.get(i, j, k));
                        }
                    }
                }
                m
            }
            _ => panic!("mode out of range: {mode}"),
        }
    }

    /// n-mode tensor-matrix product: the mode-`mode` dimension (which must
    /// equal `m.cols`) is replaced by `m.rows`, with
    /// `out[.., r, ..] = sum_s m[r, s] * self[.., s, ..]`.
    pub fn n_mode_product(&self, m: &Matrix, mode: usize) -> Result<Tensor3, TensorError> {
        assert!(mode < 3, "mode out of range: {mode}");
        if m.cols != self.dims[mode] {
            return Err(TensorError::ShapeMismatch(format!(
                "matrix has {} columns but tensor mode {} has size {}",
                m.cols, mode, self.dims[mode]
            )));
        }
        let mut dims = self.dims;
        dims[mode] = m.rows;
        let mut out = Tensor3::zeros(dims);
        let [i_n, j_n, k_n] = self.dims;
        match mode {
            0 => {
                for r in 0..m.rows {
                    for s in 0..i_n {
                        let w = m.get(r, s);
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..j_n {
                            for k in 0..k_n {
                                let o = out.offset(r, j, k);
                                out.data[o] += w * self.get(s, j, k);
                            }
                        }
                    }
                }
            }
            1 => {
                for r in 0..m.rows {
                    for s in 0..j_n {
                        let w = m.get(r, s);
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..i_n {
                            for k in 0..k_n {
                                let o = out.offset(i, r, k);
                                out.data[o] += w * self.get(i, s, k);
                            }
                        }
                    }
                }
            }
            _ => {
                for r in 0..m.rows {
                    for s in 0..k_n {
                        let w = m.get(r, s);
                        if w == 0.0 {
                            continue;
                        }
                        for i in 0..i_n {
                            for j in 0..j_n {
                                let o = out.offset(i, j, r);
                                out.data[o] += w * self.get(i, j, s);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for s in 0..self.cols {
                let w = self.get(r, s);
                if w == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    let o = r * out.cols + c;
                    out.data[o] += w * other.get(s, c);
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            for c in 0..other.rows {
                let mut acc = 0.0;
                for s in 0..self.cols {
                    acc += self.get(r, s) * other.get(c, s);
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    /// Column `c` as a vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// Build the raw (unnormalized) region x age x hour SWI tensor for one day
/// class. Crashes must already carry a zone id; events in unknown zones or
/// without one are skipped.
pub fn build_tensor_raw(
    crashes: &[CrashRecord],
    zone_ids: &[String],
    day_class: DayClass,
) -> Tensor3 {
    let index: std::collections::HashMap<&str, usize> = zone_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut tensor = Tensor3::zeros([zone_ids.len(), AgeGroup::COUNT, 24]);
    for crash in crashes {
        if crash.day_class() != day_class {
            continue;
        }
        let Some(zone) = crash.zone_id.as_deref().and_then(|z| index.get(z)) else {
            continue;
        };
        let j = crash.age_group.index();
        let k = crash.hour() as usize;
        let o = tensor.offset(*zone, j, k);
        tensor.data[o] += crash.swi_weight() as f64;
    }
    tensor
}

/// [`build_tensor_raw`] followed by max-normalization to [0, 1].
pub fn build_tensor(
    crashes: &[CrashRecord],
    zone_ids: &[String],
    day_class: DayClass,
) -> Tensor3 {
    let mut tensor = build_tensor_raw(crashes, zone_ids, day_class);
    tensor.normalize_max();
    tensor
}

#[derive(Debug, Clone)]
pub struct NtdOptions {
    pub max_iter: usize,
    /// Stop when the relative objective change drops below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Entries of factors and core are clamped to at least this value.
    pub eps: f64,
}

impl Default for NtdOptions {
    fn default() -> Self {
        NtdOptions {
            max_iter: 500,
            tol: 1e-6,
            restarts: 5,
            seed: 0,
            eps: 1e-9,
        }
    }
}

/// Fitted nonnegative Tucker model.
#[derive(Debug, Clone)]
pub struct TuckerModel {
    pub core: Tensor3,
    /// Factor matrices per mode: `factors[n]` is `dims[n] x core_dims[n]`.
    pub factors: [Matrix; 3],
    /// Final value of `0.5 * ||reconstruction - X||_F^2`.
    pub objective: f64,
    /// Iterations used by the winning restart.
    pub iterations: usize,
    pub seed: u64,
    /// Objective after every iteration of the winning restart.
    pub trace: Vec<f64>,
    /// Set when the input was all zero and a zero model was returned.
    pub trivial: bool,
}

impl TuckerModel {
    pub fn reconstruct(&self) -> Tensor3 {
        reconstruct(&self.core, &self.factors)
    }

    pub fn core_dims(&self) -> [usize; 3] {
        self.core.dims()
    }
}

fn reconstruct(core: &Tensor3, factors: &[Matrix; 3]) -> Tensor3 {
    core.n_mode_product(&factors[0], 0)
        .and_then(|t| t.n_mode_product(&factors[1], 1))
        .and_then(|t| t.n_mode_product(&factors[2], 2))
        .expect("factor shapes match core")
}

fn half_sq_residual(reconstruction: &Tensor3, x: &Tensor3) -> f64 {
    let acc: f64 = reconstruction
        .data()
        .iter()
        .zip(x.data())
        .map(|(r, v)| (r - v) * (r - v))
        .sum();
    0.5 * acc
}

/// Guard against 0/0 in multiplicative updates.
const DIV_GUARD: f64 = 1e-12;

/// Nonnegative Tucker decomposition by multiplicative updates with seeded
/// random restarts. Deterministic given `opts.seed`. An all-zero input
/// yields a trivial zero-core model flagged as such.
pub fn ntd(x: &Tensor3, core_size: [usize; 3], opts: &NtdOptions) -> Result<TuckerModel, TensorError> {
    let dims = x.dims();
    if x.data().iter().any(|&v| v < 0.0) {
        return Err(TensorError::NegativeEntry);
    }
    for n in 0..3 {
        if core_size[n] == 0 || core_size[n] > dims[n] {
            return Err(TensorError::InvalidCoreSize {
                got: core_size,
                dims,
            });
        }
    }
    if x.is_all_zero() {
        return Ok(TuckerModel {
            core: Tensor3::zeros(core_size),
            factors: [
                Matrix::zeros(dims[0], core_size[0]),
                Matrix::zeros(dims[1], core_size[1]),
                Matrix::zeros(dims[2], core_size[2]),
            ],
            objective: 0.0,
            iterations: 0,
            seed: opts.seed,
            trace: Vec::new(),
            trivial: true,
        });
    }

    let restarts = opts.restarts.max(1);
    let mut best: Option<TuckerModel> = None;
    for rep in 0..restarts {
        let model = fit_once(x, core_size, opts, rep as u64)?;
        let better = match &best {
            None => true,
            Some(b) => model.objective < b.objective,
        };
        if better {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

fn fit_once(
    x: &Tensor3,
    core_size: [usize; 3],
    opts: &NtdOptions,
    stream: u64,
) -> Result<TuckerModel, TensorError> {
    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, eps: f64) -> Matrix {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(eps..1.0)).collect();
        Matrix::from_vec(rows, cols, data)
    }

    let dims = x.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);

    let mut factors = [
        random_matrix(&mut rng, dims[0], core_size[0], opts.eps),
        random_matrix(&mut rng, dims[1], core_size[1], opts.eps),
        random_matrix(&mut rng, dims[2], core_size[2], opts.eps),
    ];
    let mut core = {
        let data: Vec<f64> = (0..core_size[0] * core_size[1] * core_size[2])
            .map(|_| rng.random_range(opts.eps..1.0))
            .collect();
        Tensor3::from_vec(core_size, data)
    };

    // Scale the core so the initial reconstruction norm matches ||X||_F.
    let recon = reconstruct(&core, &factors);
    let r_norm = recon.frobenius_norm();
    if r_norm > 0.0 {
        let scale = x.frobenius_norm() / r_norm;
        for v in core.data_mut() {
            *v = (*v * scale).max(opts.eps);
        }
    }

    let mut objective = half_sq_residual(&reconstruct(&core, &factors), x);
    let mut trace = Vec::with_capacity(opts.max_iter.min(1024));
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        // Factor updates: A_n <- A_n .* (X_(n) B^T) ./ (A_n B B^T) with
        // B the mode-n unfolding of the core expanded by the other factors.
        for n in 0..3 {
            let mut expanded = core.clone();
            for m in 0..3 {
                if m != n {
                    expanded = expanded.n_mode_product(&factors[m], m)?;
                }
            }
            let b = expanded.unfold(n);
            let x_n = x.unfold(n);
            let numer = x_n.matmul_t(&b);
            let bbt = b.matmul_t(&b);
            let denom = factors[n].matmul(&bbt);
            let a = &mut factors[n];
            for r in 0..a.rows {
                for c in 0..a.cols {
                    let v = a.get(r, c) * numer.get(r, c) / (denom.get(r, c) + DIV_GUARD);
                    a.set(r, c, v.max(opts.eps));
                }
            }
        }

        // Core update: G <- G .* (X x A^T) ./ (R x A^T).
        let transposed = [
            factors[0].transpose(),
            factors[1].transpose(),
            factors[2].transpose(),
        ];
        let project = |t: &Tensor3| -> Result<Tensor3, TensorError> {
            t.n_mode_product(&transposed[0], 0)
                .and_then(|t| t.n_mode_product(&transposed[1], 1))
                .and_then(|t| t.n_mode_product(&transposed[2], 2))
        };
        let numer = project(x)?;
        let recon = reconstruct(&core, &factors);
        let denom = project(&recon)?;
        for ((g, nu), de) in core
            .data_mut()
            .iter_mut()
            .zip(numer.data())
            .zip(denom.data())
        {
            *g = (*g * nu / (de + DIV_GUARD)).max(opts.eps);
        }

        let new_objective = half_sq_residual(&reconstruct(&core, &factors), x);
        // Multiplicative updates never increase the objective; tiny slack
        // absorbs floating-point noise.
        assert!(
            new_objective <= objective * (1.0 + 1e-9) + 1e-12,
            "objective increased: {objective} -> {new_objective}"
        );
        iterations += 1;
        trace.push(new_objective);
        let rel_change = (objective - new_objective).abs() / objective.max(f64::MIN_POSITIVE);
        objective = new_objective;
        if rel_change < opts.tol {
            break;
        }
    }

    Ok(TuckerModel {
        core,
        factors,
        objective,
        iterations,
        seed: opts.seed,
        trace,
        trivial: false,
    })
}

/// KL divergence `D(M || N)` between two nonnegative tensors of the same
/// shape, both normalized to sum 1 first. `eps = 1e-12` is added to every
/// entry of N inside the log; terms with `m = 0` contribute nothing.
pub fn kl_divergence(m: &Tensor3, n: &Tensor3) -> Result<f64, TensorError> {
    if m.dims() != n.dims() {
        return Err(TensorError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            m.dims(),
            n.dims()
        )));
    }
    if m.data().iter().any(|&v| v < 0.0) || n.data().iter().any(|&v| v < 0.0) {
        return Err(TensorError::NegativeEntry);
    }
    let m_sum = m.sum();
    let n_sum = n.sum();
    if m_sum <= 0.0 || n_sum <= 0.0 {
        return Err(TensorError::AllZero);
    }
    const EPS: f64 = 1e-12;
    let mut d = 0.0;
    for (&mv, &nv) in m.data().iter().zip(n.data()) {
        let p = mv / m_sum;
        if p > 0.0 {
            let q = nv / n_sum + EPS;
            d += p * (p / q).ln();
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub candidate: usize,
    pub kl: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct CoreSweep {
    pub selected: [usize; 3],
    pub rows: Vec<SweepRow>,
}

/// Sweep the spatial core size over `spatial_candidates` (age/time ranks
/// fixed), score each fit by `D_KL(X || reconstruction)` and select the
/// first candidate whose improvement over its predecessor is below
/// `elbow_tol`. Falls back to the last candidate when the curve never
/// flattens. Candidates are evaluated in ascending order.
pub fn select_core_size(
    x: &Tensor3,
    spatial_candidates: &[usize],
    age_size: usize,
    time_size: usize,
    elbow_tol: f64,
    opts: &NtdOptions,
) -> Result<CoreSweep, TensorError> {
    if spatial_candidates.is_empty() {
        return Err(TensorError::EmptyCandidates);
    }
    let mut candidates = spatial_candidates.to_vec();
    candidates.sort_unstable();
    candidates.dedup();

    let mut rows = Vec::with_capacity(candidates.len());
    for &c in &candidates {
        let model = ntd(x, [c, age_size, time_size], opts)?;
        let kl = kl_divergence(x, &model.reconstruct())?;
        rows.push(SweepRow {
            candidate: c,
            kl,
            objective: model.objective,
        });
    }
    let mut selected = *candidates.last().unwrap();
    for i in 1..rows.len() {
        if rows[i - 1].kl - rows[i].kl < elbow_tol {
            selected = rows[i].candidate;
            break;
        }
    }
    Ok(CoreSweep {
        selected: [selected, age_size, time_size],
        rows,
    })
}

/// Hour windows used to classify temporal patterns; half-open `[start,
/// end)` ranges checked in order morning, afternoon, evening.
#[derive(Debug, Clone)]
pub struct PeakWindows {
    pub morning: (u32, u32),
    pub afternoon: (u32, u32),
    pub evening: (u32, u32),
}

impl Default for PeakWindows {
    fn default() -> Self {
        PeakWindows {
            morning: (6, 10),
            afternoon: (15, 19),
            evening: (19, 23),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimePatternClass {
    #[serde(rename = "morning-peak")]
    MorningPeak,
    #[serde(rename = "afternoon-peak")]
    AfternoonPeak,
    #[serde(rename = "evening-peak")]
    EveningPeak,
    #[serde(rename = "off-peak")]
    OffPeak,
}

impl TimePatternClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TimePatternClass::MorningPeak => "morning-peak",
            TimePatternClass::AfternoonPeak => "afternoon-peak",
            TimePatternClass::EveningPeak => "evening-peak",
            TimePatternClass::OffPeak => "off-peak",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TemporalPattern {
    pub column: usize,
    /// Argmax hour(s); more than one entry means a tie.
    pub peak_hours: Vec<u32>,
    pub class: TimePatternClass,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgePattern {
    pub column: usize,
    /// Dominant age band(s); ties reported as sets.
    pub dominant: Vec<AgeGroup>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpatialPattern {
    pub column: usize,
    /// Top zones by loading, descending.
    pub top_zones: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoreSlice {
    pub age_pattern: usize,
    /// spatial x temporal matrix of core values for this age pattern.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternReport {
    pub temporal: Vec<TemporalPattern>,
    pub age: Vec<AgePattern>,
    pub spatial: Vec<SpatialPattern>,
    pub core_slices: Vec<CoreSlice>,
}

fn argmax_set(values: &[f64]) -> Vec<usize> {
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v > max {
            max = v;
        }
    }
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == max)
        .map(|(i, _)| i)
        .collect()
}

/// Classify every factor column of a fitted model. Temporal columns are
/// labeled by their argmax hour against the peak windows (ties fall back
/// to off-peak and are reported); age columns by their dominant band(s);
/// spatial columns by their `top_q` zones. The core is sliced along the
/// age mode into spatial x temporal matrices.
pub fn extract_patterns(
    model: &TuckerModel,
    zone_ids: &[String],
    top_q: usize,
    windows: &PeakWindows,
) -> PatternReport {
    let a_spatial = &model.factors[0];
    let a_age = &model.factors[1];
    let a_time = &model.factors[2];

    let temporal = (0..a_time.cols)
        .map(|c| {
            let col = a_time.column(c);
            let peaks = argmax_set(&col);
            let class = if peaks.len() == 1 {
                let h = peaks[0] as u32;
                if h >= windows.morning.0 && h < windows.morning.1 {
                    TimePatternClass::MorningPeak
                } else if h >= windows.afternoon.0 && h < windows.afternoon.1 {
                    TimePatternClass::AfternoonPeak
                } else if h >= windows.evening.0 && h < windows.evening.1 {
                    TimePatternClass::EveningPeak
                } else {
                    TimePatternClass::OffPeak
                }
            } else {
                TimePatternClass::OffPeak
            };
            TemporalPattern {
                column: c,
                peak_hours: peaks.into_iter().map(|h| h as u32).collect(),
                class,
            }
        })
        .collect();

    let age = (0..a_age.cols)
        .map(|c| {
            let col = a_age.column(c);
            AgePattern {
                column: c,
                dominant: argmax_set(&col)
                    .into_iter()
                    .map(|i| AgeGroup::ALL[i])
                    .collect(),
            }
        })
        .collect();

    let spatial = (0..a_spatial.cols)
        .map(|c| {
            let col = a_spatial.column(c);
            let mut order: Vec<usize> = (0..col.len()).collect();
            order.sort_by(|&l, &r| col[r].total_cmp(&col[l]).then_with(|| l.cmp(&r)));
            order.truncate(top_q.min(col.len()));
            SpatialPattern {
                column: c,
                top_zones: order
                    .into_iter()
                    .map(|i| (zone_ids[i].clone(), col[i]))
                    .collect(),
            }
        })
        .collect();

    let [j1, j2, j3] = model.core.dims();
    let core_slices = (0..j2)
        .map(|a| CoreSlice {
            age_pattern: a,
            matrix: (0..j1)
                .map(|s| (0..j3).map(|t| model.core.get(s, a, t)).collect())
                .collect(),
        })
        .collect();

    PatternReport {
        temporal,
        age,
        spatial,
        core_slices,
    }
}

/// Project one (age pattern, time pattern) cell of the core back onto
/// zones: `field_i = sum_s A1[i, s] * G[s, age_pattern, time_pattern]`.
/// This field is the response input for pattern-specific detector runs.
pub fn pattern_zone_field(
    model: &TuckerModel,
    zone_ids: &[String],
    age_pattern: usize,
    time_pattern: usize,
) -> Result<ZoneField, TensorError> {
    let [j1, j2, j3] = model.core.dims();
    if age_pattern >= j2 {
        return Err(TensorError::IndexOutOfRange {
            index: age_pattern,
            size: j2,
        });
    }
    if time_pattern >= j3 {
        return Err(TensorError::IndexOutOfRange {
            index: time_pattern,
            size: j3,
        });
    }
    let a1 = &model.factors[0];
    let values: Vec<f64> = (0..a1.rows)
        .map(|i| {
            (0..j1)
                .map(|s| a1.get(i, s) * model.core.get(s, age_pattern, time_pattern))
                .sum()
        })
        .collect();
    Ok(ZoneField::new(zone_ids.to_vec(), values))
}
