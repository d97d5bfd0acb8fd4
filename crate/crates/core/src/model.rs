//! Process model: parameters, event histories, binned counts and the
//! quantities derived from them (intensity, compensator, branching ratio).
//!
//! Process indices are zero-based throughout the library. Matrix entry
//! `(p, m)` of `alpha` and `beta` describes the effect of an event in
//! process `m` on the intensity of process `p`.

use nalgebra::{DMatrix, DVector};

use crate::error::{HawkesError, Result};

/// Margin used when a caller asks for a strictly stationary parameter set.
pub const STATIONARITY_MARGIN: f64 = 1e-6;

/// Parameters `{nu, alpha, beta}` of a P-variate Hawkes process with
/// exponential kernel `alpha[p,m] * exp(-beta[p,m] * u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub nu: DVector<f64>,
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

impl ModelParams {
    /// Validates dimensions, finiteness and the sign constraints
    /// `nu > 0`, `alpha >= 0`, `beta > 0`.
    pub fn new(nu: DVector<f64>, alpha: DMatrix<f64>, beta: DMatrix<f64>) -> Result<Self> {
        let params = Self::new_unchecked(nu, alpha, beta)?;
        if params.nu.iter().any(|&v| v <= 0.0) {
            return Err(HawkesError::arg("background rates nu must be strictly positive"));
        }
        if params.alpha.iter().any(|&v| v < 0.0) {
            return Err(HawkesError::arg("excitation alpha must be non-negative"));
        }
        if params.beta.iter().any(|&v| v <= 0.0) {
            return Err(HawkesError::arg("decay beta must be strictly positive"));
        }
        Ok(params)
    }

    /// Checks only dimensions and finiteness. Used for degenerate inputs such
    /// as a zero background rate, and for raw estimates that may be negative.
    pub fn new_unchecked(
        nu: DVector<f64>,
        alpha: DMatrix<f64>,
        beta: DMatrix<f64>,
    ) -> Result<Self> {
        let p = nu.len();
        if p == 0 {
            return Err(HawkesError::arg("dimension P must be at least 1"));
        }
        if alpha.shape() != (p, p) || beta.shape() != (p, p) {
            return Err(HawkesError::arg(format!(
                "dimension mismatch: nu has length {p}, alpha is {:?}, beta is {:?}",
                alpha.shape(),
                beta.shape()
            )));
        }
        let all_finite = nu.iter().chain(alpha.iter()).chain(beta.iter()).all(|v| v.is_finite());
        if !all_finite {
            return Err(HawkesError::arg("parameters must be finite"));
        }
        Ok(Self { nu, alpha, beta })
    }

    /// Builds parameters from row-major slices.
    pub fn from_rows(nu: &[f64], alpha: &[f64], beta: &[f64]) -> Result<Self> {
        let p = nu.len();
        if alpha.len() != p * p || beta.len() != p * p {
            return Err(HawkesError::arg("alpha and beta need P*P row-major entries"));
        }
        Self::new(
            DVector::from_column_slice(nu),
            DMatrix::from_row_slice(p, p, alpha),
            DMatrix::from_row_slice(p, p, beta),
        )
    }

    /// Number of processes P.
    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// Length of the flattened parameter vector, `P (1 + 2P)`.
    pub fn num_params(&self) -> usize {
        flat_len(self.dim())
    }

    /// Flattened order: `nu_1..nu_P`, `alpha` row-major, `beta` row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let p = self.dim();
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.nu.iter());
        for i in 0..p {
            for j in 0..p {
                out.push(self.alpha[(i, j)]);
            }
        }
        for i in 0..p {
            for j in 0..p {
                out.push(self.beta[(i, j)]);
            }
        }
        out
    }

    /// Inverse of [`ModelParams::to_flat`]; only dimensions and finiteness are checked.
    pub fn from_flat(p: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != flat_len(p) {
            return Err(HawkesError::arg(format!(
                "expected {} flattened parameters for P = {p}, got {}",
                flat_len(p),
                flat.len()
            )));
        }
        let nu = DVector::from_column_slice(&flat[..p]);
        let alpha = DMatrix::from_row_slice(p, p, &flat[p..p + p * p]);
        let beta = DMatrix::from_row_slice(p, p, &flat[p + p * p..]);
        Self::new_unchecked(nu, alpha, beta)
    }

    /// `gamma = alpha ⊘ beta`.
    pub fn branching_ratio(&self) -> DMatrix<f64> {
        self.alpha.component_div(&self.beta)
    }

    /// Spectral radius of the branching ratio.
    pub fn branching_radius(&self) -> f64 {
        spectral_radius(&self.branching_ratio()).unwrap_or(f64::INFINITY)
    }

    pub fn is_stationary(&self) -> bool {
        self.branching_radius() < 1.0
    }

    /// Returns a stationarity error unless `rho(gamma) < 1`.
    pub fn ensure_stationary(&self) -> Result<()> {
        let radius = self.branching_radius();
        if radius < 1.0 {
            Ok(())
        } else {
            Err(HawkesError::Stationarity { radius })
        }
    }

    /// Flat index of `alpha[row, col]` for dimension `p`.
    pub fn alpha_index(p: usize, row: usize, col: usize) -> usize {
        p + row * p + col
    }
    /// Flat index of `beta[row, col]` for dimension `p`.
    pub fn beta_index(p: usize, row: usize, col: usize) -> usize {
        p + p * p + row * p + col
    }

    /// Human-readable parameter names in flattened order, one-based
    /// (`nu_1`, `alpha_1_2`, ...).
    pub fn param_names(p: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(flat_len(p));
        names.extend((1..=p).map(|i| format!("nu_{i}")));
        for prefix in ["alpha", "beta"] {
            for i in 1..=p {
                for j in 1..=p {
                    names.push(format!("{prefix}_{i}_{j}"));
                }
            }
        }
        names
    }
}

pub fn flat_len(p: usize) -> usize {
    p * (1 + 2 * p)
}

/// `gamma = alpha ⊘ beta` for a parameter set.
pub fn branching_ratio(params: &ModelParams) -> DMatrix<f64> {
    params.branching_ratio()
}

/// Largest eigenvalue modulus of a square matrix.
///
/// P = 1 and P = 2 use closed forms; larger matrices go through the real
/// Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(HawkesError::arg(format!("spectral radius needs a square matrix, got {rows}x{cols}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HawkesError::arg("spectral radius needs finite entries"));
    }
    match rows {
        0 => Ok(0.0),
        1 => Ok(m[(0, 0)].abs()),
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                Ok((half_tr + s).abs().max((half_tr - s).abs()))
            } else {
                // complex pair: |lambda|^2 = det
                Ok((a * d - b * c).abs().sqrt())
            }
        }
        _ => {
            let eig = m.clone().complex_eigenvalues();
            Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
        }
    }
}

/// Solves `(I - gamma) lambda = nu` for the stationary mean intensity.
pub fn stationary_intensity(params: &ModelParams) -> Result<DVector<f64>> {
    params.ensure_stationary()?;
    let p = params.dim();
    let system = DMatrix::<f64>::identity(p, p) - params.branching_ratio();
    system
        .lu()
        .solve(&params.nu)
        .ok_or_else(|| HawkesError::Numerical("singular system I - gamma".into()))
}

/// Exact (latent) event times of each process on `[0, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    times: Vec<Vec<f64>>,
    horizon: f64,
}

impl EventSequence {
    pub fn new(times: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(HawkesError::arg("horizon must be finite and positive"));
        }
        if times.is_empty() {
            return Err(HawkesError::arg("an event sequence needs at least one process"));
        }
        for (p, list) in times.iter().enumerate() {
            for (k, &t) in list.iter().enumerate() {
                if !(t >= 0.0 && t < horizon) {
                    return Err(HawkesError::arg(format!(
                        "event {t} of process {p} lies outside [0, {horizon})"
                    )));
                }
                if k > 0 && t <= list[k - 1] {
                    return Err(HawkesError::arg(format!(
                        "events of process {p} are not strictly increasing at index {k}"
                    )));
                }
            }
        }
        Ok(Self { times, horizon })
    }

    pub fn empty(dim: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![Vec::new(); dim], horizon)
    }

    pub fn dim(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[Vec<f64>] {
        &self.times
    }

    pub fn process(&self, p: usize) -> &[f64] {
        &self.times[p]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.times.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    pub fn into_times(self) -> Vec<Vec<f64>> {
        self.times
    }
}

/// Event counts per bin: `K` rows of `P` counts, bin width `delta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedCounts {
    counts: Vec<u64>,
    bins: usize,
    dim: usize,
    delta_bits: u64,
}

impl BinnedCounts {
    /// `counts` is row-major with `bins * dim` entries.
    pub fn new(counts: Vec<u64>, bins: usize, dim: usize, delta: f64) -> Result<Self> {
        if dim == 0 || bins == 0 {
            return Err(HawkesError::arg("binned counts need at least one bin and one process"));
        }
        if counts.len() != bins * dim {
            return Err(HawkesError::arg(format!(
                "expected {} counts for {bins} bins x {dim} processes, got {}",
                bins * dim,
                counts.len()
            )));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(HawkesError::arg("bin width must be finite and positive"));
        }
        Ok(Self { counts, bins, dim, delta_bits: delta.to_bits() })
    }

    pub fn from_rows(rows: &[Vec<u64>], delta: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(HawkesError::arg("ragged count rows"));
        }
        Self::new(rows.concat(), rows.len(), dim, delta)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        f64::from_bits(self.delta_bits)
    }

    /// `K * delta`.
    pub fn horizon(&self) -> f64 {
        self.bins as f64 * self.delta()
    }

    pub fn get(&self, bin: usize, p: usize) -> u64 {
        self.counts[bin * self.dim + p]
    }

    pub fn row(&self, bin: usize) -> &[u64] {
        &self.counts[bin * self.dim..(bin + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.dim)
    }

    pub fn column_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.dim];
        for row in self.rows() {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        totals
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    /// Left edge of bin `j`.
    pub fn bin_start(&self, bin: usize) -> f64 {
        bin as f64 * self.delta()
    }

    /// Right (open) edge of bin `j`.
    pub fn bin_end(&self, bin: usize) -> f64 {
        (bin + 1) as f64 * self.delta()
    }
}

/// Bin index of `t` under the half-open convention `[j delta, (j+1) delta)`,
/// using the same floating-point edges as [`BinnedCounts::bin_start`].
pub(crate) fn bin_of(t: f64, delta: f64, bins: usize) -> usize {
    let mut j = ((t / delta).floor().max(0.0) as usize).min(bins - 1);
    while j + 1 < bins && t >= (j + 1) as f64 * delta {
        j += 1;
    }
    while j > 0 && t < j as f64 * delta {
        j -= 1;
    }
    j
}

/// Number of bins `K = T / delta`, rejecting partial final bins.
pub fn bin_count(horizon: f64, delta: f64) -> Result<usize> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(HawkesError::arg("bin width must be finite and positive"));
    }
    let ratio = horizon / delta;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(HawkesError::arg(format!(
            "horizon {horizon} is not an integer multiple of the bin width {delta}"
        )));
    }
    Ok(k as usize)
}

/// Counts events per bin `[j delta, (j+1) delta)`.
pub fn aggregate(events: &EventSequence, delta: f64) -> Result<BinnedCounts> {
    let bins = bin_count(events.horizon(), delta)?;
    let dim = events.dim();
    let mut counts = vec![0u64; bins * dim];
    for (p, list) in events.times().iter().enumerate() {
        for &t in list {
            counts[bin_of(t, delta, bins) * dim + p] += 1;
        }
    }
    BinnedCounts::new(counts, bins, dim, delta)
}

/// Row sums of the count matrix as a single-process series.
pub fn superpose(binned: &BinnedCounts) -> BinnedCounts {
    let counts: Vec<u64> = binned.rows().map(|r| r.iter().sum()).collect();
    BinnedCounts::new(counts, binned.bins(), 1, binned.delta())
        .expect("row sums of a valid count matrix are valid")
}

fn check_process(params: &ModelParams, events: &EventSequence, p: usize) -> Result<()> {
    if params.dim() != events.dim() {
        return Err(HawkesError::arg(format!(
            "parameters have P = {} but events have P = {}",
            params.dim(),
            events.dim()
        )));
    }
    if p >= params.dim() {
        return Err(HawkesError::arg(format!("process index {p} out of range 0..{}", params.dim())));
    }
    Ok(())
}

fn check_time(events: &EventSequence, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= events.horizon()) {
        return Err(HawkesError::arg(format!("time {t} outside [0, {}]", events.horizon())));
    }
    Ok(())
}

/// Conditional intensity of process `p` at time `t`; only events strictly
/// before `t` contribute.
pub fn cif_eval(params: &ModelParams, events: &EventSequence, t: f64, p: usize) -> Result<f64> {
    check_process(params, events, p)?;
    check_time(events, t)?;
    let mut value = params.nu[p];
    for (m, list) in events.times().iter().enumerate() {
        let (a, b) = (params.alpha[(p, m)], params.beta[(p, m)]);
        let end = list.partition_point(|&s| s < t);
        value += list[..end].iter().map(|&s| a * (-b * (t - s)).exp()).sum::<f64>();
    }
    Ok(value)
}

/// Integrated intensity `Lambda_p(t) = int_0^t lambda_p(u) du` in closed form.
pub fn compensator(params: &ModelParams, events: &EventSequence, t: f64, p: usize) -> Result<f64> {
    check_process(params, events, p)?;
    check_time(events, t)?;
    let mut value = params.nu[p] * t;
    for (m, list) in events.times().iter().enumerate() {
        let (a, b) = (params.alpha[(p, m)], params.beta[(p, m)]);
        let end = list.partition_point(|&s| s < t);
        value += (a / b) * list[..end].iter().map(|&s| -(-b * (t - s)).exp_m1()).sum::<f64>();
    }
    Ok(value)
}
