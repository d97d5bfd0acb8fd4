//! Continuous-time log-likelihood of the exponential multivariate Hawkes
//! process, with analytical gradient and Hessian.
//!
//! For receiving process `m` the log-likelihood is
//!
//! ```text
//! L^m = -nu_m T - sum_n (alpha_mn / beta_mn) A_mn + sum_k log(lambda_m(t_k^m))
//! A_mn = sum_{t_i^n < T} (1 - exp(-beta_mn (T - t_i^n)))
//! lambda_m(t_k^m) = nu_m + sum_n alpha_mn R_mn(k)
//! ```
//!
//! where `R_mn(k) = sum_{t_i^n < t_k^m} exp(-beta_mn (t_k^m - t_i^n))` and
//! `R'`, `R''` carry the extra factors `(t_k^m - t_i^n)` and its square.
//! All three are built recursively in one pass over the events of `m`.
//! Parameters of different receiving processes never interact, so every
//! Hessian block coupling `m != m'` is zero.

use nalgebra::{DMatrix, DVector};

use crate::model::{flat_len, EventSequence, ModelParams};

/// `R`, `R'` and `R''` for every pair `(m, n)` and every event `k` of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionState {
    dim: usize,
    r: Vec<Vec<f64>>,
    rp: Vec<Vec<f64>>,
    rpp: Vec<Vec<f64>>,
}

impl RecursionState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `R_mn(k)` for every event `k` of process `m` (zero-based `k`).
    pub fn r(&self, m: usize, n: usize) -> &[f64] {
        &self.r[m * self.dim + n]
    }

    pub fn r_prime(&self, m: usize, n: usize) -> &[f64] {
        &self.rp[m * self.dim + n]
    }

    pub fn r_second(&self, m: usize, n: usize) -> &[f64] {
        &self.rpp[m * self.dim + n]
    }
}

/// Running `R`, `R'`, `R''` for one pair `(m, n)`.
#[derive(Clone, Copy, Default)]
struct Running {
    r: f64,
    rp: f64,
    rpp: f64,
}

/// Walks the events of process `m`, calling `visit(k, &running)` with the
/// recursion values for all source processes `n` at each event `t_k^m`.
fn walk_recursions<F>(events: &EventSequence, beta: &DMatrix<f64>, m: usize, order: usize, mut visit: F)
where
    F: FnMut(usize, &[Running]),
{
    let dim = events.dim();
    let own = events.process(m);
    let mut state = vec![Running::default(); dim];
    let mut next = vec![0usize; dim];
    let mut prev_time = f64::NEG_INFINITY;
    for (k, &tk) in own.iter().enumerate() {
        for n in 0..dim {
            let b = beta[(m, n)];
            let s = &mut state[n];
            if k > 0 {
                let d = tk - prev_time;
                let decay = (-b * d).exp();
                if order >= 2 {
                    s.rpp = decay * (s.rpp + 2.0 * d * s.rp + d * d * s.r);
                }
                if order >= 1 {
                    s.rp = decay * (s.rp + d * s.r);
                }
                s.r *= decay;
            }
            // sources in [t_{k-1}^m, t_k^m): earlier ones are already folded in
            let src = events.process(n);
            while next[n] < src.len() && src[next[n]] < tk {
                let u = tk - src[next[n]];
                let e = (-b * u).exp();
                s.r += e;
                if order >= 1 {
                    s.rp += u * e;
                }
                if order >= 2 {
                    s.rpp += u * u * e;
                }
                next[n] += 1;
            }
        }
        prev_time = tk;
        visit(k, &state);
    }
}

/// Builds `R`, `R'`, `R''` for all `(m, n)` with the recursive update.
pub fn build_recursions(events: &EventSequence, beta: &DMatrix<f64>) -> RecursionState {
    let dim = events.dim();
    let mut r = vec![Vec::new(); dim * dim];
    let mut rp = vec![Vec::new(); dim * dim];
    let mut rpp = vec![Vec::new(); dim * dim];
    for m in 0..dim {
        walk_recursions(events, beta, m, 2, |_, state| {
            for (n, s) in state.iter().enumerate() {
                r[m * dim + n].push(s.r);
                rp[m * dim + n].push(s.rp);
                rpp[m * dim + n].push(s.rpp);
            }
        });
    }
    RecursionState { dim, r, rp, rpp }
}

/// Value, gradient and optionally Hessian of a log-likelihood, in the
/// flattened parameter order `nu`, `alpha` row-major, `beta` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodReport {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

impl LikelihoodReport {
    pub fn zeros(p: usize, with_hessian: bool) -> Self {
        let n = flat_len(p);
        Self {
            value: 0.0,
            gradient: DVector::zeros(n),
            hessian: with_hessian.then(|| DMatrix::zeros(n, n)),
        }
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, weight: f64, other: &LikelihoodReport) {
        self.value += weight * other.value;
        self.gradient.axpy(weight, &other.gradient, 1.0);
        if let (Some(h), Some(o)) = (self.hessian.as_mut(), other.hessian.as_ref()) {
            *h += o * weight;
        }
    }
}

/// Compensator sums over source events: `A = sum (1 - e)`, `B = sum u e`,
/// `C = sum u^2 e` with `u = T - t_i^n`, `e = exp(-beta u)`.
fn compensator_sums(times: &[f64], horizon: f64, beta: f64) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for &t in times {
        let u = horizon - t;
        let e = (-beta * u).exp();
        a += -(-beta * u).exp_m1();
        b += u * e;
        c += u * u * e;
    }
    (a, b, c)
}

fn check_dims(params: &ModelParams, events: &EventSequence) {
    assert_eq!(
        params.dim(),
        events.dim(),
        "parameter dimension does not match the number of processes"
    );
}

/// Log-likelihood via the `R` recursion.
pub fn loglik(params: &ModelParams, events: &EventSequence) -> f64 {
    check_dims(params, events);
    let dim = params.dim();
    let horizon = events.horizon();
    let mut total = 0.0;
    for m in 0..dim {
        let mut value = -params.nu[m] * horizon;
        for n in 0..dim {
            let (a, b) = (params.alpha[(m, n)], params.beta[(m, n)]);
            if a != 0.0 {
                let comp: f64 = events.process(n).iter().map(|&t| -(-b * (horizon - t)).exp_m1()).sum();
                value -= a / b * comp;
            }
        }
        walk_recursions(events, &params.beta, m, 0, |_, state| {
            let lambda = params.nu[m]
                + state.iter().enumerate().map(|(n, s)| params.alpha[(m, n)] * s.r).sum::<f64>();
            value += lambda.ln();
        });
        total += value;
    }
    total
}

/// Full report: value, analytical gradient and (optionally) Hessian.
pub fn likelihood_report(params: &ModelParams, events: &EventSequence, with_hessian: bool) -> LikelihoodReport {
    check_dims(params, events);
    let dim = params.dim();
    let horizon = events.horizon();
    let mut report = LikelihoodReport::zeros(dim, with_hessian);
    let ai = |m: usize, n: usize| ModelParams::alpha_index(dim, m, n);
    let bi = |m: usize, n: usize| ModelParams::beta_index(dim, m, n);

    for m in 0..dim {
        let nu = params.nu[m];
        let alpha: Vec<f64> = (0..dim).map(|n| params.alpha[(m, n)]).collect();
        let beta: Vec<f64> = (0..dim).map(|n| params.beta[(m, n)]).collect();
        let mut value = -nu * horizon;
        let mut g_nu = -horizon;
        let mut g_alpha = vec![0.0; dim];
        let mut g_beta = vec![0.0; dim];
        let mut comp_a = vec![0.0; dim];
        let mut comp_b = vec![0.0; dim];
        let mut comp_c = vec![0.0; dim];
        for n in 0..dim {
            let (a_sum, b_sum, c_sum) = compensator_sums(events.process(n), horizon, beta[n]);
            comp_a[n] = a_sum;
            comp_b[n] = b_sum;
            comp_c[n] = c_sum;
            value -= alpha[n] / beta[n] * a_sum;
            g_alpha[n] = -a_sum / beta[n];
            g_beta[n] = alpha[n] * a_sum / (beta[n] * beta[n]) - alpha[n] * b_sum / beta[n];
        }

        // event sums for the Hessian, all over k with t_k^m < T
        let mut s_nu_nu = 0.0; // 1 / lambda^2
        let mut s_nu_alpha = vec![0.0; dim]; // R_n / lambda^2
        let mut s_nu_beta = vec![0.0; dim]; // alpha_n R'_n / lambda^2
        let mut s_alpha_alpha = vec![0.0; dim * dim]; // R_n R_n' / lambda^2
        let mut s_beta_alpha = vec![0.0; dim * dim]; // alpha_n R'_n R_n' / lambda^2
        let mut s_beta_beta = vec![0.0; dim * dim]; // alpha_n R'_n alpha_n' R'_n' / lambda^2
        let mut s_rp = vec![0.0; dim]; // R'_n / lambda
        let mut s_rpp = vec![0.0; dim]; // alpha_n R''_n / lambda

        let order = if with_hessian { 2 } else { 1 };
        walk_recursions(events, &params.beta, m, order, |_, state| {
            let lambda = nu + state.iter().zip(&alpha).map(|(s, a)| a * s.r).sum::<f64>();
            let inv = 1.0 / lambda;
            value += lambda.ln();
            g_nu += inv;
            for n in 0..dim {
                g_alpha[n] += state[n].r * inv;
                g_beta[n] -= alpha[n] * state[n].rp * inv;
            }
            if with_hessian {
                let inv2 = inv * inv;
                s_nu_nu += inv2;
                for n in 0..dim {
                    let (r, rp) = (state[n].r, state[n].rp);
                    s_nu_alpha[n] += r * inv2;
                    s_nu_beta[n] += alpha[n] * rp * inv2;
                    s_rp[n] += rp * inv;
                    s_rpp[n] += alpha[n] * state[n].rpp * inv;
                    for n2 in 0..dim {
                        let (r2, rp2) = (state[n2].r, state[n2].rp);
                        s_alpha_alpha[n * dim + n2] += r * r2 * inv2;
                        s_beta_alpha[n * dim + n2] += alpha[n] * rp * r2 * inv2;
                        s_beta_beta[n * dim + n2] += alpha[n] * rp * alpha[n2] * rp2 * inv2;
                    }
                }
            }
        });

        report.value += value;
        report.gradient[m] = g_nu;
        for n in 0..dim {
            report.gradient[ai(m, n)] = g_alpha[n];
            report.gradient[bi(m, n)] = g_beta[n];
        }

        if let Some(h) = report.hessian.as_mut() {
            // d2/dnu_m^2; nu_m nu_n' for m != n' stays 0
            h[(m, m)] = -s_nu_nu;
            for n in 0..dim {
                let (a, b) = (alpha[n], beta[n]);
                // alpha_mn with nu_m
                h[(ai(m, n), m)] = -s_nu_alpha[n];
                // beta_mn with nu_m
                h[(bi(m, n), m)] = s_nu_beta[n];
                for n2 in 0..dim {
                    // alpha_mn with alpha_mn' (n' = n included)
                    h[(ai(m, n), ai(m, n2))] = -s_alpha_alpha[n * dim + n2];
                    if n2 == n {
                        // beta_mn with alpha_mn
                        h[(bi(m, n), ai(m, n))] = comp_a[n] / (b * b) - comp_b[n] / b - s_rp[n]
                            + s_beta_alpha[n * dim + n];
                        // beta_mn squared
                        h[(bi(m, n), bi(m, n))] = -2.0 * a / (b * b * b) * comp_a[n]
                            + 2.0 * a / (b * b) * comp_b[n]
                            + a / b * comp_c[n]
                            + s_rpp[n]
                            - s_beta_beta[n * dim + n];
                    } else {
                        // beta_mn with alpha_mn'
                        h[(bi(m, n), ai(m, n2))] = s_beta_alpha[n * dim + n2];
                        // beta_mn with beta_mn'
                        h[(bi(m, n), bi(m, n2))] = -s_beta_beta[n * dim + n2];
                    }
                }
            }
            // mirror the lower-triangular blocks filled above
            let idx: Vec<usize> = std::iter::once(m)
                .chain((0..dim).map(|n| ai(m, n)))
                .chain((0..dim).map(|n| bi(m, n)))
                .collect();
            for (x, &i) in idx.iter().enumerate() {
                for &j in &idx[..x] {
                    h[(j, i)] = h[(i, j)];
                }
            }
        }
    }
    report
}

pub fn gradient(params: &ModelParams, events: &EventSequence) -> DVector<f64> {
    likelihood_report(params, events, false).gradient
}

pub fn hessian(params: &ModelParams, events: &EventSequence) -> DMatrix<f64> {
    likelihood_report(params, events, true).hessian.expect("hessian requested")
}

/// A smooth objective over [`ModelParams`] that an optimizer can maximise.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, params: &ModelParams) -> f64;
    fn report(&self, params: &ModelParams, with_hessian: bool) -> LikelihoodReport;
}

/// Exact log-likelihood of one event sequence.
pub struct ExactLikelihood<'a> {
    pub events: &'a EventSequence,
}

impl Objective for ExactLikelihood<'_> {
    fn dim(&self) -> usize {
        self.events.dim()
    }

    fn value(&self, params: &ModelParams) -> f64 {
        loglik(params, self.events)
    }

    fn report(&self, params: &ModelParams, with_hessian: bool) -> LikelihoodReport {
        likelihood_report(params, self.events, with_hessian)
    }
}

/// `sum_k w_k loglik(theta; events_k) / sum_k w_k`.
#[derive(Debug, Clone)]
pub struct WeightedLikelihood {
    dim: usize,
    samples: Vec<(f64, EventSequence)>,
}

impl WeightedLikelihood {
    /// Weights must be non-negative with a positive sum; zero-weight samples
    /// are dropped.
    pub fn new(samples: Vec<(f64, EventSequence)>) -> Self {
        assert!(!samples.is_empty(), "weighted likelihood needs at least one sample");
        let dim = samples[0].1.dim();
        let total: f64 = samples.iter().map(|(w, _)| *w).sum();
        assert!(total > 0.0 && total.is_finite(), "weights must have a positive finite sum");
        let samples = samples
            .into_iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, ev)| (w / total, ev))
            .collect();
        Self { dim, samples }
    }

    pub fn samples(&self) -> &[(f64, EventSequence)] {
        &self.samples
    }
}

impl Objective for WeightedLikelihood {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, params: &ModelParams) -> f64 {
        self.samples.iter().map(|(w, ev)| w * loglik(params, ev)).sum()
    }

    fn report(&self, params: &ModelParams, with_hessian: bool) -> LikelihoodReport {
        let mut total = LikelihoodReport::zeros(self.dim, with_hessian);
        for (w, ev) in &self.samples {
            total.add_scaled(*w, &likelihood_report(params, ev, with_hessian));
        }
        total
    }
}
