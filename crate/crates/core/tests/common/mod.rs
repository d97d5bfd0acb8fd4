#![allow(dead_code)]

use hawkes_agg::rng::rng_from_seed;
use hawkes_agg::{EventSequence, ModelParams};
use rand::Rng;

pub fn paper_params() -> ModelParams {
    ModelParams::from_rows(&[0.3, 0.3], &[0.7, 0.9, 0.6, 1.0], &[1.5, 2.0, 2.0, 3.5]).unwrap()
}

/// Random stationary parameters with rho(gamma) <= 0.8.
pub fn random_params(p: usize, seed: u64) -> ModelParams {
    let mut rng = rng_from_seed(seed);
    loop {
        let nu: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..1.0)).collect();
        let alpha: Vec<f64> = (0..p * p).map(|_| rng.random_range(0.05..1.0)).collect();
        let beta: Vec<f64> = (0..p * p).map(|_| rng.random_range(0.8..4.0)).collect();
        let params = ModelParams::from_rows(&nu, &alpha, &beta).unwrap();
        if params.branching_radius() <= 0.8 {
            return params;
        }
    }
}

/// Direct double sum `sum_{t_i^n < t} (t - t_i^n)^power exp(-beta (t - t_i^n))`.
pub fn direct_r(events: &EventSequence, n: usize, t: f64, beta: f64, power: i32) -> f64 {
    events
        .process(n)
        .iter()
        .filter(|&&s| s < t)
        .map(|&s| (t - s).powi(power) * (-beta * (t - s)).exp())
        .sum()
}

/// Intensity by direct summation, independent of the library.
pub fn direct_cif(params: &ModelParams, events: &EventSequence, t: f64, p: usize) -> f64 {
    let mut v = params.nu[p];
    for m in 0..events.dim() {
        v += params.alpha[(p, m)] * direct_r(events, m, t, params.beta[(p, m)], 0);
    }
    v
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `int_0^t lambda_p(u) du` by quadrature over the smooth pieces between events.
pub fn quadrature_compensator(params: &ModelParams, events: &EventSequence, t: f64, p: usize) -> f64 {
    let mut knots: Vec<f64> = events.times().iter().flatten().copied().filter(|&s| s < t).collect();
    knots.push(0.0);
    knots.push(t);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let f = |u: f64| direct_cif(params, events, u, p);
    knots.windows(2).map(|w| integrate(&f, w[0], w[1], 1e-13)).sum()
}

/// Log-likelihood from intensities at the events and quadrature compensators.
pub fn quadrature_loglik(params: &ModelParams, events: &EventSequence) -> f64 {
    (0..events.dim())
        .map(|p| {
            let log_sum: f64 = events.process(p).iter().map(|&t| direct_cif(params, events, t, p).ln()).sum();
            log_sum - quadrature_compensator(params, events, events.horizon(), p)
        })
        .sum()
}

/// Relative agreement with an absolute floor of 1 on the scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Trimmed statistics oracle: sort, drop `floor(trim * n)` from each tail.
pub fn trimmed(values: &[f64], trim: f64) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let drop = (trim * v.len() as f64).floor() as usize;
    v[drop..v.len() - drop].to_vec()
}
