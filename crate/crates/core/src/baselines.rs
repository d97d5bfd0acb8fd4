//! Baseline estimators working directly on binned counts.
//!
//! [`fit_binned_loglik`] treats each bin as Poisson with the intensity
//! evaluated at the bin's left edge, past counts acting as point masses at
//! the left edges of their bins. [`fit_inar`] regresses counts on lagged
//! counts and reads the kernel off the lag coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{HawkesError, Result};
use crate::likelihood::{LikelihoodReport, Objective};
use crate::model::{BinnedCounts, ModelParams};
use crate::optimize::{maximize, FitResult, OptimizerSettings};

/// `sum_p sum_j N_j^(p) log(delta lambda_j^(p)) - delta lambda_j^(p)`.
pub struct BinnedObjective<'a> {
    pub binned: &'a BinnedCounts,
}

impl BinnedObjective<'_> {
    fn evaluate(&self, params: &ModelParams, order: usize) -> LikelihoodReport {
        let b = self.binned;
        let dim = b.dim();
        let delta = b.delta();
        let mut report = LikelihoodReport::zeros(dim, order >= 2);
        // local layout for process p: [nu_p, alpha_p1..alpha_pP, beta_p1..beta_pP]
        let local = 1 + 2 * dim;
        let mut grad = vec![0.0; local];
        let mut hess = vec![0.0; local * local];
        let mut d_lambda = vec![0.0; local];
        for p in 0..dim {
            grad.iter_mut().for_each(|g| *g = 0.0);
            hess.iter_mut().for_each(|h| *h = 0.0);
            let decay: Vec<f64> = (0..dim).map(|m| (-params.beta[(p, m)] * delta).exp()).collect();
            // e0 = sum_{i<j} N_i w, e1 = d e0 / d beta, e2 = d^2 e0 / d beta^2
            let mut e0 = vec![0.0; dim];
            let mut e1 = vec![0.0; dim];
            let mut e2 = vec![0.0; dim];
            for j in 0..b.bins() {
                if j > 0 {
                    let prev = b.row(j - 1);
                    for m in 0..dim {
                        let s0 = e0[m] + prev[m] as f64;
                        let s1 = e1[m];
                        let s2 = e2[m];
                        let u = decay[m];
                        e0[m] = u * s0;
                        e1[m] = u * (s1 - delta * s0);
                        e2[m] = u * (s2 - 2.0 * delta * s1 + delta * delta * s0);
                    }
                }
                let mut lambda = params.nu[p];
                for m in 0..dim {
                    lambda += params.alpha[(p, m)] * e0[m];
                }
                let n = b.get(j, p) as f64;
                let rate = delta * lambda;
                report.value += if n > 0.0 { n * rate.ln() } else { 0.0 } - rate;
                if order == 0 {
                    continue;
                }
                d_lambda[0] = 1.0;
                for m in 0..dim {
                    d_lambda[1 + m] = e0[m];
                    d_lambda[1 + dim + m] = params.alpha[(p, m)] * e1[m];
                }
                let score = n / lambda - delta;
                for (g, dl) in grad.iter_mut().zip(&d_lambda) {
                    *g += score * dl;
                }
                if order >= 2 {
                    let curv = n / (lambda * lambda);
                    for a in 0..local {
                        for c in 0..local {
                            hess[a * local + c] -= curv * d_lambda[a] * d_lambda[c];
                        }
                    }
                    for m in 0..dim {
                        let (ia, ib) = (1 + m, 1 + dim + m);
                        hess[ia * local + ib] += score * e1[m];
                        hess[ib * local + ia] += score * e1[m];
                        hess[ib * local + ib] += score * params.alpha[(p, m)] * e2[m];
                    }
                }
            }
            if order == 0 {
                continue;
            }
            let global = |a: usize| match a {
                0 => p,
                a if a <= dim => ModelParams::alpha_index(dim, p, a - 1),
                a => ModelParams::beta_index(dim, p, a - 1 - dim),
            };
            for a in 0..local {
                report.gradient[global(a)] = grad[a];
            }
            if let Some(h) = report.hessian.as_mut() {
                for a in 0..local {
                    for c in 0..local {
                        h[(global(a), global(c))] = hess[a * local + c];
                    }
                }
            }
        }
        report
    }
}

impl Objective for BinnedObjective<'_> {
    fn dim(&self) -> usize {
        self.binned.dim()
    }

    fn value(&self, params: &ModelParams) -> f64 {
        self.evaluate(params, 0).value
    }

    fn report(&self, params: &ModelParams, with_hessian: bool) -> LikelihoodReport {
        self.evaluate(params, if with_hessian { 2 } else { 1 })
    }
}

/// Binned Poisson log-likelihood and its derivatives.
pub fn binned_loglik_report(params: &ModelParams, binned: &BinnedCounts, with_hessian: bool) -> LikelihoodReport {
    BinnedObjective { binned }.report(params, with_hessian)
}

/// Maximises the binned Poisson log-likelihood from `init`.
pub fn fit_binned_loglik(binned: &BinnedCounts, init: &ModelParams, settings: &OptimizerSettings) -> Result<FitResult> {
    if binned.total() == 0 {
        return Err(HawkesError::DegenerateData("all counts are zero".into()));
    }
    if binned.dim() != init.dim() {
        return Err(HawkesError::arg("initial parameters do not match the count dimension"));
    }
    maximize(&BinnedObjective { binned }, init, settings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InarConfig {
    pub lag_order: usize,
    pub ridge: f64,
}

impl InarConfig {
    /// `ceil(10 / delta)` lags capped at 20, ridge `1e-8`.
    pub fn for_delta(delta: f64) -> Self {
        let lag_order = ((10.0 / delta).ceil() as usize).clamp(1, 20);
        Self { lag_order, ridge: 1e-8 }
    }
}

/// INAR(p) estimates. Raw values can be negative or otherwise outside the
/// Hawkes parameter space; `valid` says whether they form a usable model.
#[derive(Debug, Clone, PartialEq)]
pub struct InarFit {
    /// Flattened estimates in the usual parameter order.
    pub estimate: Vec<f64>,
    /// Regression intercepts, one per process.
    pub intercept: Vec<f64>,
    /// Lag coefficient matrices `A_1..A_p`; `A_k[(p, m)]` multiplies `N_{j-k}^(m)`.
    pub lags: Vec<DMatrix<f64>>,
    /// False when some estimate is non-positive, an entry had no positive
    /// kernel values, or the fitted kernel implies a non-stationary model.
    pub valid: bool,
}

impl InarFit {
    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    /// The estimates as model parameters, if they are valid.
    pub fn params(&self) -> Option<ModelParams> {
        if !self.valid {
            return None;
        }
        ModelParams::from_flat(self.dim(), &self.estimate).ok()
    }
}

/// Exponential fit `alpha exp(-beta tau)` to kernel values `g` at lags `tau`:
/// log-linear regression on the positive values when there are two or more,
/// least squares on all values when there is one. `None` when none is positive.
fn fit_exponential(taus: &[f64], g: &[f64]) -> Option<(f64, f64)> {
    let positive: Vec<(f64, f64)> = taus.iter().zip(g).filter(|(_, &v)| v > 0.0).map(|(&t, &v)| (t, v.ln())).collect();
    match positive.len() {
        0 => None,
        1 => Some(fit_exponential_nls(taus, g)),
        n => {
            let nf = n as f64;
            let mt = positive.iter().map(|(t, _)| t).sum::<f64>() / nf;
            let my = positive.iter().map(|(_, y)| y).sum::<f64>() / nf;
            let sxy: f64 = positive.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
            let sxx: f64 = positive.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
            let slope = sxy / sxx;
            Some(((my - slope * mt).exp(), -slope))
        }
    }
}

/// Least squares over all values: closed-form `alpha` for each `beta`,
/// golden-section search over `log beta` in `[1e-3, 30 / tau_1]`.
fn fit_exponential_nls(taus: &[f64], g: &[f64]) -> (f64, f64) {
    let profile = |log_beta: f64| {
        let beta = log_beta.exp();
        let e: Vec<f64> = taus.iter().map(|t| (-beta * t).exp()).collect();
        let see: f64 = e.iter().map(|v| v * v).sum();
        let sge: f64 = e.iter().zip(g).map(|(a, b)| a * b).sum();
        let alpha = sge / see;
        let sse: f64 = e.iter().zip(g).map(|(a, b)| (b - alpha * a).powi(2)).sum();
        (sse, alpha, beta)
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (1e-3f64.ln(), (30.0 / taus[0]).ln());
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if profile(c).0 < profile(d).0 {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
        if b - a < 1e-12 {
            break;
        }
    }
    let (_, alpha, beta) = profile(0.5 * (a + b));
    (alpha, beta)
}

/// Conditional least-squares INAR(p) fit.
pub fn fit_inar(binned: &BinnedCounts, config: &InarConfig) -> Result<InarFit> {
    let dim = binned.dim();
    let k = binned.bins();
    let lag = config.lag_order;
    if lag == 0 || lag >= k {
        return Err(HawkesError::arg(format!("lag order must lie in 1..{k}")));
    }
    if !(config.ridge >= 0.0) {
        return Err(HawkesError::arg("ridge must be non-negative"));
    }
    let delta = binned.delta();
    let cols = 1 + dim * lag;
    let rows = k - lag;
    let design = DMatrix::from_fn(rows, cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (l, m) = ((c - 1) / dim + 1, (c - 1) % dim);
            binned.get(r + lag - l, m) as f64
        }
    });
    let response = DMatrix::from_fn(rows, dim, |r, p| binned.get(r + lag, p) as f64);
    let mut gram = design.transpose() * &design;
    for i in 0..cols {
        gram[(i, i)] += config.ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        HawkesError::Numerical("INAR design matrix is singular; increase the ridge or lower the lag order".into())
    })?;
    let coef = chol.solve(&(design.transpose() * response));

    let intercept: Vec<f64> = (0..dim).map(|p| coef[(0, p)]).collect();
    let lags: Vec<DMatrix<f64>> =
        (1..=lag).map(|l| DMatrix::from_fn(dim, dim, |p, m| coef[(1 + (l - 1) * dim + m, p)])).collect();
    let taus: Vec<f64> = (1..=lag).map(|l| l as f64 * delta).collect();

    let mut estimate = vec![0.0; dim * (1 + 2 * dim)];
    let mut valid = true;
    for p in 0..dim {
        estimate[p] = intercept[p] / delta;
    }
    let mut missing = Vec::new();
    let mut fitted_betas = Vec::new();
    for p in 0..dim {
        for m in 0..dim {
            let g: Vec<f64> = lags.iter().map(|a| a[(p, m)] / delta).collect();
            match fit_exponential(&taus, &g) {
                Some((alpha, beta)) => {
                    estimate[ModelParams::alpha_index(dim, p, m)] = alpha;
                    estimate[ModelParams::beta_index(dim, p, m)] = beta;
                    fitted_betas.push(beta);
                }
                None => missing.push((p, m)),
            }
        }
    }
    if !missing.is_empty() {
        valid = false;
        let fill = if fitted_betas.is_empty() {
            1.0
        } else {
            fitted_betas.iter().sum::<f64>() / fitted_betas.len() as f64
        };
        for (p, m) in missing {
            estimate[ModelParams::alpha_index(dim, p, m)] = 0.0;
            estimate[ModelParams::beta_index(dim, p, m)] = fill;
        }
    }
    if estimate.iter().any(|v| !v.is_finite()) {
        valid = false;
    }
    if valid {
        let nu_ok = estimate[..dim].iter().all(|&v| v > 0.0);
        let beta_ok = estimate[dim + dim * dim..].iter().all(|&v| v > 0.0);
        valid = nu_ok && beta_ok && ModelParams::from_flat(dim, &estimate).map(|m| m.is_stationary()).unwrap_or(false);
    }
    Ok(InarFit { estimate, intercept, lags, valid })
}

/// Ordinary least-squares standard errors of the INAR coefficients,
/// laid out like the coefficient matrix (row = regressor, column = process).
pub fn inar_standard_errors(binned: &BinnedCounts, config: &InarConfig, fit: &InarFit) -> Result<DMatrix<f64>> {
    let dim = binned.dim();
    let lag = config.lag_order;
    let k = binned.bins();
    let cols = 1 + dim * lag;
    let rows = k - lag;
    if rows <= cols {
        return Err(HawkesError::DegenerateData("too few bins for standard errors".into()));
    }
    let design = DMatrix::from_fn(rows, cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (l, m) = ((c - 1) / dim + 1, (c - 1) % dim);
            binned.get(r + lag - l, m) as f64
        }
    });
    let gram = design.transpose() * &design;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| HawkesError::Numerical("INAR design matrix is singular".into()))?;
    let mut out = DMatrix::zeros(cols, dim);
    for p in 0..dim {
        let mut beta = DVector::zeros(cols);
        beta[0] = fit.intercept[p];
        for l in 0..lag {
            for m in 0..dim {
                beta[1 + l * dim + m] = fit.lags[l][(p, m)];
            }
        }
        let resid: f64 = (0..rows)
            .map(|r| {
                let pred: f64 = (0..cols).map(|c| design[(r, c)] * beta[c]).sum();
                (binned.get(r + lag, p) as f64 - pred).powi(2)
            })
            .sum();
        let sigma2 = resid / (rows - cols) as f64;
        for c in 0..cols {
            out[(c, p)] = (sigma2 * inv[(c, c)]).sqrt();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_submodel_gives_mean_rate() {
        let binned = BinnedCounts::from_rows(&[vec![2], vec![0], vec![1], vec![4], vec![3]], 0.5).unwrap();
        let init = ModelParams::from_rows(&[1.0], &[0.0], &[1.0]).unwrap();
        let fit = fit_binned_loglik(&binned, &init, &OptimizerSettings::background_only(1)).unwrap();
        assert!((fit.params.nu[0] - 10.0 / 2.5).abs() < 1e-6);
    }

    #[test]
    fn binned_intensity_uses_left_edge_masses() {
        // lambda_2 = nu + alpha (N_0 e^{-2 beta} + N_1 e^{-beta})
        let binned = BinnedCounts::from_rows(&[vec![2], vec![1], vec![3]], 1.0).unwrap();
        let params = ModelParams::from_rows(&[0.5], &[0.4], &[1.3]).unwrap();
        let lambda = [0.5, 0.5 + 0.4 * 2.0 * (-1.3f64).exp(), 0.5 + 0.4 * (2.0 * (-2.6f64).exp() + (-1.3f64).exp())];
        let want: f64 = [2.0, 1.0, 3.0].iter().zip(lambda).map(|(n, l)| n * l.ln() - l).sum();
        assert!((BinnedObjective { binned: &binned }.value(&params) - want).abs() < 1e-14);
    }

    #[test]
    fn zero_counts_rejected() {
        let binned = BinnedCounts::from_rows(&vec![vec![0, 0]; 5], 1.0).unwrap();
        let init = ModelParams::from_rows(&[1.0, 1.0], &[0.1; 4], &[1.0; 4]).unwrap();
        assert!(matches!(fit_binned_loglik(&binned, &init, &OptimizerSettings::default()), Err(HawkesError::DegenerateData(_))));
    }

    #[test]
    fn exponential_fit_paths() {
        let taus = [1.0f64, 2.0, 3.0, 4.0];
        let g: Vec<f64> = taus.iter().map(|t| 0.8 * (-1.5 * t).exp()).collect();
        let (a, b) = fit_exponential(&taus, &g).unwrap();
        assert!((a - 0.8).abs() < 1e-12 && (b - 1.5).abs() < 1e-12);
        let one = [0.3, -0.01, -0.02, 0.0];
        let (a, b) = fit_exponential(&taus, &one).unwrap();
        assert!(a > 0.0 && b > 0.0);
        assert!(fit_exponential(&taus, &[-1.0, 0.0, -0.5, -0.1]).is_none());
    }

    #[test]
    fn inar_rejects_bad_lag_and_singular_design() {
        let binned = BinnedCounts::from_rows(&vec![vec![1]; 5], 1.0).unwrap();
        assert!(fit_inar(&binned, &InarConfig { lag_order: 5, ridge: 0.0 }).is_err());
        let err = fit_inar(&binned, &InarConfig { lag_order: 2, ridge: 0.0 }).unwrap_err();
        assert!(matches!(err, HawkesError::Numerical(msg) if msg.contains("ridge")));
        assert!(fit_inar(&binned, &InarConfig { lag_order: 2, ridge: 1e-8 }).is_ok());
    }

    #[test]
    fn default_lag_order() {
        assert_eq!(InarConfig::for_delta(1.0).lag_order, 10);
        assert_eq!(InarConfig::for_delta(0.1).lag_order, 20);
        assert_eq!(InarConfig::for_delta(3.0).lag_order, 4);
        assert_eq!(InarConfig::for_delta(50.0).lag_order, 1);
    }
}
