//! Constrained maximisation of Hawkes objectives.
//!
//! Every free parameter is optimised in log coordinates, which keeps
//! `nu > 0`, `beta > 0` and `alpha >= floor` without inequality constraints.
//! Steps use the analytical Hessian; when its negative is not positive
//! definite the system is shifted towards gradient ascent until it is.
//! Trial points with `rho(gamma) >= 1 - margin` are rejected in the line
//! search.

use nalgebra::{DMatrix, DVector};

use crate::error::{HawkesError, Result};
use crate::likelihood::{ExactLikelihood, Objective};
use crate::model::{EventSequence, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient in log coordinates.
    pub grad_tol: f64,
    /// Lower bound applied to free `alpha` entries.
    pub alpha_floor: f64,
    /// Trial points need `rho(gamma) < 1 - stationarity_margin`.
    pub stationarity_margin: f64,
    /// Flattened mask of parameters held at their initial value.
    pub fixed: Option<Vec<bool>>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            alpha_floor: 1e-10,
            stationarity_margin: 1e-6,
            fixed: None,
        }
    }
}

impl OptimizerSettings {
    /// Holds every `alpha` and `beta` entry fixed, leaving only `nu` free.
    pub fn background_only(p: usize) -> Self {
        let mut fixed = vec![true; crate::model::flat_len(p)];
        fixed[..p].iter_mut().for_each(|f| *f = false);
        Self { fixed: Some(fixed), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    /// Objective value at `params`.
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Flattened parameter vector after every accepted iteration,
    /// starting with the initial point.
    pub trajectory: Vec<Vec<f64>>,
}

fn feasible(params: &ModelParams, margin: f64) -> bool {
    params.branching_radius() < 1.0 - margin
}

/// Maximises `objective` starting at `init`.
pub fn maximize(objective: &dyn Objective, init: &ModelParams, settings: &OptimizerSettings) -> Result<FitResult> {
    let dim = init.dim();
    if objective.dim() != dim {
        return Err(HawkesError::arg("initial parameters do not match the objective dimension"));
    }
    let n = init.num_params();
    let fixed = settings.fixed.clone().unwrap_or_else(|| vec![false; n]);
    if fixed.len() != n {
        return Err(HawkesError::arg(format!("fixed mask needs {n} entries")));
    }
    let is_alpha = |i: usize| i >= dim && i < dim + dim * dim;

    let mut theta = init.to_flat();
    for i in 0..n {
        if fixed[i] {
            continue;
        }
        if is_alpha(i) {
            theta[i] = theta[i].max(settings.alpha_floor);
        } else if theta[i] <= 0.0 {
            return Err(HawkesError::arg("initial nu and beta must be strictly positive"));
        }
    }
    let mut params = ModelParams::from_flat(dim, &theta)?;
    if !feasible(&params, settings.stationarity_margin) {
        return Err(HawkesError::Stationarity { radius: params.branching_radius() });
    }
    let mut value = objective.value(&params);
    if !value.is_finite() {
        return Err(HawkesError::arg("objective is not finite at the initial parameters"));
    }

    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let mut trajectory = vec![theta.clone()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iter {
        let report = objective.report(&params, true);
        let hess = report.hessian.as_ref().expect("hessian requested");
        if !report.gradient.iter().all(|g| g.is_finite()) || !hess.iter().all(|h| h.is_finite()) {
            return Err(HawkesError::Numerical("non-finite derivatives during optimisation".into()));
        }
        // chain rule for theta = exp(y)
        let g_log: Vec<f64> = (0..n).map(|i| theta[i] * report.gradient[i]).collect();
        let at_floor = |i: usize| is_alpha(i) && theta[i] <= settings.alpha_floor * (1.0 + 1e-12);
        let active: Vec<usize> = free.iter().copied().filter(|&i| !(at_floor(i) && g_log[i] < 0.0)).collect();
        let grad_norm = active.iter().map(|&i| g_log[i].abs()).fold(0.0, f64::max);
        if grad_norm < settings.grad_tol {
            converged = true;
            break;
        }

        let k = active.len();
        let mut neg_h = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (a, &i) in active.iter().enumerate() {
            rhs[a] = g_log[i];
            for (b, &j) in active.iter().enumerate() {
                neg_h[(a, b)] = -theta[i] * theta[j] * hess[(i, j)];
            }
            neg_h[(a, a)] -= g_log[i];
        }

        let scale = neg_h.diagonal().iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut shift = 0.0;
        let mut accepted = None;
        for _attempt in 0..8 {
            let Some(direction) = damped_direction(&neg_h, &rhs, &mut shift, scale) else {
                break;
            };
            if let Some(found) = line_search(objective, settings, &theta, &active, &direction, &rhs, value, is_alpha) {
                accepted = Some(found);
                break;
            }
            // fall back towards steepest ascent
            shift = (shift * 100.0).max(scale * 1e-2);
        }
        let Some((new_theta, new_params, new_value)) = accepted else {
            break;
        };
        let moved = theta.iter().zip(&new_theta).map(|(a, b)| ((b / a).ln()).abs()).fold(0.0, f64::max);
        let gained = new_value - value;
        theta = new_theta;
        params = new_params;
        value = new_value;
        iterations += 1;
        trajectory.push(theta.clone());
        if moved < 1e-12 && gained <= 1e-12 * (1.0 + value.abs()) {
            break;
        }
    }

    Ok(FitResult { params, loglik: value, iterations, converged, trajectory })
}

/// Solves `(A + shift I) d = g`, increasing `shift` until the shifted system
/// is positive definite.
fn damped_direction(a: &DMatrix<f64>, g: &DVector<f64>, shift: &mut f64, scale: f64) -> Option<DVector<f64>> {
    let k = a.nrows();
    for _ in 0..80 {
        let mut shifted = a.clone();
        for i in 0..k {
            shifted[(i, i)] += *shift;
        }
        if let Some(chol) = shifted.cholesky() {
            let d = chol.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        *shift = if *shift == 0.0 { scale * 1e-8 } else { *shift * 10.0 };
    }
    None
}

/// Pulls an infeasible trial point back inside the stationarity region by
/// scaling the free `alpha` entries, using `rho(c gamma) = c rho(gamma)`.
fn retract(
    params: &mut ModelParams,
    trial: &mut [f64],
    active: &[usize],
    settings: &OptimizerSettings,
    is_alpha: &impl Fn(usize) -> bool,
) {
    let radius = params.branching_radius();
    let limit = 1.0 - settings.stationarity_margin;
    if !(radius >= limit) || !radius.is_finite() {
        return;
    }
    let factor = (1.0 - 2.0 * settings.stationarity_margin) / radius;
    let dim = params.dim();
    for &i in active.iter().filter(|&&i| is_alpha(i)) {
        trial[i] = (trial[i] * factor).max(settings.alpha_floor);
    }
    if let Ok(p) = ModelParams::from_flat(dim, trial) {
        *params = p;
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    objective: &dyn Objective,
    settings: &OptimizerSettings,
    theta: &[f64],
    active: &[usize],
    direction: &DVector<f64>,
    g_log: &DVector<f64>,
    value: f64,
    is_alpha: impl Fn(usize) -> bool,
) -> Option<(Vec<f64>, ModelParams, f64)> {
    let dim = objective.dim();
    let max_step = direction.amax();
    let mut step = if max_step > 2.0 { 2.0 / max_step } else { 1.0 };
    let slope = g_log.dot(direction);
    let slack = 1e-12 * (1.0 + value.abs());
    for _ in 0..50 {
        let mut trial = theta.to_vec();
        for (a, &i) in active.iter().enumerate() {
            let y = theta[i].ln() + step * direction[a];
            trial[i] = y.exp();
            if is_alpha(i) {
                trial[i] = trial[i].max(settings.alpha_floor);
            }
        }
        if let Ok(mut params) = ModelParams::from_flat(dim, &trial) {
            retract(&mut params, &mut trial, active, settings, &is_alpha);
            if params.nu.iter().chain(params.beta.iter()).all(|&v| v > 0.0)
                && feasible(&params, settings.stationarity_margin)
            {
                let trial_value = objective.value(&params);
                if trial_value.is_finite() && trial_value >= value + 1e-4 * step * slope - slack {
                    return Some((trial, params, trial_value));
                }
            }
        }
        step *= 0.5;
    }
    None
}

/// Exact continuous-time MLE from `init`.
pub fn fit_mle(events: &EventSequence, init: &ModelParams, settings: &OptimizerSettings) -> Result<FitResult> {
    if events.dim() != init.dim() {
        return Err(HawkesError::arg("initial parameters do not match the event dimension"));
    }
    maximize(&ExactLikelihood { events }, init, settings)
}
