//! Monte Carlo EM for binned multivariate counts.
//!
//! Each iteration maps the current parameters to a univariate proposal for
//! the superposed counts, draws `M` consistent latent-time proposals, splits
//! each between the processes (keeping the most likely of `m_tilde` splits),
//! weights the proposals by `p / q`, and maximises the weighted complete-data
//! log-likelihood.

mod proposal;
mod weights;

pub use proposal::{
    allocate, best_allocation, sample_superposed_times, Allocation, ProposalSample, WithinBinProposal,
};
pub use weights::importance_weights;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{HawkesError, Result};
use crate::likelihood::{Objective, WeightedLikelihood};
use crate::model::{aggregate, superpose, BinnedCounts, ModelParams};
use crate::optimize::{maximize, FitResult, OptimizerSettings};
use crate::rng::{derive_seed, rng_from_seed, HawkesRng};

/// Upper clamp for the superposed branching ratio.
pub const SUPERPOSED_GAMMA_MAX: f64 = 1.0 - 1e-6;

/// Parameters of the univariate proposal process for the superposed counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperposedParams {
    pub nu_t: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
}

impl SuperposedParams {
    pub fn new(nu_t: f64, alpha_t: f64, beta_t: f64) -> Result<Self> {
        if !(nu_t > 0.0 && alpha_t >= 0.0 && beta_t > 0.0) || !(nu_t + alpha_t + beta_t).is_finite() {
            return Err(HawkesError::arg("superposed parameters need nu > 0, alpha >= 0, beta > 0"));
        }
        if alpha_t / beta_t >= 1.0 {
            return Err(HawkesError::Stationarity { radius: alpha_t / beta_t });
        }
        Ok(Self { nu_t, alpha_t, beta_t })
    }

    pub fn gamma(&self) -> f64 {
        self.alpha_t / self.beta_t
    }
}

/// Superposed parameters that keep the stationary rate equal to the
/// observed event rate `sum_p totals_p / horizon`.
pub fn reparameterize_with_totals(params: &ModelParams, horizon: f64, totals: &[f64]) -> Result<SuperposedParams> {
    let total: f64 = totals.iter().sum();
    if !(total > 0.0) {
        return Err(HawkesError::DegenerateData("no observed events".into()));
    }
    let nu_t: f64 = params.nu.iter().sum();
    let beta_t = params.beta.mean();
    let gamma_t = (1.0 - horizon * nu_t / total).clamp(0.0, SUPERPOSED_GAMMA_MAX);
    SuperposedParams::new(nu_t, beta_t * gamma_t, beta_t)
}

/// Superposed proposal parameters from observed per-process totals.
pub fn reparameterize(params: &ModelParams, binned: &BinnedCounts) -> Result<SuperposedParams> {
    if params.dim() != binned.dim() {
        return Err(HawkesError::arg("parameter and count dimensions differ"));
    }
    let totals: Vec<f64> = binned.column_totals().iter().map(|&c| c as f64).collect();
    reparameterize_with_totals(params, binned.horizon(), &totals)
}

/// Random starting point: `nu, alpha ~ U(0.1, 1)`, `beta ~ U(1, 4)`,
/// redrawn until `rho(gamma) < 0.95`.
pub fn init_params(p: usize, rng: &mut HawkesRng) -> Result<ModelParams> {
    if p == 0 {
        return Err(HawkesError::arg("P must be at least 1"));
    }
    loop {
        let nu: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..1.0)).collect();
        let alpha: Vec<f64> = (0..p * p).map(|_| rng.random_range(0.1..1.0)).collect();
        let beta: Vec<f64> = (0..p * p).map(|_| rng.random_range(1.0..4.0)).collect();
        let params = ModelParams::from_rows(&nu, &alpha, &beta)?;
        if params.branching_radius() < 0.95 {
            return Ok(params);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McemConfig {
    /// Monte Carlo samples per E-step (`M`).
    pub samples: usize,
    /// Allocations tried per superposed sample (`m_tilde`).
    pub allocations: usize,
    /// Stop once the Euclidean parameter change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub proposal: WithinBinProposal,
    pub optimizer: OptimizerSettings,
    /// Starting point; drawn with [`init_params`] when absent.
    pub init: Option<ModelParams>,
}

impl Default for McemConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            allocations: 10,
            tol: 1e-3,
            max_iter: 100,
            seed: 0,
            proposal: WithinBinProposal::default(),
            optimizer: OptimizerSettings::default(),
            init: None,
        }
    }
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.allocations == 0 || self.max_iter == 0 {
            return Err(HawkesError::arg("samples, allocations and max_iter must be positive"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(HawkesError::arg("tolerance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Weighted proposals of one E-step and the objective they define.
#[derive(Debug, Clone)]
pub struct EStep {
    pub samples: Vec<ProposalSample>,
    pub objective: WeightedLikelihood,
}

/// Draws `M` weighted consistent proposals under `params`. Sample `k` of
/// iteration `iteration` uses its own stream derived from `seed`, so the
/// result does not depend on thread scheduling.
pub fn e_step(
    binned: &BinnedCounts,
    params: &ModelParams,
    config: &McemConfig,
    iteration: u64,
) -> Result<EStep> {
    let sp = reparameterize(params, binned)?;
    let sup = superpose(binned);
    let mut samples: Vec<ProposalSample> = (0..config.samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[iteration, k]));
            let (times, logq_seq) = sample_superposed_times(&sp, &sup, config.proposal, &mut rng)?;
            let sample = best_allocation(&times, logq_seq, binned, config.allocations, params, &mut rng)?;
            if aggregate(&sample.events, binned.delta())? != *binned {
                return Err(HawkesError::Consistency("proposal does not reproduce the observed counts".into()));
            }
            Ok(sample)
        })
        .collect::<Result<_>>()?;
    let logp: Vec<f64> = samples.iter().map(|s| s.logp).collect();
    let logq: Vec<f64> = samples.iter().map(ProposalSample::log_q).collect();
    let weights = importance_weights(&logp, &logq)?;
    for (s, w) in samples.iter_mut().zip(&weights) {
        s.weight = *w;
    }
    let objective = WeightedLikelihood::new(samples.iter().map(|s| (s.weight, s.events.clone())).collect());
    Ok(EStep { samples, objective })
}

/// Maximises the weighted objective, warm-started at `current`.
pub fn m_step(objective: &dyn Objective, current: &ModelParams, settings: &OptimizerSettings) -> Result<FitResult> {
    maximize(objective, current, settings)
}

/// Result of a full MC-EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct McemFit {
    /// `loglik` holds the weighted objective at the final parameters;
    /// `trajectory` holds one flattened parameter vector per EM iteration.
    pub fit: FitResult,
    /// Parameter-change norm after each iteration.
    pub changes: Vec<f64>,
}

/// Runs MC-EM until the parameter change drops below `config.tol` or
/// `config.max_iter` iterations have run. Returns the final iterate.
pub fn mcem_fit(binned: &BinnedCounts, config: &McemConfig) -> Result<McemFit> {
    config.validate()?;
    if binned.total() == 0 {
        return Err(HawkesError::DegenerateData("all counts are zero".into()));
    }
    let mut theta = match &config.init {
        Some(init) => {
            if init.dim() != binned.dim() {
                return Err(HawkesError::arg("initial parameters do not match the count dimension"));
            }
            init.ensure_stationary()?;
            init.clone()
        }
        None => init_params(binned.dim(), &mut rng_from_seed(derive_seed(config.seed, &[u64::MAX])))?,
    };
    let mut trajectory = vec![theta.to_flat()];
    let mut changes = Vec::new();
    let mut converged = false;
    let mut value = f64::NAN;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let estep = e_step(binned, &theta, config, iterations as u64)?;
        let step = m_step(&estep.objective, &theta, &config.optimizer)?;
        let change = theta
            .to_flat()
            .iter()
            .zip(step.params.to_flat())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        theta = step.params;
        value = step.loglik;
        iterations += 1;
        trajectory.push(theta.to_flat());
        changes.push(change);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(McemFit {
        fit: FitResult { params: theta, loglik: value, iterations, converged, trajectory },
        changes,
    })
}
