//! Simulation studies comparing estimators on replicated data.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{fit_binned_loglik, fit_inar, InarConfig};
use crate::error::{HawkesError, Result};
use crate::gof::transform_times;
use crate::mcem::{init_params, mcem_fit, McemConfig};
use crate::model::{aggregate, BinnedCounts, EventSequence, ModelParams};
use crate::optimize::{fit_mle, OptimizerSettings};
use crate::rng::{derive_seed, rng_from_seed};
use crate::simulate::simulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mcem,
    Mle,
    Binned,
    Inar,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mcem => "mcem",
            Method::Mle => "mle",
            Method::Binned => "binned",
            Method::Inar => "inar",
        }
    }

    /// Whether the method needs event times rather than counts.
    pub fn needs_events(self) -> bool {
        self == Method::Mle
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HawkesError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mcem" => Ok(Method::Mcem),
            "mle" => Ok(Method::Mle),
            "binned" => Ok(Method::Binned),
            "inar" => Ok(Method::Inar),
            other => Err(HawkesError::arg(format!("unknown method '{other}' (expected mcem, mle, binned or inar)"))),
        }
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(HawkesError::arg("method list is empty"));
    }
    Ok(methods)
}

/// Settings shared by every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub mcem: McemConfig,
    pub optimizer: OptimizerSettings,
    /// Defaults to [`InarConfig::for_delta`].
    pub inar: Option<InarConfig>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { mcem: McemConfig::default(), optimizer: OptimizerSettings::default(), inar: None }
    }
}

/// Uniform view of one estimator's output.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodFit {
    pub method: Method,
    pub dim: usize,
    /// Flattened estimates; INAR values may lie outside the parameter space.
    pub estimate: Vec<f64>,
    /// Final objective value; `None` for INAR.
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// False only for INAR estimates that do not form a stationary model.
    pub valid: bool,
}

impl MethodFit {
    pub fn params(&self) -> Option<ModelParams> {
        if !self.valid {
            return None;
        }
        ModelParams::from_flat(self.dim, &self.estimate).ok()
    }
}

/// Fits `method` to counts (or, for MLE, to the event times).
/// `init` seeds the likelihood-based methods; MC-EM uses `settings.mcem.init`
/// when set and otherwise `init`.
pub fn fit_method(
    method: Method,
    binned: Option<&BinnedCounts>,
    events: Option<&EventSequence>,
    init: &ModelParams,
    settings: &FitSettings,
) -> Result<MethodFit> {
    let need_counts = || binned.ok_or_else(|| HawkesError::arg(format!("method {method} needs binned counts")));
    match method {
        Method::Mle => {
            let events = events.ok_or_else(|| HawkesError::arg("method mle needs event times"))?;
            let fit = fit_mle(events, init, &settings.optimizer)?;
            Ok(MethodFit {
                method,
                dim: init.dim(),
                estimate: fit.params.to_flat(),
                loglik: Some(fit.loglik),
                iterations: fit.iterations,
                converged: fit.converged,
                valid: true,
            })
        }
        Method::Binned => {
            let fit = fit_binned_loglik(need_counts()?, init, &settings.optimizer)?;
            Ok(MethodFit {
                method,
                dim: init.dim(),
                estimate: fit.params.to_flat(),
                loglik: Some(fit.loglik),
                iterations: fit.iterations,
                converged: fit.converged,
                valid: true,
            })
        }
        Method::Mcem => {
            let mut config = settings.mcem.clone();
            if config.init.is_none() {
                config.init = Some(init.clone());
            }
            let fit = mcem_fit(need_counts()?, &config)?.fit;
            Ok(MethodFit {
                method,
                dim: init.dim(),
                estimate: fit.params.to_flat(),
                loglik: Some(fit.loglik),
                iterations: fit.iterations,
                converged: fit.converged,
                valid: true,
            })
        }
        Method::Inar => {
            let binned = need_counts()?;
            let config = settings.inar.clone().unwrap_or_else(|| InarConfig::for_delta(binned.delta()));
            let fit = fit_inar(binned, &config)?;
            Ok(MethodFit { method, dim: init.dim(), estimate: fit.estimate, loglik: None, iterations: 1, converged: true, valid: fit.valid })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub truth: ModelParams,
    pub horizon: f64,
    pub delta: f64,
    pub reps: usize,
    pub methods: Vec<Method>,
    /// Fraction dropped from each tail before summarising.
    pub trim: f64,
    pub seed: u64,
    /// `settings.mcem.seed` and `settings.mcem.init` are replaced per replication.
    pub settings: FitSettings,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.truth.ensure_stationary()?;
        if self.reps == 0 || self.methods.is_empty() {
            return Err(HawkesError::arg("a study needs at least one replication and one method"));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(HawkesError::arg("trim must lie in [0, 0.5)"));
        }
        crate::model::bin_count(self.horizon, self.delta)?;
        self.settings.mcem.validate()
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// The fit, or the error message if the method failed.
    pub fit: std::result::Result<MethodFit, String>,
    /// Per-process KS statistics of the true times under the estimate.
    pub ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub event_counts: Vec<usize>,
    pub outcomes: Vec<MethodOutcome>,
}

/// Trimmed summary of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSummary {
    pub truth: f64,
    /// Values kept after dropping failures and trimming.
    pub used: usize,
    pub mean: f64,
    pub sd: f64,
    pub rel_bias: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub failures: usize,
    pub params: Vec<ParamSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub replications: Vec<Replication>,
    pub summaries: Vec<MethodSummary>,
}

/// Drops `floor(trim n)` values from each tail of the sorted sample.
pub fn trim_sorted(values: &[f64], trim: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let drop = (trim * v.len() as f64).floor() as usize;
    if 2 * drop >= v.len() {
        return Vec::new();
    }
    v[drop..v.len() - drop].to_vec()
}

/// Mean, sample sd, relative bias and MSE about `truth` of the trimmed values.
pub fn summarize(values: &[f64], truth: f64, trim: f64) -> ParamSummary {
    let kept = trim_sorted(values, trim);
    let n = kept.len() as f64;
    if kept.is_empty() {
        return ParamSummary { truth, used: 0, mean: f64::NAN, sd: f64::NAN, rel_bias: f64::NAN, mse: f64::NAN };
    }
    let mean = kept.iter().sum::<f64>() / n;
    let sd = if kept.len() > 1 { (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let mse = kept.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n;
    ParamSummary { truth, used: kept.len(), mean, sd, rel_bias: (mean - truth) / truth, mse }
}

/// Per-parameter trimmed summaries for one method. Failed fits are skipped;
/// INAR values that are not positive are skipped before trimming.
pub fn summarize_method(method: Method, reps: &[Replication], truth: &ModelParams, trim: f64) -> MethodSummary {
    let truth = truth.to_flat();
    let fits: Vec<&MethodFit> = reps
        .iter()
        .flat_map(|r| r.outcomes.iter())
        .filter(|o| o.method == method)
        .filter_map(|o| o.fit.as_ref().ok())
        .collect();
    let failures = reps.iter().flat_map(|r| r.outcomes.iter()).filter(|o| o.method == method && o.fit.is_err()).count();
    let params = truth
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let values: Vec<f64> = fits
                .iter()
                .map(|f| f.estimate[i])
                .filter(|v| v.is_finite() && (method != Method::Inar || *v > 0.0))
                .collect();
            summarize(&values, t, trim)
        })
        .collect();
    MethodSummary { method, failures, params }
}

/// Seeds used by replication `rep`: simulation, initial point, MC-EM.
pub fn replication_seeds(seed: u64, rep: usize) -> [u64; 3] {
    let r = rep as u64;
    [derive_seed(seed, &[r, 0]), derive_seed(seed, &[r, 1]), derive_seed(seed, &[r, 2])]
}

fn run_replication(config: &StudyConfig, index: usize) -> Result<Replication> {
    let [sim_seed, init_seed, mcem_seed] = replication_seeds(config.seed, index);
    let events = simulate(&config.truth, config.horizon, sim_seed)?;
    let binned = aggregate(&events, config.delta)?;
    let init = init_params(config.truth.dim(), &mut rng_from_seed(init_seed))?;
    let mut settings = config.settings.clone();
    settings.mcem.seed = mcem_seed;
    settings.mcem.init = None;
    let outcomes = config
        .methods
        .par_iter()
        .map(|&method| {
            let fit = fit_method(method, Some(&binned), Some(&events), &init, &settings).map_err(|e| e.to_string());
            let ks = match fit.as_ref().ok().and_then(MethodFit::params) {
                Some(params) => match transform_times(&params, &events) {
                    Ok(report) => report.processes.iter().map(|p| p.ks_stat).collect(),
                    Err(_) => vec![f64::NAN; events.dim()],
                },
                None => vec![f64::NAN; events.dim()],
            };
            MethodOutcome { method, fit, ks }
        })
        .collect();
    Ok(Replication { index, event_counts: events.counts(), outcomes })
}

/// Runs every replication (in parallel) and summarises each method.
/// Results depend only on the configuration, not on scheduling.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let replications: Vec<Replication> =
        (0..config.reps).into_par_iter().map(|i| run_replication(config, i)).collect::<Result<_>>()?;
    let summaries =
        config.methods.iter().map(|&m| summarize_method(m, &replications, &config.truth, config.trim)).collect();
    Ok(StudyResult { replications, summaries })
}
