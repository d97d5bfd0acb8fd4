//! Python bindings: parameter, event and count containers, simulation,
//! exact likelihood, the four estimators and time-rescaling diagnostics.

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use hawkes_agg::baselines::{self, InarConfig};
use hawkes_agg::mcem::{self, McemConfig, WithinBinProposal};
use hawkes_agg::optimize::{self, OptimizerSettings};
use hawkes_agg::{gof, likelihood, HawkesError};

fn to_py(e: HawkesError) -> PyErr {
    match e {
        HawkesError::Numerical(_) | HawkesError::DegenerateWeights => PyArithmeticError::new_err(e.to_string()),
        HawkesError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Multivariate Hawkes parameters: background rates `nu`, excitation sizes
/// `alpha` and decay rates `beta` (P x P, row = receiving process).
#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: hawkes_agg::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(nu: Vec<f64>, alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> PyResult<Self> {
        let flat = |m: Vec<Vec<f64>>| -> PyResult<Vec<f64>> {
            if m.len() != nu.len() || m.iter().any(|r| r.len() != nu.len()) {
                return Err(PyValueError::new_err("alpha and beta must be P x P lists"));
            }
            Ok(m.into_iter().flatten().collect())
        };
        let (a, b) = (flat(alpha)?, flat(beta)?);
        let inner = hawkes_agg::ModelParams::from_rows(&nu, &a, &b).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds parameters from the flattened order `nu`, `alpha` row-major, `beta` row-major.
    #[staticmethod]
    fn from_flat(dim: usize, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: hawkes_agg::ModelParams::from_flat(dim, &values).map_err(to_py)? })
    }

    #[staticmethod]
    fn param_names(dim: usize) -> Vec<String> {
        hawkes_agg::ModelParams::param_names(dim)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn nu(&self) -> Vec<f64> {
        self.inner.nu.iter().copied().collect()
    }

    #[getter]
    fn alpha(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.alpha)
    }

    #[getter]
    fn beta(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.beta)
    }

    fn to_flat(&self) -> Vec<f64> {
        self.inner.to_flat()
    }

    /// `gamma = alpha / beta` entrywise.
    fn branching_ratio(&self) -> Vec<Vec<f64>> {
        rows_of(&hawkes_agg::branching_ratio(&self.inner))
    }

    fn spectral_radius(&self) -> PyResult<f64> {
        hawkes_agg::spectral_radius(&self.inner.branching_ratio()).map_err(to_py)
    }

    fn is_stationary(&self) -> bool {
        self.inner.is_stationary()
    }

    /// `(I - gamma)^-1 nu`.
    fn stationary_intensity(&self) -> PyResult<Vec<f64>> {
        Ok(hawkes_agg::stationary_intensity(&self.inner).map_err(to_py)?.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(nu={:?}, alpha={:?}, beta={:?})", self.nu(), self.alpha(), self.beta())
    }
}

/// Exact event times per process on `[0, horizon)`.
#[pyclass(name = "EventSequence", frozen, from_py_object)]
#[derive(Clone)]
struct PyEventSequence {
    inner: hawkes_agg::EventSequence,
}

#[pymethods]
impl PyEventSequence {
    #[new]
    fn new(times: Vec<Vec<f64>>, horizon: f64) -> PyResult<Self> {
        Ok(Self { inner: hawkes_agg::EventSequence::new(times, horizon).map_err(to_py)? })
    }

    #[getter]
    fn times(&self) -> Vec<Vec<f64>> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn counts(&self) -> Vec<usize> {
        self.inner.counts()
    }

    fn __len__(&self) -> usize {
        self.inner.total()
    }
}

/// Per-bin, per-process counts on bins of width `delta`.
#[pyclass(name = "BinnedCounts", frozen, from_py_object)]
#[derive(Clone)]
struct PyBinnedCounts {
    inner: hawkes_agg::BinnedCounts,
}

#[pymethods]
impl PyBinnedCounts {
    #[new]
    fn new(rows: Vec<Vec<u64>>, delta: f64) -> PyResult<Self> {
        Ok(Self { inner: hawkes_agg::BinnedCounts::from_rows(&rows, delta).map_err(to_py)? })
    }

    fn rows(&self) -> Vec<Vec<u64>> {
        self.inner.rows().map(<[u64]>::to_vec).collect()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn bins(&self) -> usize {
        self.inner.bins()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn column_totals(&self) -> Vec<u64> {
        self.inner.column_totals()
    }
}

/// Result of a maximisation.
#[pyclass(name = "FitResult", frozen, skip_from_py_object)]
struct PyFitResult {
    #[pyo3(get)]
    params: PyModelParams,
    #[pyo3(get)]
    loglik: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    trajectory: Vec<Vec<f64>>,
}

impl From<optimize::FitResult> for PyFitResult {
    fn from(f: optimize::FitResult) -> Self {
        Self {
            params: PyModelParams { inner: f.params },
            loglik: f.loglik,
            iterations: f.iterations,
            converged: f.converged,
            trajectory: f.trajectory,
        }
    }
}

/// INAR(p) fit: raw flattened estimates, which may be negative, and a validity flag.
#[pyclass(name = "InarFit", frozen, skip_from_py_object)]
struct PyInarFit {
    #[pyo3(get)]
    estimate: Vec<f64>,
    #[pyo3(get)]
    intercept: Vec<f64>,
    #[pyo3(get)]
    lags: Vec<Vec<Vec<f64>>>,
    #[pyo3(get)]
    valid: bool,
    dim: usize,
}

#[pymethods]
impl PyInarFit {
    /// The estimate as parameters, or None when it is not a valid stationary model.
    fn params(&self) -> Option<PyModelParams> {
        if !self.valid {
            return None;
        }
        hawkes_agg::ModelParams::from_flat(self.dim, &self.estimate).ok().map(|inner| PyModelParams { inner })
    }
}

/// Time-rescaling diagnostics of one process.
#[pyclass(name = "ProcessGof", frozen, skip_from_py_object)]
struct PyProcessGof {
    #[pyo3(get)]
    transformed: Vec<f64>,
    #[pyo3(get)]
    interarrivals: Vec<f64>,
    #[pyo3(get)]
    ks_stat: f64,
    #[pyo3(get)]
    qq_pairs: Vec<(f64, f64)>,
    #[pyo3(get)]
    ks_critical_5pct: f64,
    #[pyo3(get)]
    passes_ks_5pct: bool,
}

fn settings(max_iter: usize, grad_tol: f64) -> OptimizerSettings {
    OptimizerSettings { max_iter, grad_tol, ..OptimizerSettings::default() }
}

#[pyfunction]
fn simulate(params: &PyModelParams, horizon: f64, seed: u64) -> PyResult<PyEventSequence> {
    Ok(PyEventSequence { inner: hawkes_agg::simulate(&params.inner, horizon, seed).map_err(to_py)? })
}

#[pyfunction]
fn aggregate(events: &PyEventSequence, delta: f64) -> PyResult<PyBinnedCounts> {
    Ok(PyBinnedCounts { inner: hawkes_agg::aggregate(&events.inner, delta).map_err(to_py)? })
}

#[pyfunction]
fn superpose(binned: &PyBinnedCounts) -> PyBinnedCounts {
    PyBinnedCounts { inner: hawkes_agg::superpose(&binned.inner) }
}

/// Conditional intensity of process `p` (zero-based) at time `t`.
#[pyfunction]
fn cif(params: &PyModelParams, events: &PyEventSequence, t: f64, p: usize) -> PyResult<f64> {
    hawkes_agg::cif_eval(&params.inner, &events.inner, t, p).map_err(to_py)
}

#[pyfunction]
fn compensator(params: &PyModelParams, events: &PyEventSequence, t: f64, p: usize) -> PyResult<f64> {
    hawkes_agg::compensator(&params.inner, &events.inner, t, p).map_err(to_py)
}

fn check_dims(params: &PyModelParams, events: &PyEventSequence) -> PyResult<()> {
    if params.inner.dim() != events.inner.dim() {
        return Err(PyValueError::new_err("parameter and event dimensions differ"));
    }
    Ok(())
}

#[pyfunction]
fn loglik(params: &PyModelParams, events: &PyEventSequence) -> PyResult<f64> {
    check_dims(params, events)?;
    Ok(likelihood::loglik(&params.inner, &events.inner))
}

/// Gradient in the flattened parameter order.
#[pyfunction]
fn gradient(params: &PyModelParams, events: &PyEventSequence) -> PyResult<Vec<f64>> {
    check_dims(params, events)?;
    Ok(likelihood::gradient(&params.inner, &events.inner).iter().copied().collect())
}

#[pyfunction]
fn hessian(params: &PyModelParams, events: &PyEventSequence) -> PyResult<Vec<Vec<f64>>> {
    check_dims(params, events)?;
    Ok(rows_of(&likelihood::hessian(&params.inner, &events.inner)))
}

#[pyfunction]
#[pyo3(signature = (events, init, max_iter = 500, grad_tol = 1e-6))]
fn fit_mle(events: &PyEventSequence, init: &PyModelParams, max_iter: usize, grad_tol: f64) -> PyResult<PyFitResult> {
    check_dims(init, events)?;
    Ok(optimize::fit_mle(&events.inner, &init.inner, &settings(max_iter, grad_tol)).map_err(to_py)?.into())
}

/// MC-EM on binned counts; a random start is drawn from `seed` when `init` is None.
#[pyfunction]
#[pyo3(signature = (binned, init = None, samples = 20, allocations = 10, tol = 1e-3, max_iter = 100, seed = 0, proposal = "order-statistic"))]
#[allow(clippy::too_many_arguments)]
fn mcem_fit(
    py: Python<'_>,
    binned: &PyBinnedCounts,
    init: Option<&PyModelParams>,
    samples: usize,
    allocations: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
    proposal: &str,
) -> PyResult<PyFitResult> {
    let proposal: WithinBinProposal = proposal.parse().map_err(to_py)?;
    let config = McemConfig {
        samples,
        allocations,
        tol,
        max_iter,
        seed,
        proposal,
        init: init.map(|p| p.inner.clone()),
        ..McemConfig::default()
    };
    let binned = binned.inner.clone();
    let fit = py.detach(move || mcem::mcem_fit(&binned, &config)).map_err(to_py)?;
    Ok(fit.fit.into())
}

#[pyfunction]
#[pyo3(signature = (binned, init, max_iter = 500, grad_tol = 1e-6))]
fn fit_binned(binned: &PyBinnedCounts, init: &PyModelParams, max_iter: usize, grad_tol: f64) -> PyResult<PyFitResult> {
    Ok(baselines::fit_binned_loglik(&binned.inner, &init.inner, &settings(max_iter, grad_tol)).map_err(to_py)?.into())
}

/// Conditional least-squares INAR(p); the lag order defaults to ceil(10 / delta) capped at 20.
#[pyfunction]
#[pyo3(signature = (binned, lag_order = None, ridge = 1e-8))]
fn fit_inar(binned: &PyBinnedCounts, lag_order: Option<usize>, ridge: f64) -> PyResult<PyInarFit> {
    let mut config = InarConfig::for_delta(binned.inner.delta());
    if let Some(l) = lag_order {
        config.lag_order = l;
    }
    config.ridge = ridge;
    let fit = baselines::fit_inar(&binned.inner, &config).map_err(to_py)?;
    Ok(PyInarFit {
        dim: fit.dim(),
        lags: fit.lags.iter().map(rows_of).collect(),
        estimate: fit.estimate,
        intercept: fit.intercept,
        valid: fit.valid,
    })
}

#[pyfunction]
fn transform_times(params: &PyModelParams, events: &PyEventSequence) -> PyResult<Vec<PyProcessGof>> {
    let report = gof::transform_times(&params.inner, &events.inner).map_err(to_py)?;
    Ok(report
        .processes
        .into_iter()
        .map(|p| PyProcessGof {
            ks_critical_5pct: p.ks_critical_5pct(),
            passes_ks_5pct: p.passes_ks_5pct(),
            transformed: p.transformed,
            interarrivals: p.interarrivals,
            ks_stat: p.ks_stat,
            qq_pairs: p.qq_pairs,
        })
        .collect())
}

#[pyfunction]
fn ks_exponential(sample: Vec<f64>) -> f64 {
    gof::ks_exponential(&sample)
}

/// Superposed proposal parameters `(nu, alpha, beta)` for the observed totals.
#[pyfunction]
fn reparameterize(params: &PyModelParams, binned: &PyBinnedCounts) -> PyResult<(f64, f64, f64)> {
    let sp = mcem::reparameterize(&params.inner, &binned.inner).map_err(to_py)?;
    Ok((sp.nu_t, sp.alpha_t, sp.beta_t))
}

#[pymodule]
fn hawkes_agg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyEventSequence>()?;
    m.add_class::<PyBinnedCounts>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyInarFit>()?;
    m.add_class::<PyProcessGof>()?;
    for f in [
        wrap_pyfunction!(simulate, m)?,
        wrap_pyfunction!(aggregate, m)?,
        wrap_pyfunction!(superpose, m)?,
        wrap_pyfunction!(cif, m)?,
        wrap_pyfunction!(compensator, m)?,
        wrap_pyfunction!(loglik, m)?,
        wrap_pyfunction!(gradient, m)?,
        wrap_pyfunction!(hessian, m)?,
        wrap_pyfunction!(fit_mle, m)?,
        wrap_pyfunction!(mcem_fit, m)?,
        wrap_pyfunction!(fit_binned, m)?,
        wrap_pyfunction!(fit_inar, m)?,
        wrap_pyfunction!(transform_times, m)?,
        wrap_pyfunction!(ks_exponential, m)?,
        wrap_pyfunction!(reparameterize, m)?,
    ] {
        m.add_function(f)?;
    }
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
