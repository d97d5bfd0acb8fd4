//! Parameter estimation for multivariate Hawkes processes with exponential
//! kernels when only binned event counts are observed.
//!
//! The main entry points are [`mcem::mcem_fit`] (Monte Carlo EM on binned
//! counts), [`optimize::fit_mle`] (exact continuous-time MLE), the baseline
//! estimators in [`baselines`], and the time-rescaling diagnostics in [`gof`].

pub mod baselines;
pub mod error;
pub mod gof;
pub mod io;
pub mod likelihood;
pub mod mcem;
pub mod model;
pub mod optimize;
pub mod rng;
pub mod simulate;
pub mod study;

pub use error::{HawkesError, Result};
pub use model::{
    aggregate, branching_ratio, cif_eval, compensator, spectral_radius, stationary_intensity, superpose,
    BinnedCounts, EventSequence, ModelParams,
};
pub use simulate::simulate;
