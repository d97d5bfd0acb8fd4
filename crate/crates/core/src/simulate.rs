//! Exact simulation by thinning.
//!
//! Between events every exponential-kernel intensity decays, so the total
//! intensity just after the latest accepted or rejected candidate bounds the
//! intensity until the next candidate.

use rand::Rng;

use crate::error::{HawkesError, Result};
use crate::model::{EventSequence, ModelParams};
use crate::rng::{rng_from_seed, HawkesRng};

/// Draws one realisation on `[0, horizon)`; deterministic given `seed`.
pub fn simulate(params: &ModelParams, horizon: f64, seed: u64) -> Result<EventSequence> {
    let mut rng = rng_from_seed(seed);
    simulate_with_rng(params, horizon, &mut rng)
}

pub fn simulate_with_rng(
    params: &ModelParams,
    horizon: f64,
    rng: &mut HawkesRng,
) -> Result<EventSequence> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HawkesError::arg("horizon must be finite and positive"));
    }
    if params.nu.iter().any(|&v| v < 0.0) || params.alpha.iter().any(|&v| v < 0.0) {
        return Err(HawkesError::arg("simulation needs nu >= 0 and alpha >= 0"));
    }
    params.ensure_stationary()?;

    let dim = params.dim();
    let mut times = vec![Vec::new(); dim];
    // excitation[p * dim + m]: current contribution of process m's past to process p
    let mut excitation = vec![0.0; dim * dim];
    let mut intensities = vec![0.0; dim];
    let mut t = 0.0;
    let mut bound: f64 = params.nu.iter().sum();

    while bound > 0.0 {
        let wait = -(1.0 - rng.random::<f64>()).ln() / bound;
        let candidate = t + wait;
        if candidate >= horizon {
            break;
        }
        let dt = candidate - t;
        t = candidate;
        let mut total = 0.0;
        for p in 0..dim {
            let mut lambda = params.nu[p];
            for m in 0..dim {
                let e = &mut excitation[p * dim + m];
                *e *= (-params.beta[(p, m)] * dt).exp();
                lambda += *e;
            }
            intensities[p] = lambda;
            total += lambda;
        }
        let u = rng.random::<f64>() * bound;
        if u < total {
            // pick the process proportionally to its intensity
            let mut target = u;
            let mut chosen = dim - 1;
            for (p, &lambda) in intensities.iter().enumerate() {
                if target < lambda {
                    chosen = p;
                    break;
                }
                target -= lambda;
            }
            if times[chosen].last().is_none_or(|&last| t > last) {
                times[chosen].push(t);
                for p in 0..dim {
                    excitation[p * dim + chosen] += params.alpha[(p, chosen)];
                }
                total += params.alpha.column(chosen).sum();
            }
        }
        bound = total;
    }
    EventSequence::new(times, horizon)
}
