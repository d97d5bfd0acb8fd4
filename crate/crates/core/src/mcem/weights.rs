use crate::error::{HawkesError, Result};

/// Normalised importance weights `w_k ∝ exp(logp_k - logq_k - C)`.
///
/// `C` is the largest log-ratio, so the biggest term is exactly `exp(0)`
/// and nothing overflows; the normalised weights do not depend on `C`.
pub fn importance_weights(logp: &[f64], logq: &[f64]) -> Result<Vec<f64>> {
    if logp.len() != logq.len() || logp.is_empty() {
        return Err(HawkesError::arg("logp and logq must be non-empty and of equal length"));
    }
    let d: Vec<f64> = logp.iter().zip(logq).map(|(p, q)| p - q).collect();
    if d.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(HawkesError::Numerical("log-weights must not be NaN or +inf".into()));
    }
    let c = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if c == f64::NEG_INFINITY {
        return Err(HawkesError::DegenerateWeights);
    }
    let unnormalised: Vec<f64> = d.iter().map(|v| (v - c).exp()).collect();
    let total: f64 = unnormalised.iter().sum();
    Ok(unnormalised.into_iter().map(|w| w / total).collect())
}
