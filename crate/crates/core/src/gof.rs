//! Time-rescaling goodness of fit.
//!
//! Under the fitted model the compensator maps each process to a unit-rate
//! Poisson process, so the gaps between transformed times should be Exp(1).

use crate::error::{HawkesError, Result};
use crate::likelihood::build_recursions;
use crate::model::{EventSequence, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessGof {
    /// `Lambda_p(t_k)` for every event of the process.
    pub transformed: Vec<f64>,
    /// Gaps between transformed times, the first measured from 0.
    pub interarrivals: Vec<f64>,
    /// Kolmogorov-Smirnov distance between the gaps and Exp(1).
    pub ks_stat: f64,
    /// `(sorted gap, Exp(1) quantile at (i - 0.5) / n)`.
    pub qq_pairs: Vec<(f64, f64)>,
}

impl ProcessGof {
    fn empty() -> Self {
        Self { transformed: Vec::new(), interarrivals: Vec::new(), ks_stat: f64::NAN, qq_pairs: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.interarrivals.is_empty()
    }

    /// Critical value `1.36 / sqrt(n)` of the two-sided KS test at 5%.
    pub fn ks_critical_5pct(&self) -> f64 {
        1.36 / (self.interarrivals.len() as f64).sqrt()
    }

    pub fn passes_ks_5pct(&self) -> bool {
        !self.is_empty() && self.ks_stat < self.ks_critical_5pct()
    }
}

/// One entry per process; processes with fewer than two events are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub processes: Vec<ProcessGof>,
}

/// Exact KS distance between `sample` and the Exp(1) distribution.
pub fn ks_exponential(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = -(-v.max(0.0)).exp_m1();
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Compensator values at every event, process by process.
pub fn compensator_at_events(params: &ModelParams, events: &EventSequence) -> Result<Vec<Vec<f64>>> {
    let dim = params.dim();
    if events.dim() != dim {
        return Err(HawkesError::arg("parameter and event dimensions differ"));
    }
    let rec = build_recursions(events, &params.beta);
    let mut out = Vec::with_capacity(dim);
    for p in 0..dim {
        let times = events.process(p);
        // Lambda_p(t_k) = nu t_k + sum_n alpha/beta sum_{t_i^n < t_k} (1 - e^{-beta (t_k - t_i^n)})
        let mut counts_before = vec![0usize; dim];
        let mut values = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let mut v = params.nu[p] * t;
            for n in 0..dim {
                let src = events.process(n);
                let c = &mut counts_before[n];
                while *c < src.len() && src[*c] < t {
                    *c += 1;
                }
                let beta = params.beta[(p, n)];
                v += params.alpha[(p, n)] / beta * (*c as f64 - rec.r(p, n)[k]);
            }
            values.push(v);
        }
        out.push(values);
    }
    Ok(out)
}

/// Transforms every process by its compensator and compares the gaps with Exp(1).
pub fn transform_times(params: &ModelParams, events: &EventSequence) -> Result<GofReport> {
    let transformed = compensator_at_events(params, events)?;
    let processes = transformed
        .into_iter()
        .map(|tr| {
            if tr.len() < 2 {
                return ProcessGof::empty();
            }
            let mut interarrivals = Vec::with_capacity(tr.len());
            let mut prev = 0.0;
            for &v in &tr {
                interarrivals.push(v - prev);
                prev = v;
            }
            let ks_stat = ks_exponential(&interarrivals);
            let mut sorted = interarrivals.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            let qq_pairs = sorted
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, -(-((i as f64 + 0.5) / n)).ln_1p()))
                .collect();
            ProcessGof { transformed: tr, interarrivals, ks_stat, qq_pairs }
        })
        .collect();
    Ok(GofReport { processes })
}
