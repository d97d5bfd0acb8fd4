//! Consistent latent-time proposals.
//!
//! Superposed times are drawn bin by bin, one point at a time, from a density
//! built on the superposed intensity `nu + alpha sum exp(-beta (t - s_i))`
//! restricted to the part of the bin after the previous point. The log
//! density of every draw is accumulated so the proposal can be importance
//! weighted. Points are then split between processes uniformly at random,
//! matching the observed per-process counts of each bin.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{HawkesError, Result};
use crate::likelihood::loglik;
use crate::model::{bin_of, BinnedCounts, EventSequence, ModelParams};
use crate::rng::HawkesRng;

use super::SuperposedParams;

/// Shape of the within-bin draw density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WithinBinProposal {
    /// Density proportional to the superposed intensity on `(previous point, bin end)`.
    Intensity,
    /// Intensity times `(bin end - t)^r`, `r` being the number of points
    /// still to place in the bin. With a constant intensity this reproduces
    /// the uniform order statistics exactly.
    #[default]
    OrderStatistic,
}

impl WithinBinProposal {
    pub fn name(self) -> &'static str {
        match self {
            WithinBinProposal::Intensity => "intensity",
            WithinBinProposal::OrderStatistic => "order-statistic",
        }
    }
}

impl std::str::FromStr for WithinBinProposal {
    type Err = HawkesError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intensity" => Ok(WithinBinProposal::Intensity),
            "order-statistic" | "order_statistic" => Ok(WithinBinProposal::OrderStatistic),
            other => Err(HawkesError::arg(format!("unknown proposal kind '{other}'"))),
        }
    }
}

/// `h_r(x) = int_0^1 exp(-x s) (1 - s)^r ds`.
pub(crate) fn tail_moment(r: u64, x: f64) -> f64 {
    let rf = r as f64;
    if x < 1e-12 {
        return 1.0 / (rf + 1.0) - x / ((rf + 1.0) * (rf + 2.0));
    }
    if x > rf + 1.0 {
        // h_k = (1 - k h_{k-1}) / x, error shrinks by k / x < 1 per step
        let mut h = -(-x).exp_m1() / x;
        for k in 1..=r {
            h = (1.0 - k as f64 * h) / x;
        }
        h
    } else {
        // exp(-x) sum_k x^k / (k! (r + 1 + k)), all terms positive
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut k = 0u64;
        loop {
            let add = term / (rf + 1.0 + k as f64);
            sum += add;
            k += 1;
            term *= x / k as f64;
            if (k as f64) > x && add < 1e-17 * sum {
                break;
            }
        }
        sum * (-x).exp()
    }
}

/// One draw on `(lo, hi)` from the density proportional to
/// `(nu + s exp(-beta (t - lo))) (hi - t)^r`. Returns the time and its log density.
fn draw_in_interval(nu: f64, s: f64, beta: f64, lo: f64, hi: f64, r: u64, u: f64) -> (f64, f64) {
    let len = hi - lo;
    let x = beta * len;
    let rf = r as f64;
    let h_full = tail_moment(r, x);
    // everything below is scaled by len^(r + 1)
    let norm = nu / (rf + 1.0) + s * h_full;
    let target = u * norm;
    let mass = |sigma: f64| {
        let rest = 1.0 - sigma;
        let rest_pow = rest.powf(rf + 1.0);
        nu * (1.0 - rest_pow) / (rf + 1.0) + s * (h_full - (-x * sigma).exp() * rest_pow * tail_moment(r, x * rest))
    };
    let density = |sigma: f64| (nu + s * (-x * sigma).exp()) * (1.0 - sigma).powf(rf);

    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut sigma = u.clamp(1e-9, 1.0 - 1e-9);
    for _ in 0..200 {
        let f = mass(sigma) - target;
        if f > 0.0 {
            b = sigma;
        } else {
            a = sigma;
        }
        let d = density(sigma);
        let mut next = if d > 0.0 { sigma - f / d } else { f64::NAN };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        let done = (next - sigma).abs() <= 1e-13 || b - a <= 1e-13;
        sigma = next;
        if done {
            break;
        }
    }
    let mut t = lo + sigma * len;
    if t <= lo {
        t = lo.next_up();
    }
    if t >= hi {
        t = hi.next_down();
    }
    let sigma = (t - lo) / len;
    let log_density = (nu + s * (-x * sigma).exp()).ln() + rf * (1.0 - sigma).ln() - len.ln() - norm.ln();
    (t, log_density)
}

/// Draws superposed times matching `superposed` bin by bin.
/// Returns the strictly increasing times and the log density of the draw.
/// Fails with a numerical error if the points of a bin crowd together
/// beyond floating-point resolution.
pub fn sample_superposed_times(
    sp: &SuperposedParams,
    superposed: &BinnedCounts,
    kind: WithinBinProposal,
    rng: &mut HawkesRng,
) -> Result<(Vec<f64>, f64)> {
    if superposed.dim() != 1 {
        return Err(HawkesError::arg("superposed counts must have a single column"));
    }
    let mut times = Vec::with_capacity(superposed.total() as usize);
    let mut log_q = 0.0;
    // excitation just after the latest point, and that point's time
    let mut excitation = 0.0;
    let mut last = f64::NEG_INFINITY;
    for bin in 0..superposed.bins() {
        let count = superposed.get(bin, 0);
        if count == 0 {
            continue;
        }
        let hi = superposed.bin_end(bin);
        let mut lo = superposed.bin_start(bin).max(last);
        for i in 0..count {
            let r = match kind {
                WithinBinProposal::Intensity => 0,
                WithinBinProposal::OrderStatistic => count - 1 - i,
            };
            let s_lo = if last.is_finite() { excitation * (-sp.beta_t * (lo - last)).exp() } else { 0.0 };
            let (t, log_density) = draw_in_interval(sp.nu_t, s_lo, sp.beta_t, lo, hi, r, rng.random::<f64>());
            if t <= last || t >= hi {
                return Err(HawkesError::Numerical(format!(
                    "no representable room left for {} more points in bin {bin}",
                    count - i
                )));
            }
            log_q += log_density;
            excitation = s_lo * (-sp.beta_t * (t - lo)).exp() + sp.alpha_t;
            last = t;
            lo = t;
            times.push(t);
        }
    }
    Ok((times, log_q))
}

/// Result of splitting superposed times between processes.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub events: EventSequence,
    /// Process label of each superposed time, in time order.
    pub labels: Vec<usize>,
    /// `log Pr(allocation | times, counts) = sum_j [sum_p log N_j^(p)! - log Ntilde_j!]`.
    pub log_prob: f64,
}

fn ln_factorials(max: u64) -> Vec<f64> {
    let mut table = Vec::with_capacity(max as usize + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Uniformly assigns the points of each bin to processes so that the
/// per-bin, per-process counts match `binned`.
pub fn allocate(times: &[f64], binned: &BinnedCounts, rng: &mut HawkesRng) -> Result<Allocation> {
    if times.len() as u64 != binned.total() {
        return Err(HawkesError::Consistency(format!(
            "{} superposed times for {} observed events",
            times.len(),
            binned.total()
        )));
    }
    let dim = binned.dim();
    let delta = binned.delta();
    let max_row = binned.rows().map(|r| r.iter().sum::<u64>()).max().unwrap_or(0);
    let ln_fact = ln_factorials(max_row);
    let mut per_process = vec![Vec::new(); dim];
    let mut labels = Vec::with_capacity(times.len());
    let mut bin_labels = Vec::new();
    let mut log_prob = 0.0;
    let mut cursor = 0;
    for bin in 0..binned.bins() {
        let row = binned.row(bin);
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        let chunk = &times[cursor..cursor + total as usize];
        if let Some(&bad) = chunk.iter().find(|&&t| bin_of(t, delta, binned.bins()) != bin) {
            return Err(HawkesError::Consistency(format!("time {bad} does not belong to bin {bin}")));
        }
        bin_labels.clear();
        for (p, &c) in row.iter().enumerate() {
            bin_labels.extend(std::iter::repeat_n(p, c as usize));
            log_prob += ln_fact[c as usize];
        }
        log_prob -= ln_fact[total as usize];
        bin_labels.shuffle(rng);
        for (&t, &p) in chunk.iter().zip(&bin_labels) {
            per_process[p].push(t);
            labels.push(p);
        }
        cursor += total as usize;
    }
    let events = EventSequence::new(per_process, binned.horizon())?;
    Ok(Allocation { events, labels, log_prob })
}

/// One weighted latent-time proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSample {
    pub superposed_times: Vec<f64>,
    pub labels: Vec<usize>,
    pub events: EventSequence,
    /// Log density of the superposed draw.
    pub logq_seq: f64,
    /// Log probability of the allocation.
    pub logq_alloc: f64,
    /// Log-likelihood of `events` under the current parameters.
    pub logp: f64,
    /// Normalised importance weight; zero until weights are computed.
    pub weight: f64,
}

impl ProposalSample {
    pub fn log_q(&self) -> f64 {
        self.logq_seq + self.logq_alloc
    }
}

/// Draws `m_tilde` allocations and keeps the one with the largest
/// log-likelihood under `params`.
pub fn best_allocation(
    times: &[f64],
    logq_seq: f64,
    binned: &BinnedCounts,
    m_tilde: usize,
    params: &ModelParams,
    rng: &mut HawkesRng,
) -> Result<ProposalSample> {
    if m_tilde == 0 {
        return Err(HawkesError::arg("m_tilde must be at least 1"));
    }
    let mut best: Option<(Allocation, f64)> = None;
    for _ in 0..m_tilde {
        let candidate = allocate(times, binned, rng)?;
        let logp = loglik(params, &candidate.events);
        if best.as_ref().is_none_or(|(_, b)| logp > *b) {
            best = Some((candidate, logp));
        }
    }
    let (alloc, logp) = best.expect("m_tilde >= 1");
    Ok(ProposalSample {
        superposed_times: times.to_vec(),
        labels: alloc.labels,
        events: alloc.events,
        logq_seq,
        logq_alloc: alloc.log_prob,
        logp,
        weight: 0.0,
    })
}
