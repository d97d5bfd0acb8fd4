mod common;

use common::*;
use hawkes_agg::likelihood::{loglik, ExactLikelihood, Objective, WeightedLikelihood};
use hawkes_agg::mcem::{
    allocate, best_allocation, e_step, importance_weights, init_params, m_step, mcem_fit, reparameterize,
    reparameterize_with_totals, sample_superposed_times, McemConfig, SuperposedParams, WithinBinProposal,
};
use hawkes_agg::optimize::{fit_mle, OptimizerSettings};
use hawkes_agg::rng::rng_from_seed;
use hawkes_agg::{aggregate, cif_eval, simulate, stationary_intensity, superpose, BinnedCounts, EventSequence, ModelParams};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_stat(observed: &[usize], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum()
}

fn chi_square_critical(cells: usize, level: f64) -> f64 {
    ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(1.0 - level)
}

/// Unnormalised within-bin proposal density at `t`, by direct summation over earlier points.
fn proposal_density(sp: &SuperposedParams, earlier: &[f64], t: f64, hi: f64, r: u64) -> f64 {
    let excitation: f64 = earlier.iter().map(|&s| (-sp.beta_t * (t - s)).exp()).sum();
    (sp.nu_t + sp.alpha_t * excitation) * (hi - t).powi(r as i32)
}

/// Probability integral transforms of every drawn point, and the oracle log density of the draw.
fn pit_and_logq(sp: &SuperposedParams, sup: &BinnedCounts, times: &[f64], kind: WithinBinProposal) -> (Vec<f64>, f64) {
    let mut pits = Vec::new();
    let mut logq = 0.0;
    let mut cursor = 0;
    for bin in 0..sup.bins() {
        let count = sup.get(bin, 0) as usize;
        let hi = sup.bin_end(bin);
        for i in 0..count {
            let idx = cursor + i;
            let lo = if i == 0 { sup.bin_start(bin) } else { times[idx - 1] };
            let r = match kind {
                WithinBinProposal::Intensity => 0,
                WithinBinProposal::OrderStatistic => (count - 1 - i) as u64,
            };
            let earlier = &times[..idx];
            let f = |u: f64| proposal_density(sp, earlier, u, hi, r);
            let norm = integrate(&f, lo, hi, 1e-12);
            let t = times[idx];
            pits.push(integrate(&f, lo, t, 1e-12) / norm);
            logq += (f(t) / norm).ln();
        }
        cursor += count;
    }
    (pits, logq)
}

fn check_sampler(kind: WithinBinProposal, draws: u64) {
    let sp = SuperposedParams::new(0.6, 1.4, 2.0).unwrap();
    let sup = BinnedCounts::from_rows(&[vec![2], vec![0], vec![3]], 1.0).unwrap();
    let cells = 20;
    let mut hist = vec![0usize; cells];
    let mut total = 0;
    for seed in 0..draws {
        let mut rng = rng_from_seed(seed);
        let (times, logq) = sample_superposed_times(&sp, &sup, kind, &mut rng).unwrap();
        assert_eq!(times.len(), 5);
        let (pits, oracle_logq) = pit_and_logq(&sp, &sup, &times, kind);
        if seed < 200 {
            assert!((logq - oracle_logq).abs() < 1e-7 * oracle_logq.abs().max(1.0), "{logq} vs {oracle_logq}");
        }
        for u in pits {
            hist[((u * cells as f64) as usize).min(cells - 1)] += 1;
            total += 1;
        }
    }
    let expected = vec![total as f64 / cells as f64; cells];
    let stat = chi_square_stat(&hist, &expected);
    assert!(stat < chi_square_critical(cells, 0.01), "{kind:?}: chi-square {stat}");
}

#[test]
fn sampler_matches_order_statistic_density() {
    check_sampler(WithinBinProposal::OrderStatistic, 10_000);
}

#[test]
fn sampler_matches_truncated_intensity_density() {
    check_sampler(WithinBinProposal::Intensity, 10_000);
}

#[test]
fn sampler_trivial_cases() {
    let sp = SuperposedParams::new(0.5, 0.0, 1.0).unwrap();
    let zeros = BinnedCounts::from_rows(&[vec![0], vec![0]], 1.0).unwrap();
    let (times, logq) = sample_superposed_times(&sp, &zeros, WithinBinProposal::default(), &mut rng_from_seed(1)).unwrap();
    assert!(times.is_empty());
    assert_eq!(logq, 0.0);

    let single = BinnedCounts::from_rows(&[vec![1]], 2.5).unwrap();
    for kind in [WithinBinProposal::Intensity, WithinBinProposal::OrderStatistic] {
        let (times, logq) = sample_superposed_times(&sp, &single, kind, &mut rng_from_seed(3)).unwrap();
        assert!(times[0] > 0.0 && times[0] < 2.5);
        assert!((logq + 2.5f64.ln()).abs() < 1e-12);
    }

    // constant intensity: the order-statistic proposal is the uniform order-statistic density N!/delta^N
    let four = BinnedCounts::from_rows(&[vec![4]], 2.0).unwrap();
    let (_, logq) = sample_superposed_times(&sp, &four, WithinBinProposal::OrderStatistic, &mut rng_from_seed(5)).unwrap();
    assert!((logq - (24f64.ln() - 4.0 * 2f64.ln())).abs() < 1e-10);
}

fn label_sequences(row: &[u64]) -> Vec<Vec<usize>> {
    // every arrangement of the multiset of process labels in a bin
    fn rec(remaining: &mut Vec<u64>, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining.iter().all(|&c| c == 0) {
            out.push(current.clone());
            return;
        }
        for p in 0..remaining.len() {
            if remaining[p] > 0 {
                remaining[p] -= 1;
                current.push(p);
                rec(remaining, current, out);
                current.pop();
                remaining[p] += 1;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut row.to_vec(), &mut Vec::new(), &mut out);
    out
}

fn times_for(binned: &BinnedCounts) -> Vec<f64> {
    let mut times = Vec::new();
    for bin in 0..binned.bins() {
        let n: u64 = binned.row(bin).iter().sum();
        for i in 0..n {
            times.push(binned.bin_start(bin) + binned.delta() * (i as f64 + 1.0) / (n as f64 + 1.0));
        }
    }
    times
}

#[test]
fn allocation_log_probability_matches_enumeration() {
    let mut rng = rng_from_seed(17);
    use rand::Rng;
    for case in 0..40 {
        let p = 1 + case % 3;
        let rows: Vec<Vec<u64>> = (0..5)
            .map(|_| {
                let total = rng.random_range(0..=6u64);
                let mut row = vec![0u64; p];
                for _ in 0..total {
                    row[rng.random_range(0..p)] += 1;
                }
                row
            })
            .collect();
        let binned = BinnedCounts::from_rows(&rows, 1.0).unwrap();
        let times = times_for(&binned);
        let alloc = allocate(&times, &binned, &mut rng).unwrap();
        let enumerated: f64 = rows.iter().map(|r| -(label_sequences(r).len() as f64).ln()).sum();
        assert!((alloc.log_prob - enumerated).abs() <= 1e-12, "{} vs {enumerated}", alloc.log_prob);
        assert_eq!(aggregate(&alloc.events, 1.0).unwrap(), binned);
        if p == 1 {
            assert_eq!(alloc.log_prob, 0.0);
            assert!(alloc.labels.iter().all(|&l| l == 0));
        }
    }
}

#[test]
fn allocation_is_uniform_over_arrangements() {
    let row = vec![2u64, 1, 1];
    let binned = BinnedCounts::from_rows(&[row.clone()], 1.0).unwrap();
    let times = times_for(&binned);
    let arrangements = label_sequences(&row);
    assert_eq!(arrangements.len(), 12);
    let mut hist = vec![0usize; arrangements.len()];
    let mut rng = rng_from_seed(99);
    let draws = 24_000;
    for _ in 0..draws {
        let alloc = allocate(&times, &binned, &mut rng).unwrap();
        let k = arrangements.iter().position(|a| *a == alloc.labels).unwrap();
        hist[k] += 1;
        assert!((alloc.log_prob + 12f64.ln()).abs() < 1e-12);
    }
    let expected = vec![draws as f64 / 12.0; 12];
    assert!(chi_square_stat(&hist, &expected) < chi_square_critical(12, 0.01));

    let pair = BinnedCounts::from_rows(&[vec![1, 1]], 1.0).unwrap();
    let alloc = allocate(&times_for(&pair), &pair, &mut rng).unwrap();
    assert!((alloc.log_prob + 2f64.ln()).abs() < 1e-15);
}

#[test]
fn allocation_rejects_inconsistent_times() {
    let binned = BinnedCounts::from_rows(&[vec![1, 0], vec![0, 1]], 1.0).unwrap();
    assert!(allocate(&[0.2], &binned, &mut rng_from_seed(0)).is_err());
    assert!(allocate(&[0.2, 0.4], &binned, &mut rng_from_seed(0)).is_err());
}

fn paper_binned(horizon: f64, seed: u64) -> (EventSequence, BinnedCounts) {
    let ev = simulate(&paper_params(), horizon, seed).unwrap();
    let binned = aggregate(&ev, 1.0).unwrap();
    (ev, binned)
}

#[test]
fn best_allocation_keeps_the_most_likely_candidate() {
    let (_, binned) = paper_binned(60.0, 4);
    let params = paper_params();
    let sp = reparameterize(&params, &binned).unwrap();
    let (times, logq_seq) =
        sample_superposed_times(&sp, &superpose(&binned), WithinBinProposal::default(), &mut rng_from_seed(8)).unwrap();
    let rng = rng_from_seed(21);
    let chosen = best_allocation(&times, logq_seq, &binned, 10, &params, &mut rng.clone()).unwrap();
    let mut replay = rng.clone();
    let candidates: Vec<f64> =
        (0..10).map(|_| loglik(&params, &allocate(&times, &binned, &mut replay).unwrap().events)).collect();
    assert!(candidates.iter().all(|&c| chosen.logp >= c));
    assert!(candidates.contains(&chosen.logp));
    assert_eq!(chosen.logq_seq, logq_seq);

    let single = best_allocation(&times, logq_seq, &binned, 1, &params, &mut rng.clone()).unwrap();
    let direct = allocate(&times, &binned, &mut rng.clone()).unwrap();
    assert_eq!(single.labels, direct.labels);
    assert_eq!(single.logq_alloc, direct.log_prob);
}

#[test]
fn selection_favours_likely_allocations_under_asymmetric_excitation() {
    let params = ModelParams::from_rows(&[0.3, 0.3], &[0.05, 1.2, 0.05, 0.05], &[1.0, 1.5, 1.0, 1.0]).unwrap();
    let ev = simulate(&params, 80.0, 13).unwrap();
    let binned = aggregate(&ev, 1.0).unwrap();
    let sp = reparameterize(&params, &binned).unwrap();
    let mut selected = 0.0;
    let mut unselected = 0.0;
    for trial in 0..100u64 {
        let mut rng = rng_from_seed(1000 + trial);
        let (times, logq) = sample_superposed_times(&sp, &superpose(&binned), WithinBinProposal::default(), &mut rng).unwrap();
        selected += best_allocation(&times, logq, &binned, 10, &params, &mut rng).unwrap().logp;
        unselected += loglik(&params, &allocate(&times, &binned, &mut rng).unwrap().events);
    }
    assert!(selected > unselected, "{selected} vs {unselected}");
}

#[test]
fn importance_weight_examples() {
    let w = importance_weights(&[1.0, 1.0, 1.0, 1.0], &[0.0; 4]).unwrap();
    assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    let w = importance_weights(&[0.0, 3f64.ln()], &[0.0, 0.0]).unwrap();
    assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    let w = importance_weights(&[-1e6, 0.0], &[0.0, 0.0]).unwrap();
    assert_eq!(w, vec![0.0, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_shift_invariant(d in prop::collection::vec(-50.0f64..50.0, 1..30), shift in -1000.0f64..1000.0) {
        let zeros = vec![0.0; d.len()];
        let base = importance_weights(&d, &zeros).unwrap();
        let shifted: Vec<f64> = d.iter().map(|x| x + shift).collect();
        let moved = importance_weights(&shifted, &zeros).unwrap();
        let via_q = importance_weights(&zeros, &d.iter().map(|x| -x).collect::<Vec<_>>()).unwrap();
        prop_assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..d.len() {
            prop_assert!(base[i] >= 0.0);
            prop_assert!((base[i] - moved[i]).abs() < 1e-12);
            prop_assert!((base[i] - via_q[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn superposed_intensity_is_the_sum_of_components(seed in 0u64..5_000, t_frac in 0.0f64..1.0) {
        // shared decay and alpha_pm = alpha_t / P: the pooled history drives every component equally
        let p = 3;
        let alpha_t = 0.9;
        let beta_t = 2.0;
        let nu = [0.2, 0.3, 0.1];
        let params = ModelParams::from_rows(&nu, &vec![alpha_t / p as f64; p * p], &vec![beta_t; p * p]).unwrap();
        let ev = simulate(&params, 30.0, seed).unwrap();
        let t = 30.0 * t_frac;
        let sum: f64 = (0..p).map(|q| cif_eval(&params, &ev, t, q).unwrap()).sum();
        let pooled: Vec<f64> = ev.times().iter().flatten().copied().collect();
        let direct = nu.iter().sum::<f64>() + alpha_t * pooled.iter().filter(|&&s| s < t).map(|&s| (-beta_t * (t - s)).exp()).sum::<f64>();
        prop_assert!((sum - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn consistent_proposals_reproduce_counts(seed in 0u64..5_000) {
        let truth = random_params(2, seed);
        let ev = simulate(&truth, 40.0, seed).unwrap();
        let binned = aggregate(&ev, 1.0).unwrap();
        prop_assume!(binned.total() > 0);
        let params = init_params(2, &mut rng_from_seed(seed)).unwrap();
        let config = McemConfig { samples: 4, allocations: 3, seed, ..McemConfig::default() };
        let estep = e_step(&binned, &params, &config, 0).unwrap();
        let total: f64 = estep.samples.iter().map(|s| s.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for s in &estep.samples {
            prop_assert!(s.weight >= 0.0);
            prop_assert_eq!(&aggregate(&s.events, 1.0).unwrap(), &binned);
            prop_assert_eq!(&aggregate(&EventSequence::new(vec![s.superposed_times.clone()], binned.horizon()).unwrap(), 1.0).unwrap(), &superpose(&binned));
        }
    }
}

#[test]
fn reparameterization_examples() {
    let params = paper_params();
    let horizon = 2000.0;
    let expected: Vec<f64> = stationary_intensity(&params).unwrap().iter().map(|l| l * horizon).collect();
    let sp = reparameterize_with_totals(&params, horizon, &expected).unwrap();
    assert!((sp.nu_t - 0.6).abs() < 1e-15);
    assert!((sp.beta_t - 2.25).abs() < 1e-15);
    assert!((sp.gamma() - 0.7538).abs() < 1e-3);
    assert!((sp.alpha_t - 1.696).abs() < 1e-3);

    let one = ModelParams::from_rows(&[0.4], &[0.9], &[1.8]).unwrap();
    let total = 0.4 * 50.0 / (1.0 - 0.5);
    let sp = reparameterize_with_totals(&one, 50.0, &[total]).unwrap();
    assert!((sp.nu_t - 0.4).abs() < 1e-15 && (sp.alpha_t - 0.9).abs() < 1e-12 && (sp.beta_t - 1.8).abs() < 1e-15);

    let poisson = reparameterize_with_totals(&params, 10.0, &[3.0, 3.0]).unwrap();
    assert_eq!(poisson.alpha_t, 0.0);
}

#[test]
fn init_params_acceptance() {
    let mut rng = rng_from_seed(5);
    for _ in 0..1000 {
        assert!(init_params(2, &mut rng).unwrap().branching_radius() < 0.95);
    }
    let one = init_params(1, &mut rng).unwrap();
    assert!(one.alpha[(0, 0)] / one.beta[(0, 0)] < 0.95);

    // acceptance rate of the underlying rejection step
    use rand::Rng;
    let mut rng = rng_from_seed(6);
    let accepted = (0..1000)
        .filter(|_| {
            let nu = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
            let alpha: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
            let beta: Vec<f64> = (0..4).map(|_| rng.random_range(1.0..4.0)).collect();
            ModelParams::from_rows(&nu, &alpha, &beta).unwrap().branching_radius() < 0.95
        })
        .count();
    assert!(accepted > 200, "{accepted}");
}

#[test]
fn single_sample_objective_is_the_sample_loglik() {
    let (_, binned) = paper_binned(50.0, 2);
    let params = paper_params();
    let config = McemConfig { samples: 1, ..McemConfig::default() };
    let estep = e_step(&binned, &params, &config, 0).unwrap();
    let probe = random_params(2, 77);
    assert_eq!(estep.samples[0].weight, 1.0);
    assert!((estep.objective.value(&probe) - loglik(&probe, &estep.samples[0].events)).abs() < 1e-12);
}

#[test]
fn m_step_reductions() {
    let truth = paper_params();
    let a = simulate(&truth, 150.0, 31).unwrap();
    let b = simulate(&truth, 150.0, 32).unwrap();
    let settings = OptimizerSettings::default();
    let direct = fit_mle(&a, &truth, &settings).unwrap();
    let single = m_step(&WeightedLikelihood::new(vec![(1.0, a.clone())]), &truth, &settings).unwrap();
    let zeroed = m_step(&WeightedLikelihood::new(vec![(1.0, a.clone()), (0.0, b.clone())]), &truth, &settings).unwrap();
    for ((x, y), z) in direct.params.to_flat().iter().zip(single.params.to_flat()).zip(zeroed.params.to_flat()) {
        assert!(rel_err(*x, y) < 1e-8 && rel_err(*x, z) < 1e-8);
    }
}

#[test]
fn weighted_objective_gradient_matches_finite_differences() {
    let truth = paper_params();
    let objective = WeightedLikelihood::new(
        (0..3).map(|k| (0.2 + k as f64, simulate(&truth, 60.0, 50 + k).unwrap())).collect(),
    );
    let at = random_params(2, 8);
    let g = objective.report(&at, false).gradient;
    let flat = at.to_flat();
    let h = 1e-5;
    for i in 0..flat.len() {
        let mut up = flat.clone();
        let mut dn = flat.clone();
        up[i] += h;
        dn[i] -= h;
        let fd = (objective.value(&ModelParams::from_flat(2, &up).unwrap())
            - objective.value(&ModelParams::from_flat(2, &dn).unwrap()))
            / (2.0 * h);
        assert!(rel_err(g[i], fd) < 1e-5, "{i}: {} vs {fd}", g[i]);
    }
    let exact = ExactLikelihood { events: &objective.samples()[0].1 };
    assert_eq!(exact.dim(), 2);
}

#[test]
fn mcem_is_reproducible_and_stays_stationary() {
    let (_, binned) = paper_binned(100.0, 3);
    let config = McemConfig { samples: 5, allocations: 3, max_iter: 6, seed: 11, ..McemConfig::default() };
    let a = mcem_fit(&binned, &config).unwrap();
    let b = mcem_fit(&binned, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fit.trajectory.len(), a.fit.iterations + 1);
    for flat in &a.fit.trajectory {
        assert!(ModelParams::from_flat(2, flat).unwrap().branching_radius() < 1.0);
    }
    let zeros = BinnedCounts::from_rows(&[vec![0, 0], vec![0, 0]], 1.0).unwrap();
    assert!(mcem_fit(&zeros, &config).is_err());
}

#[test]
fn mcem_recovers_poisson_rates() {
    let truth = ModelParams::from_rows(&[0.8, 1.5], &[0.0; 4], &[1.0; 4]).unwrap();
    let ev = simulate(&truth, 600.0, 12).unwrap();
    let binned = aggregate(&ev, 1.0).unwrap();
    let config = McemConfig { samples: 8, allocations: 3, max_iter: 25, seed: 2, ..McemConfig::default() };
    let fit = mcem_fit(&binned, &config).unwrap().fit.params;
    let gamma = fit.branching_ratio();
    for p in 0..2 {
        let mean_rate = binned.column_totals()[p] as f64 / binned.horizon();
        let se = (mean_rate / binned.horizon()).sqrt();
        assert!((fit.nu[p] - mean_rate).abs() < 3.0 * se, "nu {p}: {} vs {mean_rate}", fit.nu[p]);
    }
    assert!(gamma.iter().all(|&g| g < 0.15), "{gamma}");
}
