mod common;

use common::*;
use hawkes_agg::gof::{ks_exponential, transform_times};
use hawkes_agg::io::{ingest, IngestOptions};
use hawkes_agg::study::{
    run_study, summarize, summarize_method, trim_sorted, FitSettings, Method, MethodFit, MethodOutcome, Replication,
    StudyConfig,
};
use hawkes_agg::{aggregate, simulate, ModelParams};
use proptest::prelude::*;

/// Supremum distance between the empirical CDF and Exp(1), probed on both
/// sides of every jump.
fn ecdf_distance(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let ecdf = |x: f64| sample.iter().filter(|&&v| v <= x).count() as f64 / n;
    let ecdf_left = |x: f64| sample.iter().filter(|&&v| v < x).count() as f64 / n;
    let cdf = |x: f64| 1.0 - (-x).exp();
    sample.iter().map(|&x| (ecdf(x) - cdf(x)).abs().max((ecdf_left(x) - cdf(x)).abs())).fold(0.0, f64::max)
}

#[test]
fn ks_matches_direct_ecdf() {
    for seed in 0..20u64 {
        let ev = simulate(&random_params(2, seed), 60.0, seed).unwrap();
        let report = transform_times(&random_params(2, seed + 1), &ev).unwrap();
        for proc in report.processes.iter().filter(|p| !p.is_empty()) {
            assert!((proc.ks_stat - ecdf_distance(&proc.interarrivals)).abs() < 1e-12);
        }
    }
}

#[test]
fn poisson_identity_transform_and_null_rate() {
    let unit = ModelParams::from_rows(&[1.0], &[0.0], &[1.0]).unwrap();
    let mut passes = 0;
    for seed in 0..100u64 {
        let ev = simulate(&unit, 300.0, seed).unwrap();
        let report = transform_times(&unit, &ev).unwrap();
        let proc = &report.processes[0];
        assert_eq!(proc.transformed, ev.process(0));
        passes += proc.passes_ks_5pct() as usize;
    }
    assert!(passes >= 90, "{passes}");
}

#[test]
fn rescaled_gaps_have_unit_mean() {
    let truth = paper_params();
    for seed in 0..5u64 {
        let ev = simulate(&truth, 2000.0, 500 + seed).unwrap();
        let report = transform_times(&truth, &ev).unwrap();
        for proc in &report.processes {
            let n = proc.interarrivals.len() as f64;
            let mean = proc.interarrivals.iter().sum::<f64>() / n;
            assert!((mean - 1.0).abs() < 3.0 / n.sqrt(), "mean {mean} over {n}");
            for (k, &(x, q)) in proc.qq_pairs.iter().enumerate() {
                assert!((q - (-(1.0 - (k as f64 + 0.5) / n).ln())).abs() < 1e-12);
                if k > 0 {
                    assert!(x >= proc.qq_pairs[k - 1].0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transformed_times_are_monotone(seed in 0u64..10_000) {
        let ev = simulate(&random_params(2, seed), 40.0, seed).unwrap();
        let report = transform_times(&random_params(2, seed ^ 7), &ev).unwrap();
        for proc in report.processes.iter().filter(|p| !p.is_empty()) {
            prop_assert!(proc.transformed.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!((0.0..=1.0).contains(&proc.ks_stat));
            prop_assert!(proc.interarrivals.iter().all(|&g| g >= 0.0));
        }
    }

    #[test]
    fn ks_is_bounded(sample in prop::collection::vec(0.0f64..20.0, 1..60)) {
        let d = ks_exponential(&sample);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - ecdf_distance(&sample)).abs() < 1e-12);
    }

    #[test]
    fn trimming_keeps_the_middle(values in prop::collection::vec(-1e3f64..1e3, 1..80), trim in 0.0f64..0.45) {
        let kept = trim_sorted(&values, trim);
        let drop = (trim * values.len() as f64).floor() as usize;
        if 2 * drop < values.len() {
            prop_assert_eq!(kept, trimmed(&values, trim));
        } else {
            prop_assert!(kept.is_empty());
        }
    }
}

#[test]
fn trimming_forty_values_drops_two_per_tail() {
    let values: Vec<f64> = (0..40).map(|i| ((i * 17) % 40) as f64).collect();
    let kept = trim_sorted(&values, 0.05);
    assert_eq!(kept.len(), 36);
    assert_eq!(kept[0], 2.0);
    assert_eq!(kept[35], 37.0);
}

#[test]
fn untrimmed_summary_is_hand_arithmetic() {
    let s = summarize(&[0.2, 0.4, 0.3, 0.5], 0.3, 0.0);
    assert!((s.mean - 0.35).abs() < 1e-15);
    assert!((s.rel_bias - 0.05 / 0.3).abs() < 1e-14);
    assert!((s.sd - (0.05f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!((s.mse - (0.01 + 0.01 + 0.0 + 0.04) / 4.0).abs() < 1e-15);
}

fn outcome(method: Method, estimate: Vec<f64>) -> MethodOutcome {
    MethodOutcome {
        method,
        fit: Ok(MethodFit { method, dim: 1, estimate, loglik: None, iterations: 1, converged: true, valid: true }),
        ks: vec![0.0],
    }
}

#[test]
fn method_summary_skips_failures_and_nonpositive_inar_values() {
    let truth = ModelParams::from_rows(&[1.0], &[0.5], &[2.0]).unwrap();
    let mut reps: Vec<Replication> = (0..4)
        .map(|i| Replication {
            index: i,
            event_counts: vec![10],
            outcomes: vec![
                outcome(Method::Binned, vec![1.0 + i as f64, 0.5, 2.0]),
                outcome(Method::Inar, vec![1.0, if i == 0 { -0.3 } else { 0.5 }, 2.0]),
            ],
        })
        .collect();
    reps[3].outcomes[0].fit = Err("failed".into());
    let binned = summarize_method(Method::Binned, &reps, &truth, 0.0);
    assert_eq!(binned.failures, 1);
    assert_eq!(binned.params[0].used, 3);
    assert_eq!(binned.params[0].mean, 2.0);
    let inar = summarize_method(Method::Inar, &reps, &truth, 0.0);
    assert_eq!(inar.params[1].used, 3);
    assert_eq!(inar.params[1].mean, 0.5);
    assert_eq!(inar.params[0].used, 4);
}

#[test]
fn study_is_deterministic_and_schedule_independent() {
    let config = StudyConfig {
        truth: paper_params(),
        horizon: 150.0,
        delta: 1.0,
        reps: 3,
        methods: vec![Method::Mcem, Method::Binned, Method::Inar, Method::Mle],
        trim: 0.0,
        seed: 5,
        settings: FitSettings {
            mcem: hawkes_agg::mcem::McemConfig { samples: 4, allocations: 2, max_iter: 3, ..Default::default() },
            ..FitSettings::default()
        },
    };
    let parallel = run_study(&config).unwrap();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_study(&config).unwrap());
    assert_eq!(format!("{parallel:?}"), format!("{serial:?}"));
    assert_eq!(parallel.replications.len(), 3);
    for s in &parallel.summaries {
        assert_eq!(s.params.len(), 10);
    }
    for rep in &parallel.replications {
        let ev = simulate(&config.truth, config.horizon, hawkes_agg::study::replication_seeds(5, rep.index)[0]).unwrap();
        assert_eq!(rep.event_counts, ev.counts());
    }
}

#[test]
fn ingest_examples() {
    let opts = |delta: f64| IngestOptions {
        time_col: "t".into(),
        label_col: "who".into(),
        delta,
        labels: None,
        origin: None,
        horizon: None,
    };
    let got = ingest("t,who\n0.0,A\n0.5,B\n0.5,A\n", &opts(1.0)).unwrap();
    assert_eq!(got.binned.row(0), &[2, 1]);
    let got = ingest("t,who\n0.0,B\n0.2,A\n", &opts(1.0)).unwrap();
    assert_eq!(got.labels, vec!["B".to_string(), "A".to_string()]);

    let mut text = String::from("t,who\n");
    for s in 0..2700 {
        if s % 7 == 0 {
            text.push_str(&format!("{},x\n", 1000 + s));
        }
    }
    text.push_str("3699.5,x\n");
    let got = ingest(&text, &opts(1.0)).unwrap();
    assert_eq!(got.binned.bins(), 2700);
    assert_eq!(got.binned.total(), 387);
}

#[test]
fn ingest_round_trips_simulated_events() {
    let ev = simulate(&paper_params(), 300.0, 2).unwrap();
    let mut text = String::from("time,process\n");
    let mut rows: Vec<(f64, usize)> = ev.times().iter().enumerate().flat_map(|(p, ts)| ts.iter().map(move |&t| (t, p))).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, p) in rows {
        text.push_str(&format!("{t},{}\n", p + 1));
    }
    let opts = IngestOptions {
        time_col: "time".into(),
        label_col: "process".into(),
        delta: 1.0,
        labels: Some(vec!["1".into(), "2".into()]),
        origin: Some(0.0),
        horizon: Some(300.0),
    };
    let got = ingest(&text, &opts).unwrap();
    assert_eq!(got.binned, aggregate(&ev, 1.0).unwrap());
    assert_eq!(got.events().unwrap(), ev);
}
