use std::path::Path;
use std::time::Instant;

use hawkes_agg::baselines::InarConfig;
use hawkes_agg::gof::transform_times;
use hawkes_agg::io::{
    counts_table, digest, estimates_table, events_table, format_list, ingest as ingest_text, parse_counts,
    parse_estimates, parse_events, push_estimates, read_table, read_text, report_table, Config, IngestOptions,
    Metadata, Table,
};
use hawkes_agg::mcem::{allocate, init_params, reparameterize, sample_superposed_times, McemConfig};
use hawkes_agg::rng::{derive_seed, rng_from_seed};
use hawkes_agg::study::{fit_method, parse_methods, run_study, FitSettings, Method, StudyConfig};
use hawkes_agg::{aggregate, simulate as simulate_events, superpose, BinnedCounts, EventSequence, HawkesError, ModelParams, Result};

const FIT_SETTING_KEYS: &[&str] = &[
    "seed",
    "samples",
    "allocations",
    "tol",
    "max_iter",
    "proposal",
    "opt_max_iter",
    "grad_tol",
    "inar_lag",
    "inar_ridge",
];

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HawkesError::Io(format!("{}: {e}", dir.display())))
}

fn config_table(config: &Config, meta: Metadata) -> Table {
    let mut table = Table::new(meta, &["key", "value"]);
    for line in config.canonical().lines() {
        let (k, v) = line.split_once(" = ").unwrap_or((line, ""));
        table.push([k, v]);
    }
    table
}

fn model_from_config(config: &Config) -> Result<ModelParams> {
    let params = Config::require(config.params("")?, "nu")?;
    params.ensure_stationary()?;
    Ok(params)
}

fn fit_settings(config: &Config) -> Result<FitSettings> {
    let mut settings = FitSettings::default();
    let mcem = &mut settings.mcem;
    if let Some(v) = config.usize("samples")? {
        mcem.samples = v;
    }
    if let Some(v) = config.usize("allocations")? {
        mcem.allocations = v;
    }
    if let Some(v) = config.f64("tol")? {
        mcem.tol = v;
    }
    if let Some(v) = config.usize("max_iter")? {
        mcem.max_iter = v;
    }
    if let Some(v) = config.get("proposal") {
        mcem.proposal = v.parse()?;
    }
    if let Some(v) = config.usize("opt_max_iter")? {
        settings.optimizer.max_iter = v;
    }
    if let Some(v) = config.f64("grad_tol")? {
        settings.optimizer.grad_tol = v;
    }
    if settings.optimizer.max_iter == 0 || !(settings.optimizer.grad_tol > 0.0) {
        return Err(HawkesError::Argument("opt_max_iter and grad_tol must be positive".into()));
    }
    settings.mcem.optimizer = settings.optimizer.clone();
    settings.mcem.validate()?;
    let lag = config.usize("inar_lag")?;
    let ridge = config.f64("inar_ridge")?;
    if lag.is_some() || ridge.is_some() {
        settings.inar = Some(InarConfig { lag_order: lag.unwrap_or(0), ridge: ridge.unwrap_or(1e-8) });
    }
    Ok(settings)
}

/// Fills a lag order of 0 (unset) from the bin width.
fn resolve_inar(settings: &mut FitSettings, delta: f64) {
    if let Some(inar) = settings.inar.as_mut() {
        if inar.lag_order == 0 {
            inar.lag_order = InarConfig::for_delta(delta).lag_order;
        }
    }
}

pub fn simulate(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut config = Config::load(config_path)?;
    config.check_keys(&["nu", "alpha", "beta", "horizon", "delta", "seed"])?;
    if let Some(s) = seed {
        config.set("seed", s);
    }
    let seed = config.u64("seed")?.unwrap_or(0);
    let params = model_from_config(&config)?;
    let horizon = Config::require(config.f64("horizon")?, "horizon")?;
    let delta = config.f64("delta")?.unwrap_or(1.0);
    hawkes_agg::model::bin_count(horizon, delta)?;

    let events = simulate_events(&params, horizon, seed)?;
    let binned = aggregate(&events, delta)?;
    prepare_out(out)?;
    let hash = config.hash();
    let meta = Metadata::new("simulate", Some(seed), &hash)
        .with("nu", format_list(params.nu.as_slice()))
        .with("alpha", format_list(&params.to_flat()[params.dim()..params.dim() * (1 + params.dim())]))
        .with("beta", format_list(&params.to_flat()[params.dim() * (1 + params.dim())..]));
    events_table(&events, meta.clone()).write(&out.join("events.csv"))?;
    counts_table(&binned, meta.clone()).write(&out.join("counts.csv"))?;
    config_table(&config, Metadata::new("simulate", Some(seed), &hash)).write(&out.join("config.csv"))?;
    println!("simulated {} events over T = {horizon} ({} bins)", events.total(), binned.bins());
    Ok(())
}

enum Input {
    Events(EventSequence),
    Counts(BinnedCounts),
}

impl Input {
    fn dim(&self) -> usize {
        match self {
            Input::Events(e) => e.dim(),
            Input::Counts(b) => b.dim(),
        }
    }
}

fn read_input(text: &str, config: &Config) -> Result<Input> {
    let table = read_table(text)?;
    match table.columns.first().map(String::as_str) {
        Some("bin") => Ok(Input::Counts(parse_counts(text, config.f64("delta")?)?)),
        Some("time") => Ok(Input::Events(parse_events(text, config.f64("horizon")?, None)?)),
        _ => Err(HawkesError::Parse {
            line: 1,
            message: "input must be an events file (time,process) or a counts file (bin,count_1,...)".into(),
        }),
    }
}

fn load_optional_config(path: Option<&Path>) -> Result<Config> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

pub fn fit(method: &str, input: &Path, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let method: Method = method.parse()?;
    let mut config = load_optional_config(config_path)?;
    let mut allowed = vec!["delta", "horizon", "init_nu", "init_alpha", "init_beta"];
    allowed.extend_from_slice(FIT_SETTING_KEYS);
    config.check_keys(&allowed)?;
    let text = read_text(input)?;
    let data = read_input(&text, &config)?;
    match (&data, method.needs_events()) {
        (Input::Counts(_), true) => return Err(HawkesError::Argument("method mle needs an events file".into())),
        (Input::Events(_), false) => {
            return Err(HawkesError::Argument(format!("method {method} needs a counts file; run `simulate` or `ingest` to bin events")))
        }
        _ => {}
    }
    config.set("method", method);
    let seed = config.u64("seed")?.unwrap_or(0);
    let mut settings = fit_settings(&config)?;
    settings.mcem.seed = derive_seed(seed, &[0]);
    let dim = data.dim();
    let init = match config.params("init_")? {
        Some(p) => {
            if p.dim() != dim {
                return Err(HawkesError::Argument(format!("initial parameters have dimension {}, data has {dim}", p.dim())));
            }
            p
        }
        None => init_params(dim, &mut rng_from_seed(derive_seed(seed, &[1])))?,
    };
    let (binned, events) = match &data {
        Input::Counts(b) => {
            resolve_inar(&mut settings, b.delta());
            (Some(b), None)
        }
        Input::Events(e) => (None, Some(e)),
    };

    let started = Instant::now();
    let fit = fit_method(method, binned, events, &init, &settings)?;
    let elapsed = started.elapsed().as_secs_f64();

    prepare_out(out)?;
    let hash = config.hash();
    let meta = Metadata::new("fit", Some(seed), &hash).with("method", method).with("input_hash", digest(text.as_bytes()));
    let mut estimates = estimates_table(meta.clone());
    push_estimates(&mut estimates, method.name(), dim, &fit.estimate);
    estimates.write(&out.join("estimates.csv"))?;
    let rows = [
        ("method", method.to_string()),
        ("processes", dim.to_string()),
        ("loglik", fit.loglik.map_or_else(|| "NA".to_string(), |v| v.to_string())),
        ("iterations", fit.iterations.to_string()),
        ("converged", fit.converged.to_string()),
        ("valid", fit.valid.to_string()),
        ("initial", format_list(&init.to_flat())),
    ];
    report_table(meta.clone(), &rows).write(&out.join("report.csv"))?;
    config_table(&config, Metadata::new("fit", Some(seed), &hash)).write(&out.join("config.csv"))?;
    println!("{method}: {} iterations, converged = {}, wall time {elapsed:.2} s", fit.iterations, fit.converged);
    Ok(())
}

pub fn study(config_path: &Path, reps: Option<usize>, methods: Option<&str>, out: &Path) -> Result<()> {
    let mut config = Config::load(config_path)?;
    let mut allowed = vec!["nu", "alpha", "beta", "horizon", "paper_scale", "delta", "reps", "methods", "trim"];
    allowed.extend_from_slice(FIT_SETTING_KEYS);
    config.check_keys(&allowed)?;
    if let Some(r) = reps {
        config.set("reps", r);
    }
    if let Some(m) = methods {
        config.set("methods", m);
    }
    let truth = model_from_config(&config)?;
    let paper_scale = config.bool("paper_scale")?.unwrap_or(false);
    let horizon = match config.f64("horizon")? {
        Some(_) if paper_scale => return Err(HawkesError::Argument("set either horizon or paper_scale, not both".into())),
        Some(h) => h,
        None if paper_scale => 2000.0,
        None => 1000.0,
    };
    let delta = config.f64("delta")?.unwrap_or(1.0);
    let reps = config.usize("reps")?.unwrap_or(10);
    if reps < 2 {
        return Err(HawkesError::Argument("a study needs at least 2 replications".into()));
    }
    let mut methods = parse_methods(config.get("methods").unwrap_or("mcem,binned,inar"))?;
    methods.dedup();
    if !methods.contains(&Method::Mle) {
        methods.push(Method::Mle);
    }
    let trim = config.f64("trim")?.unwrap_or(0.05);
    let seed = config.u64("seed")?.unwrap_or(0);
    let mut settings = fit_settings(&config)?;
    resolve_inar(&mut settings, delta);
    let study = StudyConfig { truth: truth.clone(), horizon, delta, reps, methods: methods.clone(), trim, seed, settings };

    let started = Instant::now();
    let result = run_study(&study)?;
    let elapsed = started.elapsed().as_secs_f64();

    prepare_out(out)?;
    let hash = config.hash();
    let meta = Metadata::new("study", Some(seed), &hash)
        .with("reps", reps)
        .with("horizon", horizon)
        .with("delta", delta)
        .with("trim", trim);
    let dim = truth.dim();
    let names = ModelParams::param_names(dim);
    let truth_flat = truth.to_flat();

    let mut raw = Table::new(meta.clone(), &["rep", "method", "parameter", "value", "valid"]);
    let mut per_rep = Table::new(meta.clone(), &["rep", "method", "sq_error_sum", "ks_max"]);
    let mut failures = Table::new(meta.clone(), &["rep", "method", "error"]);
    for rep in &result.replications {
        for o in &rep.outcomes {
            match &o.fit {
                Ok(fit) => {
                    for (name, v) in names.iter().zip(&fit.estimate) {
                        raw.push([rep.index.to_string(), o.method.to_string(), name.clone(), v.to_string(), fit.valid.to_string()]);
                    }
                    let sq: f64 = fit.estimate.iter().zip(&truth_flat).map(|(a, b)| (a - b).powi(2)).sum();
                    let ks = o.ks.iter().copied().fold(f64::NAN, f64::max);
                    per_rep.push([rep.index.to_string(), o.method.to_string(), sq.to_string(), ks.to_string()]);
                }
                Err(msg) => failures.push([rep.index.to_string(), o.method.to_string(), msg.replace(',', ";")]),
            }
        }
    }

    let method_cols = |suffixes: &[&str]| -> Vec<String> {
        let mut cols = vec!["parameter".to_string(), "truth".to_string()];
        for s in &result.summaries {
            for suffix in suffixes {
                cols.push(format!("{}_{suffix}", s.method));
            }
        }
        cols
    };
    let mut bias = Table { meta: meta.clone(), columns: method_cols(&["rel_bias"]), rows: Vec::new() };
    let mut mean_sd = Table { meta: meta.clone(), columns: method_cols(&["mean", "sd"]), rows: Vec::new() };
    let mut mse = Table { meta: meta.clone(), columns: method_cols(&["mse", "used"]), rows: Vec::new() };
    for (i, name) in names.iter().enumerate() {
        let head = [name.clone(), truth_flat[i].to_string()];
        let mut b: Vec<String> = head.to_vec();
        let mut m: Vec<String> = head.to_vec();
        let mut e: Vec<String> = head.to_vec();
        for s in &result.summaries {
            let p = &s.params[i];
            b.push(p.rel_bias.to_string());
            m.push(p.mean.to_string());
            m.push(p.sd.to_string());
            e.push(p.mse.to_string());
            e.push(p.used.to_string());
        }
        bias.push(b);
        mean_sd.push(m);
        mse.push(e);
    }
    let mut summary = Table::new(meta.clone(), &["method", "fits", "failures"]);
    for s in &result.summaries {
        summary.push([s.method.to_string(), (reps - s.failures).to_string(), s.failures.to_string()]);
    }

    bias.write(&out.join("rel_bias.csv"))?;
    mean_sd.write(&out.join("mean_sd.csv"))?;
    mse.write(&out.join("mse.csv"))?;
    raw.write(&out.join("estimates.csv"))?;
    per_rep.write(&out.join("replications.csv"))?;
    failures.write(&out.join("failures.csv"))?;
    summary.write(&out.join("summary.csv"))?;
    config_table(&config, Metadata::new("study", Some(seed), &hash)).write(&out.join("config.csv"))?;
    println!(
        "{reps} replications of {} in {elapsed:.1} s",
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    );
    for s in &result.summaries {
        if s.failures > 0 {
            println!("  {}: {} failed replications (see failures.csv)", s.method, s.failures);
        }
    }
    Ok(())
}

pub fn gof(params_path: &Path, input: &Path, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let config = load_optional_config(config_path)?;
    config.check_keys(&["delta", "horizon", "seed", "proposal"])?;
    let seed = config.u64("seed")?.unwrap_or(0);
    let proposal = match config.get("proposal") {
        Some(v) => v.parse()?,
        None => McemConfig::default().proposal,
    };
    let params_text = read_text(params_path)?;
    let sets = parse_estimates(&params_text)?;
    let text = read_text(input)?;
    let data = read_input(&text, &config)?;

    let mut meta = Metadata::new("gof", Some(seed), &config.hash())
        .with("params_hash", digest(params_text.as_bytes()))
        .with("input_hash", digest(text.as_bytes()));
    if let Input::Counts(_) = data {
        meta.push("latent_times", format!("one consistent {} proposal per parameter set", proposal.name()));
    }
    let mut ks = Table::new(meta.clone(), &["set", "process", "n", "ks_stat", "critical_5pct", "pass"]);
    let mut qq = Table::new(meta, &["set", "process", "index", "empirical", "theoretical"]);
    for (i, (name, params)) in sets.iter().enumerate() {
        if params.dim() != data.dim() {
            return Err(HawkesError::Argument(format!(
                "parameter set `{name}` has dimension {}, data has {}",
                params.dim(),
                data.dim()
            )));
        }
        let events = match &data {
            Input::Events(e) => e.clone(),
            Input::Counts(b) => {
                let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
                let sp = reparameterize(params, b)?;
                let (times, _) = sample_superposed_times(&sp, &superpose(b), proposal, &mut rng)?;
                allocate(&times, b, &mut rng)?.events
            }
        };
        let report = transform_times(params, &events)?;
        for (p, proc) in report.processes.iter().enumerate() {
            if proc.is_empty() {
                eprintln!("hawkes-agg: set `{name}` process {} has fewer than 2 events; skipped", p + 1);
                ks.push([name.clone(), (p + 1).to_string(), "0".into(), "NA".into(), "NA".into(), "NA".into()]);
                continue;
            }
            ks.push([
                name.clone(),
                (p + 1).to_string(),
                proc.interarrivals.len().to_string(),
                proc.ks_stat.to_string(),
                proc.ks_critical_5pct().to_string(),
                proc.passes_ks_5pct().to_string(),
            ]);
            for (k, (e, t)) in proc.qq_pairs.iter().enumerate() {
                qq.push([name.clone(), (p + 1).to_string(), (k + 1).to_string(), e.to_string(), t.to_string()]);
            }
        }
    }
    prepare_out(out)?;
    ks.write(&out.join("ks.csv"))?;
    qq.write(&out.join("qq.csv"))?;
    println!("goodness of fit for {} parameter set(s) written to {}", sets.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn ingest(
    input: &Path,
    time_col: String,
    label_col: String,
    delta: f64,
    labels: Option<Vec<String>>,
    origin: Option<f64>,
    horizon: Option<f64>,
    with_events: bool,
    out: &Path,
) -> Result<()> {
    let text = read_text(input)?;
    let options = IngestOptions { time_col, label_col, delta, labels, origin, horizon };
    let got = ingest_text(&text, &options)?;
    let mut config = Config::default();
    config.set("time_col", &options.time_col);
    config.set("label_col", &options.label_col);
    config.set("delta", delta);
    config.set("origin", got.origin);
    config.set("horizon", got.binned.horizon());
    config.set("labels", got.labels.join(";"));
    let meta = Metadata::new("ingest", None, &config.hash())
        .with("input_hash", digest(text.as_bytes()))
        .with("origin", got.origin);
    let events = if with_events { Some(got.events()?) } else { None };
    prepare_out(out)?;
    counts_table(&got.binned, meta.clone()).write(&out.join("counts.csv"))?;
    let mut labels = Table::new(meta.clone(), &["process", "label"]);
    for (i, l) in got.labels.iter().enumerate() {
        labels.push([(i + 1).to_string(), l.clone()]);
    }
    labels.write(&out.join("labels.csv"))?;
    if let Some(events) = events {
        events_table(&events, meta).write(&out.join("events.csv"))?;
    }
    println!("{} processes, {} bins, {} events", got.labels.len(), got.binned.bins(), got.binned.total());
    Ok(())
}
