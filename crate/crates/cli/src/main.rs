mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hawkes_agg::HawkesError;

const SIMULATE_KEYS: &str = "\
CONFIG KEYS (key = value, one per line, # starts a comment):
  nu       background rates, comma list of P values           (required)
  alpha    excitation sizes, P*P values row-major              (required)
  beta     decay rates, P*P values row-major                   (required)
  horizon  observation window T                                (required)
  delta    bin width; T must be a multiple of it               (default 1)
  seed     RNG seed, overridden by --seed                      (default 0)";

const FIT_KEYS: &str = "\
CONFIG KEYS (key = value, one per line, # starts a comment):
  delta         bin width of a counts file      (default: file metadata)
  horizon       window of an events file        (default: file metadata)
  seed          RNG seed for MC-EM and the random start         (default 0)
  init_nu, init_alpha, init_beta
                starting point, same layout as nu/alpha/beta
                (default: random start drawn from the seed)
  samples       MC-EM Monte Carlo samples per E-step M          (default 20)
  allocations   MC-EM allocations per sample                    (default 10)
  tol           MC-EM parameter-change tolerance                (default 0.001)
  max_iter      MC-EM iteration cap                             (default 100)
  proposal      MC-EM within-bin proposal: order-statistic or intensity
                                                    (default order-statistic)
  opt_max_iter  Newton iteration cap of each maximisation       (default 500)
  grad_tol      Newton gradient tolerance                       (default 1e-6)
  inar_lag      INAR lag order          (default ceil(10/delta) capped at 20)
  inar_ridge    INAR ridge regulariser                          (default 1e-8)

mle needs an events file (time,process); the other methods need a counts
file (bin,count_1,...).";

const STUDY_KEYS: &str = "\
CONFIG KEYS (key = value, one per line, # starts a comment):
  nu, alpha, beta  true parameters as for `simulate`            (required)
  horizon      window T                                         (default 1000)
  paper_scale  true sets horizon = 2000                         (default false)
  delta        bin width                                        (default 1)
  reps         replications, overridden by --reps               (default 10)
  methods      comma list, overridden by --methods  (default mcem,binned,inar)
  trim         fraction dropped from each tail                  (default 0.05)
  seed         master seed                                      (default 0)
  samples, allocations, tol, max_iter, proposal, opt_max_iter, grad_tol,
  inar_lag, inar_ridge   as for `fit`

The exact-time MLE is always fitted as a reference column.";

const GOF_KEYS: &str = "\
CONFIG KEYS (optional --config; key = value per line):
  delta        bin width of a counts file       (default: file metadata)
  horizon      window of an events file         (default: file metadata)
  seed         seed of the latent-time proposal for counts input (default 0)
  proposal     within-bin proposal for counts input  (default order-statistic)

With a counts file the times are one consistent latent-time proposal drawn
under each parameter set.";

const INGEST_HELP: &str = "\
Labels map to processes in first-seen order unless --labels is given. The
window starts at the smallest timestamp (or --origin) and spans whole bins
up to the largest timestamp (or --horizon).";

#[derive(Parser)]
#[command(name = "hawkes-agg", version, about = "Multivariate Hawkes estimation from binned counts")]
#[command(after_help = "Set HAWKES_AGG_THREADS to cap the worker pool.\n\
Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numerical failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Hawkes process and write events and binned counts.
    #[command(after_help = SIMULATE_KEYS)]
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate parameters from counts (mcem, binned, inar) or events (mle).
    #[command(after_help = FIT_KEYS)]
    Fit {
        #[arg(long, value_parser = ["mcem", "mle", "binned", "inar"])]
        method: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated simulation study comparing estimators.
    #[command(after_help = STUDY_KEYS)]
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-rescaling goodness of fit for one or more parameter sets.
    #[command(after_help = GOF_KEYS)]
    Gof {
        /// Estimates file (set,parameter,value).
        #[arg(long)]
        params: PathBuf,
        /// Events or counts file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bin a raw (timestamp, label) CSV into counts.
    #[command(after_help = INGEST_HELP)]
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        time_col: String,
        #[arg(long)]
        label_col: String,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
        /// Comma list fixing the label order.
        #[arg(long)]
        labels: Option<String>,
        #[arg(long)]
        origin: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Also write the exact times as an events file.
        #[arg(long)]
        events: bool,
    },
}

fn exit_code(e: &HawkesError) -> u8 {
    match e {
        HawkesError::Argument(_) | HawkesError::Stationarity { .. } => 2,
        HawkesError::Parse { .. } | HawkesError::DegenerateData(_) | HawkesError::Consistency(_) | HawkesError::Io(_) => 3,
        HawkesError::Numerical(_) | HawkesError::DegenerateWeights => 4,
    }
}

fn configure_threads() -> Result<(), HawkesError> {
    let Ok(value) = std::env::var("HAWKES_AGG_THREADS") else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HawkesError::Argument(format!("HAWKES_AGG_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| HawkesError::Argument(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate { config, seed, out } => commands::simulate(&config, seed, &out),
        Command::Fit { method, input, config, out } => commands::fit(&method, &input, config.as_deref(), &out),
        Command::Study { config, reps, methods, out } => commands::study(&config, reps, methods.as_deref(), &out),
        Command::Gof { params, input, config, out } => commands::gof(&params, &input, config.as_deref(), &out),
        Command::Ingest { input, time_col, label_col, delta, out, labels, origin, horizon, events } => {
            let labels = labels.map(|l| l.split(',').map(|s| s.trim().to_string()).collect());
            commands::ingest(&input, time_col, label_col, delta, labels, origin, horizon, events, &out)
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hawkes-agg: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
