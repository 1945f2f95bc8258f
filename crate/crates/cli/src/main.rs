//! `ecgmatch`: experiment runner.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or parse error.
//! Global flags can also be set through `ECGMATCH_CONFIG`, `ECGMATCH_OUT`,
//! `ECGMATCH_SEED` and `ECGMATCH_THREADS`.

mod cmd;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "ecgmatch",
    version,
    about = "Semi-supervised multi-label ECG experiments"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Experiment (or, for `synth`, generator) config file.
    #[arg(long, global = true, env = "ECGMATCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory; for `synth`, the dataset file to write.
    #[arg(long, global = true, env = "ECGMATCH_OUT")]
    pub out: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long, global = true, env = "ECGMATCH_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for pseudo-labeling.
    #[arg(long, global = true, env = "ECGMATCH_THREADS")]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and test every configured model and seed.
    Run,
    /// Sweep the loss weights lambda_u and lambda_f.
    Gridsearch {
        /// Run only this cell (0-based) into `<out>/cell_<i>`.
        #[arg(long)]
        cell: Option<usize>,
    },
    /// Score a prediction matrix against a label matrix.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
    },
    /// Friedman test and Bonferroni-Dunn post-hoc comparison over report files.
    Compare {
        /// Glob of report CSVs written by `run`.
        #[arg(long)]
        reports: String,
        /// Control model name.
        #[arg(long)]
        control: String,
        /// Metric to compare, or `all`.
        #[arg(long, default_value = "all")]
        metric: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Map semicolon-separated diagnosis terms to superclass vectors.
    Annotate {
        /// One sample per line.
        #[arg(long)]
        terms: PathBuf,
        /// Term table (`term<TAB>superclass`); the built-in table when absent.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Generate a synthetic dataset plus a manifest.
    Synth,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure::Runtime(msg.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn context(self, ctx: impl fmt::Display) -> Self {
        match self {
            Failure::Config(m) => Failure::Config(format!("{ctx}: {m}")),
            Failure::Runtime(m) => Failure::Runtime(format!("{ctx}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<ecgmatch_core::Error> for Failure {
    fn from(e: ecgmatch_core::Error) -> Self {
        if e.is_configuration() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let g = &cli.global;
    let result = match cli.command {
        Command::Run => cmd::run::execute(g),
        Command::Gridsearch { cell } => cmd::grid::execute(g, cell),
        Command::Eval {
            scores,
            labels,
            threshold,
            beta,
        } => cmd::eval::execute(g, &scores, &labels, threshold, beta),
        Command::Compare {
            reports,
            control,
            metric,
            alpha,
        } => cmd::compare::execute(g, &reports, &control, &metric, alpha),
        Command::Annotate { terms, map } => cmd::annotate::execute(&terms, map.as_deref()),
        Command::Synth => cmd::synth::execute(g),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
