//! `carbonlace` command-line front end.
//!
//! Exit codes: 1 configuration error, 2 infeasible case, 3 training
//! divergence, 4 I/O failure.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use carbonlace::lp::LpError;
use carbonlace::training::TrainError;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;
mod report;

use commands::{MetricsWhat, ModelKind};
use config::{extract_overrides, Override, RunConfig};

/// Invalid or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser, Debug)]
#[command(
    name = "carbonlace",
    version,
    about = "Locational carbon emission metrics, neural LACE-S training and load-shifting experiments",
    after_help = "Any config key can be overridden with a dotted flag, e.g. --train.learning_rate 5e-4 or --sls.n_profiles=200."
)]
struct Cli {
    /// Worker threads; falls back to CARBONLACE_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Case file utilities.
    Case {
        #[command(subcommand)]
        action: CaseAction,
    },
    /// Generate the labeled scenario dataset.
    Datagen(ConfigArg),
    /// Train a network on the dataset.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum, default_value = "lace-s")]
        model: ModelKind,
    },
    /// Evaluate a trained network on the test split.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum, default_value = "lace-s")]
        model: ModelKind,
    },
    /// Market-derived metrics at a uniformly scaled nominal load.
    Metrics {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum, default_value = "all")]
        what: MetricsWhat,
        #[arg(long, default_value_t = 1.0)]
        load_scale: f64,
        /// Also write the simplex pivot sequence of the dispatch solve.
        #[arg(long)]
        lp_trace: Option<PathBuf>,
    },
    /// Load-shifting experiment over sampled profiles.
    Sls {
        #[command(flatten)]
        config: ConfigArg,
        /// Run one profile at this multiple of nominal load instead.
        #[arg(long)]
        single_scale: Option<f64>,
    },
    /// Render SVG charts and a summary from evaluation and SLS outputs.
    Report(ConfigArg),
}

#[derive(Subcommand, Debug)]
enum CaseAction {
    /// Parse and check a case file (`.m` for MATPOWER, otherwise TOML).
    Validate { path: String },
}

fn load(arg: &ConfigArg, overrides: &[Override]) -> Result<RunConfig> {
    RunConfig::load(&arg.config, overrides)
}

fn setup_threads(threads: Option<usize>) -> Result<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("CARBONLACE_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| ConfigError(format!("CARBONLACE_THREADS: {e}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(ConfigError("thread count must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli, overrides: Vec<Override>) -> Result<()> {
    setup_threads(cli.threads)?;
    match cli.command {
        Command::Case {
            action: CaseAction::Validate { path },
        } => commands::case_validate(&path),
        Command::Datagen(c) => commands::datagen(load(&c, &overrides)?),
        Command::Train { config, model } => commands::train_cmd(load(&config, &overrides)?, model),
        Command::Eval { config, model } => commands::eval_cmd(load(&config, &overrides)?, model),
        Command::Metrics {
            config,
            what,
            load_scale,
            lp_trace,
        } => commands::metrics_cmd(load(&config, &overrides)?, what, load_scale, lp_trace.as_deref()),
        Command::Sls { config, single_scale } => commands::sls_cmd(load(&config, &overrides)?, single_scale),
        Command::Report(c) => commands::report_cmd(load(&c, &overrides)?),
    }
}

/// The error chain on one line, skipping causes already quoted by their
/// parent's message.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Maps an error chain to the documented exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            match t {
                TrainError::Divergence { .. } => return 3,
                TrainError::Resample { .. } => return 2,
                _ => {}
            }
        }
        if let Some(LpError::Infeasible { .. }) = cause.downcast_ref::<LpError>() {
            return 2;
        }
        if cause.is::<ConfigError>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let (args, overrides) = match extract_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
