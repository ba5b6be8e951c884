//! `fixsim`: experiment driver for fixation probabilities and times of 2x2
//! games under Wright-Fisher and Moran dynamics.
//!
//! Every subcommand reads an optional JSON config (`--config`), applies flag
//! overrides on top, and writes one table as CSV (with `#` metadata lines) or
//! JSON. Exit codes: 0 success, 1 I/O, 2 config, 3 domain, 4 numerical.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fixsim_core::Error;

use config::{CoupleMode, ExperimentConfig, GameConfig, KernelChoice, LogQuantity};
use output::{Format, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(Error::SingularSystem | Error::IllConditioned { .. }) => 4,
            CliError::Core(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fixsim", version, about = "Fixation probabilities and times for 2x2 games")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file (written atomically); stdout when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub d: Option<f64>,
    #[arg(long, global = true)]
    pub w: Option<f64>,
    /// Population sizes, comma separated.
    #[arg(long = "n", short = 'n', global = true, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Initial states, comma separated.
    #[arg(long = "i", short = 'i', global = true, value_delimiter = ',')]
    pub i: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub replicas: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact fixation probabilities, with certified bounds when available.
    Exact {
        #[arg(long, value_enum)]
        kernel: Option<KernelChoice>,
    },
    /// Exponential bounds next to exact values, plus the large-N limits.
    Bounds {
        #[arg(long, value_enum)]
        kernel: Option<KernelChoice>,
    },
    /// Single-mutant fixation across a grid of selection strengths.
    Figure1 {
        /// Selection strengths in (0, 1], comma separated.
        #[arg(long, value_delimiter = ',')]
        w_grid: Option<Vec<f64>>,
    },
    /// Fitted `q_N` per population size.
    Table1,
    /// `-(1/i) ln(value)` over an `(N, i)` grid.
    Logplot {
        #[arg(long, value_enum)]
        quantity: Option<LogQuantity>,
    },
    /// Empirical fixation-time CDF against its branching window.
    Fixtime {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
        #[arg(long)]
        j: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        c0: Option<f64>,
        /// Estimate the coupling constant even if one is configured.
        #[arg(long)]
        estimate_c0: bool,
        #[arg(long)]
        c0_replicas: Option<u64>,
    },
    /// Coupling diagnostics.
    Couple {
        #[arg(long, value_enum)]
        mode: Option<CoupleMode>,
        #[arg(long)]
        j: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
    },
    /// The dominance certificate and derived constants.
    Certify,
    /// Least-squares `q` for `1 - q^i`, from `i:p` pairs or exact values.
    Fit {
        /// Pairs such as `1:0.42,2:0.66`.
        #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
        pairs: Option<Vec<(u32, f64)>>,
    },
}

fn parse_pair(s: &str) -> Result<(u32, f64), String> {
    let (i, p) = s.split_once(':').ok_or_else(|| format!("expected i:p, got {s:?}"))?;
    let i = i.trim().parse().map_err(|e| format!("bad i in {s:?}: {e}"))?;
    let p = p.trim().parse().map_err(|e| format!("bad p in {s:?}: {e}"))?;
    Ok((i, p))
}

impl Cli {
    /// The config the command runs with: file contents overridden by flags.
    pub fn effective_config(&self) -> Result<ExperimentConfig, CliError> {
        let base = match &self.common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let c = &self.common;
        let mut flags = ExperimentConfig {
            game: GameConfig {
                a: c.a,
                b: c.b,
                c: c.c,
                d: c.d,
                w: c.w,
            },
            n: c.n.clone(),
            i: c.i.clone(),
            replicas: c.replicas,
            seed: c.seed,
            max_steps: c.max_steps,
            ..Default::default()
        };
        match &self.command {
            Command::Exact { kernel } | Command::Bounds { kernel } => flags.kernel = *kernel,
            Command::Figure1 { w_grid } => flags.w_grid = w_grid.clone(),
            Command::Logplot { quantity } => flags.quantity = *quantity,
            Command::Fixtime {
                k,
                horizons,
                j,
                eta,
                c0,
                c0_replicas,
                ..
            } => {
                flags.k = *k;
                flags.horizons = horizons.clone();
                flags.j = *j;
                flags.eta = *eta;
                flags.c0 = *c0;
                flags.c0_replicas = *c0_replicas;
            }
            Command::Couple {
                mode,
                j,
                k,
                steps,
                horizons,
            } => {
                flags.mode = *mode;
                flags.j = *j;
                flags.k = *k;
                flags.steps = *steps;
                flags.horizons = horizons.clone();
            }
            Command::Fit { pairs } => flags.pairs = pairs.clone(),
            Command::Table1 | Command::Certify => {}
        }
        Ok(base.merge(flags))
    }

    pub fn run(&self) -> Result<Report, CliError> {
        let cfg = self.effective_config()?;
        match &self.command {
            Command::Exact { .. } => commands::cmd_exact(&cfg),
            Command::Bounds { .. } => commands::cmd_bounds(&cfg),
            Command::Figure1 { .. } => commands::cmd_figure1(&cfg),
            Command::Table1 => commands::cmd_table1(&cfg),
            Command::Logplot { .. } => commands::cmd_logplot(&cfg),
            Command::Fixtime { estimate_c0, .. } => commands::cmd_fixtime(&cfg, *estimate_c0),
            Command::Couple { .. } => commands::cmd_couple(&cfg),
            Command::Certify => commands::cmd_certify(&cfg),
            Command::Fit { .. } => commands::cmd_fit(&cfg),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FIXSIM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("FIXSIM_THREADS must be a positive integer, got {raw:?}")))?;
    if threads == 0 {
        return Err(CliError::Config("FIXSIM_THREADS must be at least 1".into()));
    }
    // Fails only if a pool already exists, in which case it is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Runs a parsed command and writes its output.
pub fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    configure_threads()?;
    let report = cli.run()?;
    let text = report.render(cli.common.format)?;
    match &cli.common.output {
        Some(path) => output::write_atomic(path, &text)?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(report.warnings)
}

/// Process entry point; returns the exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
