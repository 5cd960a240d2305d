//! Config-driven pipeline: `synth` writes a synthetic dataset, `describe`
//! summarizes segments, `fit` estimates pooled and segment models, and `tests`
//! runs the likelihood-ratio battery on the saved fits.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "sevlogit",
    version,
    about = "Injury-severity logit models by area and lighting segment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (for `synth`, the CSV path).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Halton draws per observation.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Leading Halton elements discarded per dimension.
    #[arg(long)]
    pub discard: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "SEVLOGIT_WORKERS")]
    pub workers: Option<usize>,
    /// Abort on the first malformed input row instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics per segment.
    Describe(CommonArgs),
    /// Fit pooled and per-segment models.
    Fit(CommonArgs),
    /// Likelihood-ratio tests on saved fits.
    Tests(CommonArgs),
    /// Generate a synthetic dataset from the config's DGP.
    Synth(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Describe(a) | Command::Fit(a) | Command::Tests(a) | Command::Synth(a) => a,
        }
    }
}

fn load(args: &CommonArgs, is_synth: bool) -> CliResult<LoadedConfig> {
    let mut cfg = LoadedConfig::load(&args.config)?;
    if let (Some(out), false) = (&args.out, is_synth) {
        cfg.output_dir = out.clone();
    }
    if let Some(d) = args.draws {
        if d == 0 {
            return Err(CliError::config(&args.config, "--draws must be at least 1"));
        }
        cfg.config.estimation.n_draws = d;
    }
    if let Some(d) = args.discard {
        cfg.config.estimation.discard = d;
    }
    Ok(cfg)
}

/// Runs one parsed command; all work happens on a pool of `--workers` threads.
pub fn run(cli: &Cli) -> CliResult<()> {
    let args = cli.command.args();
    let is_synth = matches!(cli.command, Command::Synth(_));
    let cfg = load(args, is_synth)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CliError::config(&args.config, "--workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(&args.config, format!("thread pool: {e}")))?;

    pool.install(|| match &cli.command {
        Command::Describe(a) => {
            for p in commands::cmd_describe(&cfg, a.strict)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Fit(a) => {
            let outcome = commands::cmd_fit(&cfg, a.strict)?;
            for p in &outcome.written {
                println!("wrote {}", p.display());
            }
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Estimation(outcome.failures))
            }
        }
        Command::Tests(a) => {
            let outcome = commands::cmd_tests(&cfg, a.strict)?;
            for p in &outcome.written {
                println!("wrote {}", p.display());
            }
            for note in &outcome.battery.notes {
                println!("note: {note}");
            }
            Ok(())
        }
        Command::Synth(a) => {
            let (path, truth) = commands::cmd_synth(&cfg, a.out.as_deref())?;
            println!("wrote {}", path.display());
            println!("true parameters:\n{truth}");
            Ok(())
        }
    })
}
