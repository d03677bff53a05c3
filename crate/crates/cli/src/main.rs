//! `nonlocal`: command-line front end for the single-boson nonlocality
//! simulator.
//!
//! Every subcommand reads one JSON config (`--config`), writes CSV or JSON to
//! `--out` or stdout, and exits with 0 on success, 1 when a numerical
//! invariant fails and 2 for usage or config errors.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] nonlocal::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_invariant_violation() => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(name = "nonlocal", version, about = "Single-boson nonlocality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact and sampled joint outcome statistics of the swapped pair.
    Correlations(Common),
    /// Recover the relative phase from x⊗x and x⊗y statistics.
    EstimatePhase(Common),
    /// Kick vs no-kick scenarios.
    Nosignal(Common),
    /// Light-cone containment verdict for a region triple.
    Causality(Common),
    /// Coherent-drive rotation fidelity against the classical-field limit.
    RotationFidelity(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    match cli.command {
        Command::Correlations(c) => {
            let mut cfg: config::CorrelationsConfig = config::load(&c.config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            finish(&c, commands::correlations(&cfg, c.format)?)
        }
        Command::EstimatePhase(c) => {
            let mut cfg: config::EstimateConfig = config::load(&c.config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            finish(&c, commands::estimate(&cfg, c.format)?)
        }
        Command::Nosignal(c) => {
            let mut cfg: config::NosignalConfig = config::load(&c.config)?;
            if let Some(s) = c.seed {
                for sc in &mut cfg.scenarios {
                    sc.seed = s;
                }
            }
            cfg.validate()?;
            finish(&c, commands::nosignal(&cfg, c.format)?)
        }
        Command::Causality(c) => {
            // Nothing random here; a --seed is accepted and ignored.
            let cfg: config::CausalityConfig = config::load(&c.config)?;
            finish(&c, commands::causality(&cfg, c.format)?)
        }
        Command::RotationFidelity(c) => {
            let cfg: config::RotationConfig = config::load(&c.config)?;
            cfg.validate()?;
            finish(&c, commands::rotation_fidelity(&cfg, c.format)?)
        }
    }
}

fn finish(c: &Common, outcome: commands::Outcome) -> Result<commands::Outcome, CliError> {
    match &c.out {
        Some(path) => std::fs::write(path, &outcome.text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(outcome.text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NONLOCAL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(outcome) => match outcome.violation {
            Some(msg) => {
                eprintln!("error: numerical invariant violated: {msg}");
                ExitCode::from(1)
            }
            None => ExitCode::SUCCESS,
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
