//! `tebd`: ground-state search, quenches, dynamic correlators and cost
//! sweeps driven by a TOML experiment file.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid configuration,
//! 3 non-convergence, 4 numerical abort.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Context};
use config::{ConfigError, ExperimentConfig, OracleKind};
use output::RunDir;

#[derive(Parser)]
#[command(name = "tebd", version, about = "Time-evolving block decimation for one-dimensional chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Imaginary-time ground-state search.
    Ground(Common),
    /// Real-time evolution of a prepared state.
    Quench(Common),
    /// Dynamic correlator and its structure factor.
    Correlator(Common),
    /// Wall-clock sweep over chain length, bond dimension and step size.
    Scaling(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long, env = "TEBD_CONFIG")]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, env = "TEBD_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the `oracle` key of the experiment file.
    #[arg(long, env = "TEBD_ORACLE", value_enum)]
    oracle: Option<OracleKind>,
    /// Checkpoint (`checkpoint.json`) of an interrupted quench.
    #[arg(long, env = "TEBD_RESUME")]
    resume: Option<PathBuf>,
    /// Worker threads; more than one enables parallel gate layers.
    #[arg(long, env = "TEBD_THREADS", default_value_t = 1)]
    threads: usize,
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", common.config.display())))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(o) = common.oracle {
        config.oracle = o;
    }
    Ok(config)
}

fn run(name: &str, common: Common, body: fn(&Context, &mut RunDir) -> Result<(), CliError>) -> ExitCode {
    let mut out = match RunDir::create(&common.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", common.out.display());
            return ExitCode::from(1);
        }
    };
    let config = load(&common);
    let result = config.as_ref().map_err(|e| CliError::Config(ConfigError(e.to_string()))).and_then(|config| {
        if common.threads == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        if common.resume.is_some() && name != "quench" {
            return Err(ConfigError("--resume applies to quench only".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let ctx = Context { config: config.clone(), parallel: common.threads > 1, resume: common.resume.clone() };
        body(&ctx, &mut out)
    });
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if let Err(e) = out.finish(name, &config.ok(), code) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Ground(c) => run("ground", c, commands::ground),
        Command::Quench(c) => run("quench", c, commands::quench),
        Command::Correlator(c) => run("correlator", c, commands::correlator),
        Command::Scaling(c) => run("scaling", c, commands::scaling),
    }
}
