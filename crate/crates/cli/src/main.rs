//! `levymv`: batch front end for the Lévy-driven McKean–Vlasov toolkit.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{ModuleError, ProbeFailure};
use config::ConfigError;
use output::OutputDir;

#[derive(Parser, Debug)]
#[command(name = "levymv", version, about = "Simulate and verify Lévy-driven McKean–Vlasov SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, env = "LEVYMV_WORKERS")]
    workers: Option<usize>,

    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<String>,

    /// `key.path=value` override, applied in order; the value is parsed as TOML.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Frozen-law particle ensembles.
    Simulate,
    /// Distributional Picard iteration.
    Picard,
    /// Semigroup rate probes.
    KernelProbe,
    /// Monte Carlo Krylov ratios over the standard panel.
    KrylovCheck,
    /// Integrability gate table over an (alpha, d, p, q) grid.
    Admissible,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Picard => "picard",
            Command::KernelProbe => "kernel-probe",
            Command::KrylovCheck => "krylov-check",
            Command::Admissible => "admissible",
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(config::config_error("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| config::config_error("--config PATH is required"))?;
    let cfg = config::load(path, &cli.overrides, cli.seed, cli.out.as_deref())?;
    let header = output::header(cli.command.name(), &config::resolved_toml(&cfg)?);
    let mut out = OutputDir::create(commands::output_dir(&cfg), header)?;
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Picard => commands::picard(&cfg, &mut out),
        Command::KernelProbe => commands::kernel_probe(&cfg, &mut out),
        Command::KrylovCheck => commands::krylov_check(&cfg, &mut out),
        Command::Admissible => commands::admissible(&cfg, &mut out),
    };
    for p in &out.written {
        eprintln!("wrote {}", p.display());
    }
    result.map(|_| out.written)
}

/// 2 config, 3 numerical, 4 probe failure, 1 anything else.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() || cause.is::<toml::ser::Error>() {
            return 2;
        }
        if cause.is::<ProbeFailure>() {
            return 4;
        }
        if let Some(m) = cause.downcast_ref::<ModuleError>() {
            use levymv::Error::*;
            return match m.source {
                ModelInvalid(_) | Argument(_) | Gate(_) | Unsupported(_) | Format(_) => 2,
                Numerical { .. } | Resolution { .. } | Coverage { .. } => 3,
                Io(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levymv {}: {e:#}", cli.command.name());
            ExitCode::from(exit_status(&e))
        }
    }
}
