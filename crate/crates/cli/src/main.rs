//! `slowfast-lv`: command-line driver for the particle system, the fast flow,
//! the averaged diffusion and the verification checks.
//!
//! Exit status: 0 success, 1 a `verify` check ran and did not pass,
//! 2 invalid flags or configuration, 3 numerical failure, 4 I/O failure.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};

use crate::commands::{Artifact, Context};
use crate::config::{
    read_file, resolve, BoundariesArgs, BoundariesConfig, GeometryArgs, GeometryConfig,
    ParticleArgs, ParticleConfig, SdeArgs, SdeConfig, StationaryArgs, StationaryConfig, VerifyArgs,
    VerifyConfig,
};

const THREADS_ENV: &str = "SLOWFAST_LV_THREADS";

#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Numeric(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(e) => write!(f, "invalid input: {e:#}"),
            Self::Numeric(e) => write!(f, "numerical failure: {e:#}"),
            Self::Io(e) => write!(f, "I/O failure: {e:#}"),
        }
    }
}

impl From<slowfast_lv::Error> for Failure {
    fn from(e: slowfast_lv::Error) -> Self {
        use slowfast_lv::Error as E;
        match e {
            E::NegativeDiscriminant(_) | E::StepUnderflow { .. } | E::NegativeRadicand(_) => {
                Self::Numeric(e.into())
            }
            _ => Self::Validation(e.into()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "slowfast-lv",
    version,
    about = "Cyclic stochastic Lotka-Volterra: particle system, fast loops and averaged diffusion"
)]
struct Cli {
    /// TOML file with flat `key = value` settings for the subcommand; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: machine parallelism]; SLOWFAST_LV_THREADS overrides
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the timestamp from output headers so equal configs give identical bytes
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Loop geometry, period, action and m on a θ-uniform grid of levels
    Geometry(GeometryArgs),
    /// Exact particle simulations sampled at observation times
    Particle(ParticleArgs),
    /// Euler-Maruyama ensembles of the averaged diffusion
    Sde(SdeArgs),
    /// Feller boundary classification and truncated integral ladders (JSON)
    Boundaries(BoundariesArgs),
    /// Stationary density proportional to z^(a-1) T(z)
    Stationary(StationaryArgs),
    /// Run a named check and emit {check, params, statistic, threshold, pass}
    Verify(VerifyArgs),
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Validation(anyhow!(
                "{THREADS_ENV}=`{v}` is not a positive integer"
            ))),
        },
        Err(_) => match flag {
            Some(0) => Err(Failure::Validation(anyhow!("--threads must be positive"))),
            other => Ok(other),
        },
    }
}

fn emit(artifact: &Artifact) -> Result<(), Failure> {
    if artifact.out == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(artifact.body.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Failure::Io(e.into()))
    } else {
        std::fs::write(&artifact.out, &artifact.body)
            .map_err(|e| Failure::Io(anyhow!("writing {}: {e}", artifact.out)))
    }
}

fn run(cli: Cli) -> Result<Artifact, Failure> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(anyhow!("thread pool: {e}")))?;
    }
    let file = cli.config.as_deref().map(read_file).transpose()?;
    let file = file.as_ref();
    let ctx = Context {
        timestamp: (!cli.deterministic).then(|| chrono::Utc::now().to_rfc3339()),
    };
    match &cli.command {
        Command::Geometry(args) => {
            commands::geometry(&ctx, &resolve::<_, GeometryConfig>(args, file)?)
        }
        Command::Particle(args) => {
            commands::particle(&ctx, &mut resolve::<_, ParticleConfig>(args, file)?)
        }
        Command::Sde(args) => commands::sde(&ctx, &mut resolve::<_, SdeConfig>(args, file)?),
        Command::Boundaries(args) => {
            commands::boundaries(&ctx, &resolve::<_, BoundariesConfig>(args, file)?)
        }
        Command::Stationary(args) => {
            commands::stationary(&ctx, &resolve::<_, StationaryConfig>(args, file)?)
        }
        Command::Verify(args) => {
            let mut cfg: VerifyConfig = resolve(args, file)?;
            if cfg.out.is_empty() {
                cfg.out = "-".into();
            }
            commands::verify(&ctx, &cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).and_then(|a| emit(&a).map(|_| a)) {
        Ok(a) if a.passed == Some(false) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slowfast-lv: {e}");
            ExitCode::from(e.code())
        }
    }
}
