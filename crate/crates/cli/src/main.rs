//! `stabex`: transient-stability assessment with expanded energy-function
//! estimates.
//!
//! Exit codes: 0 success, 1 analysis failure, 2 usage or configuration error.

mod assess;
mod config;
mod distance;
mod example;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stabex_core::direct::Method;
use stabex_core::dynamics::Scheme;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "stabex", version, about = "Stability boundary and CCT estimation by energy-function expansion")]
struct Cli {
    /// JSON run configuration (falls back to $STABEX_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for grid sweeps and per-fault runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Level curves, equilibria and expansions for a builtin example.
    Example(ExampleArgs),
    /// Per-fault CCT report: SBS, direct method and expansion.
    Assess(AssessArgs),
    /// Distance between real and estimated exit points per iteration.
    DistanceCurve(DistanceArgs),
}

#[derive(Args)]
pub struct ExampleArgs {
    /// three-machine or benchmark-3d.
    pub name: String,
    /// Level value, or `closest-uep` for the closest-UEP energy.
    #[arg(long)]
    pub level: Option<String>,
    /// Composition counts to draw besides M = 0.
    #[arg(long, value_delimiter = ',')]
    pub expansions: Option<Vec<usize>>,
    /// Grid nodes per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Step of the composed map.
    #[arg(long)]
    pub h: Option<f64>,
    /// euler, rk2 or rk3.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Newly admitted grid points checked by simulation.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Seed for the sampled soundness check.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone)]
pub struct SystemArgs {
    /// smib, ieee39-lossless, ieee39-lossy or a network JSON path.
    #[arg(long)]
    pub system: Option<String>,
    /// Comma-separated faulted buses.
    #[arg(long, value_delimiter = ',')]
    pub faults: Option<Vec<usize>>,
    /// pebs, bcu or closest-uep.
    #[arg(long)]
    pub method: Option<Method>,
    /// euler, rk2 or rk3.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Step of the composed map.
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Args)]
pub struct AssessArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Expansion iterations (0 for the direct method only).
    #[arg(long)]
    pub expand: Option<usize>,
    /// Leave wall-time columns blank for reproducible files.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Args)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Largest composition count M.
    #[arg(long)]
    pub iterations: Option<usize>,
}

/// Failure classes mapped onto exit codes.
pub enum Failure {
    Usage(anyhow::Error),
    Analysis(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }
    pub fn analysis(e: impl Into<anyhow::Error>) -> Self {
        Failure::Analysis(e.into())
    }
}

pub type Outcome = Result<(), Failure>;

impl SystemArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.system {
            cfg.system = s.clone();
        }
        if let Some(f) = &self.faults {
            cfg.faults = Some(f.clone());
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = Some(s);
        }
        if let Some(h) = self.h {
            cfg.h = h;
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = RunConfig::load(cli.config.as_deref()).map_err(Failure::usage)?;
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = cli.out {
        cfg.output = o;
    }
    match &cli.command {
        Command::Example(a) => {
            if let Some(h) = a.h {
                cfg.h = h;
            }
            if let Some(s) = a.scheme {
                cfg.scheme = Some(s);
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
        }
        Command::Assess(a) => {
            a.system.apply(&mut cfg);
            if let Some(e) = a.expand {
                cfg.iterations = Some(e);
            }
        }
        Command::DistanceCurve(a) => {
            a.system.apply(&mut cfg);
            if let Some(i) = a.iterations {
                cfg.iterations = Some(i);
            }
        }
    }
    cfg.validate().map_err(Failure::usage)?;
    if let Some(n) = cfg.jobs {
        // Only fails if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Example(a) => example::run(a, &cfg),
        Command::Assess(a) => assess::run(a, &cfg),
        Command::DistanceCurve(_) => distance::run(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Analysis(e)) => {
            eprintln!("analysis failed: {e:#}");
            ExitCode::from(1)
        }
    }
}
