//! Command-line driver: linear and quasi-linear solves on built-in presets,
//! verification suites, and image inpainting.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, Outcome, EXIT_CONFIG};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "chartrans",
    version,
    about = "Transport equations with causal coefficients by characteristics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a linear preset; writes u.bin, u.pgm, norms.csv and audit.csv.
    SolveLinear(Common),
    /// Solve a preset by stripe-marching Picard iteration; also writes diagnostics.csv.
    SolveQuasilinear(Common),
    /// Run a verification suite: manufactured, det-bounds, uniqueness, continuous-dependence or all.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Fill the damaged pixels (mask value 0) of an 8-bit PGM image.
    Inpaint {
        image: PathBuf,
        mask: PathBuf,
        /// Reference image; when given, the mean absolute error over the hole is reported.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Flags override the values read from --config.
#[derive(Args)]
struct Common {
    /// JSON run configuration [default: none, built-in defaults]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem [default: disk-radial-f0]
    #[arg(long)]
    preset: Option<String>,
    /// Grid cells per side [default: 128]
    #[arg(long)]
    grid: Option<usize>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random probes, guesses and perturbations [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long)]
    threads: Option<usize>,
    /// Picard tolerance [default: 1e-8 M* for solves and suites, 1e-6 for inpainting]
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.preset = p.clone();
        }
        if let Some(n) = self.grid {
            cfg.grid = n;
            cfg.suite.grid = n;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.suite.seed = seed;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(tol) = self.tol {
            cfg.tol = Some(tol);
            cfg.suite.tol = Some(tol);
            cfg.inpaint.tol = tol;
        }
        Ok(cfg)
    }
}

fn with_threads(cfg: &RunConfig, run: impl FnOnce() -> Outcome + Send) -> Outcome {
    if cfg.threads == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: format!("cannot start {} worker threads: {e}", cfg.threads),
        })?;
    pool.install(run)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::SolveLinear(common) => {
            let cfg = common.resolve()?;
            with_threads(&cfg, || commands::solve_linear_cmd(&cfg))
        }
        Command::SolveQuasilinear(common) => {
            let cfg = common.resolve()?;
            with_threads(&cfg, || commands::solve_quasilinear_cmd(&cfg))
        }
        Command::Verify { suite, common } => {
            let cfg = common.resolve()?;
            with_threads(&cfg, || commands::verify_cmd(&suite, &cfg))
        }
        Command::Inpaint {
            image,
            mask,
            truth,
            common,
        } => {
            let cfg = common.resolve()?;
            with_threads(&cfg, || commands::inpaint_cmd(&image, &mask, truth.as_deref(), &cfg))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
