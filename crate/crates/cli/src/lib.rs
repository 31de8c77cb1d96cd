//! Command-line front end for `pdflow`: strict TOML configs, seeded
//! experiments and CSV/JSON output for plotting.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdflow::Variant;

use config::ExperimentConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "pdflow", version, about = "Projected primal-dual dynamics experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured problem.
    Solve(RunArgs),
    /// Audit the problem and certify monotonicity.
    Check(RunArgs),
    /// Sweep k on the seeded m = 5, n = 10 quadratic program.
    Example1(RunArgs),
    /// Natural-gradient run on the seeded m = 30, n = 50 least-squares problem.
    Example2(RunArgs),
    /// Fit an exponential rate to the dist_to_ref column of a trajectory CSV.
    Rate {
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Euclidean,
    Natural,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Euclidean => Variant::Euclidean,
            VariantArg::Natural => Variant::NaturalGradient,
        }
    }
}

/// Flags shared by the run subcommands. Each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the generated problem and of a random start.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// k as a multiple of rho.
    #[arg(long = "k-mult")]
    pub k_mult: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Append x and lambda columns to trajectory CSVs.
    #[arg(long = "full-state")]
    pub full_state: bool,
    /// Keep every n-th iteration.
    #[arg(long)]
    pub stride: Option<usize>,
}

impl RunArgs {
    /// Resolves `defaults`, then the config file, then the flags.
    pub fn resolve(&self, defaults: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => defaults.merge_file(path)?,
            None => defaults,
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(v) = self.variant {
            cfg.solver.variant = v.into();
        }
        if let Some(k) = self.k_mult {
            cfg.solver.k_multiplier = k;
        }
        if let Some(tol) = self.tol {
            cfg.solver.tol = tol;
        }
        if let Some(max_iter) = self.max_iter {
            cfg.solver.max_iter = max_iter;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if self.full_state {
            cfg.output.full_state = true;
        }
        if let Some(stride) = self.stride {
            cfg.output.stride = stride;
        }
        Ok(cfg)
    }
}

/// Runs one subcommand and returns its stdout text.
pub fn run(command: &Command) -> Result<String> {
    match command {
        Command::Solve(args) => experiments::run_solve(&args.resolve(ExperimentConfig::default())?),
        Command::Check(args) => experiments::run_check(&args.resolve(ExperimentConfig::default())?),
        Command::Example1(args) => experiments::run_example1(&args.resolve(ExperimentConfig::example1())?),
        Command::Example2(args) => experiments::run_example2(&args.resolve(ExperimentConfig::example2())?),
        Command::Rate { csv } => experiments::run_rate(csv),
    }
}
