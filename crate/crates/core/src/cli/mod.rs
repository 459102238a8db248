//! The `kocal` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

mod commands;
pub mod config;
pub mod data;
pub mod simulator;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_calibrate, cmd_mcmc, cmd_predict, cmd_rates, cmd_selftest, FitFile, RatesOutcome};
pub use config::{RunConfig, Study};
pub use simulator::{echo_simulator, ExternalModel};

use crate::error::Error;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::SmoothnessTooLow { .. } => CliError::Config(e.to_string()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Numerical(format!("model evaluation failed: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "kocal", version, about = "Kernel calibration of computer models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate theta and the discrepancy by penalized least squares.
    Calibrate(CommonArgs),
    /// Predictive mean and variance from a fit file.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        query: Option<PathBuf>,
    },
    /// Sample the posterior with Metropolis-within-Gibbs.
    Mcmc {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        query: Option<PathBuf>,
    },
    /// Convergence-rate studies on a built-in problem.
    Rates {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        study: Option<Study>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Quick invariant checks of the numerical core.
    Selftest(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed; falls back to the config, then to KO_SEED, then to 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// CSV data file with columns x1..xd, yp.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Built-in problem: kernel-translate, trig, perfect or dot.
    #[arg(long)]
    pub problem: Option<String>,
    /// Number of observations to simulate from the built-in problem.
    #[arg(long)]
    pub n: Option<usize>,
    /// Input dimension of the built-in problem.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long)]
    pub upsilon: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl CommonArgs {
    /// Loads, overrides and validates.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let cfg = self.load()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the config file and applies the flags on top, without validation.
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(match std::env::var("KO_SEED") {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("KO_SEED={v:?} is not an unsigned integer")))?,
                Err(_) => 0,
            });
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(d) = &self.data {
            cfg.data.file = Some(d.clone());
            cfg.data.n = None;
        }
        if let Some(n) = self.n {
            cfg.data.n = Some(n);
            cfg.data.file = None;
        }
        if let Some(u) = self.upsilon {
            cfg.kernel.upsilon = u;
        }
        if let Some(g) = self.gamma {
            cfg.kernel.gamma = g;
        }
        if let Some(name) = &self.problem {
            let spec = crate::experiments::ProblemSpec::by_name(name, self.dim, cfg.kernel.upsilon, cfg.kernel.gamma)
                .map_err(|e| CliError::Config(e.to_string()))?;
            cfg.problem = Some(spec);
            cfg.simulator = None;
        }
        if let Some(l) = self.lambda {
            cfg.lambda.value = Some(l);
        }
        if let Some(j) = self.jitter {
            cfg.jitter = j;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.rates.resolve();
        Ok(cfg)
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        f()
    } else {
        crate::par::with_threads(threads, f)
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate(common) => {
            let cfg = common.resolve()?;
            with_pool(cfg.threads, || cmd_calibrate(&cfg).map(|_| ()))
        }
        Command::Predict { common, fit, query } => {
            let mut cfg = common.load()?;
            if fit.is_some() {
                cfg.predict.fit = fit;
            }
            if query.is_some() {
                cfg.predict.query = query;
            }
            cfg.validate()?;
            with_pool(cfg.threads, || cmd_predict(&cfg).map(|_| ()))
        }
        Command::Mcmc {
            common,
            iterations,
            burn_in,
            query,
        } => {
            let mut cfg = common.load()?;
            if let Some(i) = iterations {
                cfg.mcmc.iterations = i;
            }
            if let Some(b) = burn_in {
                cfg.mcmc.burn_in = b;
            }
            if query.is_some() {
                cfg.mcmc.query = query;
            }
            cfg.validate()?;
            with_pool(cfg.threads, || cmd_mcmc(&cfg).map(|_| ()))
        }
        Command::Rates {
            common,
            study,
            sizes,
            replicates,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = study {
                if s != cfg.rates.study {
                    cfg.rates = config::RatesSection {
                        study: s,
                        ..Default::default()
                    };
                }
            }
            if sizes.is_some() {
                cfg.rates.sizes = sizes;
            }
            if replicates.is_some() {
                cfg.rates.replicates = replicates;
            }
            cfg.rates.resolve();
            cfg.validate()?;
            with_pool(cfg.threads, || cmd_rates(&cfg).map(|_| ()))
        }
        Command::Selftest(common) => {
            let cfg = common.resolve()?;
            with_pool(cfg.threads, || cmd_selftest(&cfg))
        }
    }
}

/// Parses `std::env::args`, runs, prints a one-line diagnostic on failure and
/// returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kocal: {e}");
            e.exit_code()
        }
    }
}
