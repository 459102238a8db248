//! Run configuration: a TOML file, overridden by flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::bayes::ProposalScales;
use crate::experiments::{DesignKind, NoiselessConfig, NoisyConfig, ProblemSpec, ThetaLimitConfig};
use crate::kernel::DEFAULT_JITTER;
use crate::regress::SearchConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output: PathBuf,
    /// Worker threads; 0 uses the default pool.
    pub threads: usize,
    pub jitter: f64,
    pub kernel: KernelConfig,
    pub problem: Option<ProblemSpec>,
    pub simulator: Option<SimulatorConfig>,
    pub data: DataConfig,
    pub lambda: LambdaConfig,
    pub search: SearchConfig,
    pub predict: PredictConfig,
    pub mcmc: McmcSection,
    pub rates: RatesSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output: PathBuf::from("ko-out"),
            threads: 0,
            jitter: DEFAULT_JITTER,
            kernel: KernelConfig::default(),
            problem: None,
            simulator: None,
            data: DataConfig::default(),
            lambda: LambdaConfig::default(),
            search: SearchConfig::default(),
            predict: PredictConfig::default(),
            mcmc: McmcSection::default(),
            rates: RatesSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub upsilon: f64,
    pub gamma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            upsilon: 1.0,
            gamma: 1.0,
        }
    }
}

/// A child process speaking the line protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub command: Vec<String>,
    pub dim_x: usize,
    pub theta_lo: Vec<f64>,
    pub theta_hi: Vec<f64>,
    #[serde(default = "one")]
    pub lanes: usize,
    /// Only stateless simulators are driven from more than one lane.
    #[serde(default)]
    pub stateless: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with columns `x1..xd, yp`.
    pub file: Option<PathBuf>,
    /// Simulate `n` observations of a built-in problem instead of reading a file.
    pub n: Option<usize>,
    pub design: Option<DesignKind>,
    /// Input box as `[[lo, hi], ...]`; defaults to the problem box or the data's bounding box.
    pub domain: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaConfig {
    /// Fixed smoothing parameter; otherwise `c n^exponent`.
    pub value: Option<f64>,
    pub c: f64,
    pub exponent: Option<f64>,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            value: None,
            c: 1.0,
            exponent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub fit: Option<PathBuf>,
    /// CSV with columns `x1..xd`.
    pub query: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub adapt: bool,
    pub scales: ProposalScales,
    /// Prior boxes; `None` uses the data-driven defaults.
    pub tau2: Option<[f64; 2]>,
    /// `None` with `sigma2_flat = true` gives the flat prior.
    pub sigma2: Option<[f64; 2]>,
    pub sigma2_flat: bool,
    pub gamma: Option<[f64; 2]>,
    pub theta: Option<Vec<[f64; 2]>>,
    /// Query points for the predictive summary; the design points if absent.
    pub query: Option<PathBuf>,
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection {
            iterations: 5000,
            burn_in: 1000,
            thin: 1,
            adapt: true,
            scales: ProposalScales::default(),
            tau2: None,
            sigma2: None,
            sigma2_flat: true,
            gamma: None,
            theta: None,
            query: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Noiseless,
    Noisy,
    ThetaLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesSection {
    pub study: Study,
    /// Defaults to the study's own ladder.
    pub sizes: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub query_points: Option<usize>,
    pub theta_points: Option<usize>,
    pub design: Option<DesignKind>,
    /// Nugget for the noiseless study, which needs a much smaller one than calibration.
    pub jitter: Option<f64>,
    pub slack: Option<f64>,
    pub tolerance: Option<f64>,
    pub sigma_slope_max: Option<f64>,
    pub oracle_points: Option<usize>,
    pub max_gap_cells: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        RatesSection {
            study: Study::Noiseless,
            sizes: None,
            replicates: None,
            query_points: None,
            theta_points: None,
            design: None,
            jitter: None,
            slack: None,
            tolerance: None,
            sigma_slope_max: None,
            oracle_points: None,
            max_gap_cells: 3.0,
        }
    }
}

impl RatesSection {
    /// Fills every unset field with the study default.
    pub fn resolve(&mut self) {
        match self.study {
            Study::Noiseless => {
                let d = NoiselessConfig::default();
                self.sizes.get_or_insert(d.sizes);
                self.replicates.get_or_insert(d.replicates);
                self.query_points.get_or_insert(d.query_points);
                self.theta_points.get_or_insert(d.theta_points);
                self.design.get_or_insert(d.design);
                self.jitter.get_or_insert(d.jitter);
                self.slack.get_or_insert(d.slack);
            }
            Study::Noisy => {
                let d = NoisyConfig::default();
                self.sizes.get_or_insert(d.sizes);
                self.replicates.get_or_insert(d.replicates);
                self.query_points.get_or_insert(d.query_points);
                self.tolerance.get_or_insert(d.tolerance);
                self.sigma_slope_max.get_or_insert(d.sigma_slope_max);
            }
            Study::ThetaLimit => {
                let d = ThetaLimitConfig::default();
                self.sizes.get_or_insert(d.sizes);
                self.theta_points.get_or_insert(d.theta_points);
                self.oracle_points.get_or_insert(d.oracle_points);
            }
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e.message())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Range and consistency checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let k = &self.kernel;
        if !(k.upsilon > 0.0 && k.upsilon.is_finite()) || !(k.gamma > 0.0 && k.gamma.is_finite()) {
            return bad(format!("kernel upsilon and gamma must be positive, got {} and {}", k.upsilon, k.gamma));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad(format!("jitter must be nonnegative, got {}", self.jitter));
        }
        if let Some(l) = self.lambda.value {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if !(self.lambda.c > 0.0 && self.lambda.c.is_finite()) {
            return bad(format!("lambda.c must be positive, got {}", self.lambda.c));
        }
        if self.problem.is_some() && self.simulator.is_some() {
            return bad("set either [problem] or [simulator], not both".into());
        }
        if let Some(s) = &self.simulator {
            if s.command.is_empty() {
                return bad("simulator.command is empty".into());
            }
            if s.theta_lo.len() != s.theta_hi.len() || s.theta_lo.is_empty() {
                return bad("simulator.theta_lo and theta_hi must be nonempty and of equal length".into());
            }
            if s.dim_x == 0 || s.lanes == 0 {
                return bad("simulator.dim_x and simulator.lanes must be positive".into());
            }
        }
        if self.data.file.is_some() && self.data.n.is_some() {
            return bad("set either data.file or data.n, not both".into());
        }
        if self.search.grid_points == 0 {
            return bad("search.grid_points must be positive".into());
        }
        let m = &self.mcmc;
        if m.iterations <= m.burn_in {
            return bad(format!(
                "mcmc.iterations ({}) must exceed mcmc.burn_in ({}) so that samples are retained",
                m.iterations, m.burn_in
            ));
        }
        if m.thin == 0 {
            return bad("mcmc.thin must be positive".into());
        }
        if let Some(sizes) = &self.rates.sizes {
            if sizes.is_empty() || sizes.contains(&0) {
                return bad("rates.sizes must be nonempty and positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let mut c = RunConfig::default();
        c.seed = Some(4);
        c.problem = Some(ProblemSpec::trig(1));
        c.rates.resolve();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[kernel]\nupsilon = 2.0\nnu = 1").is_err());
    }

    #[test]
    fn zero_retained_iterations_is_a_config_error() {
        let c = RunConfig::from_toml("[mcmc]\niterations = 100\nburn_in = 100").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
