//! Experiment configuration, read from a JSON file with CLI overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, PointSet};
use crate::sde::{InitialDistribution, Potential, SdeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Ou { alpha: f64, beta_temp: f64 },
    Langevin { potential: Potential, beta_temp: f64 },
}

impl ModelConfig {
    pub fn build(&self) -> Result<SdeModel> {
        match self {
            ModelConfig::Ou { alpha, beta_temp } => SdeModel::ornstein_uhlenbeck(*alpha, *beta_temp),
            ModelConfig::Langevin { potential, beta_temp } => SdeModel::langevin(potential.clone(), *beta_temp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Median,
}

/// Either a fixed length-scale or `"median"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Rule(BandwidthRule),
}

impl Bandwidth {
    pub fn resolve(&self, inputs: &PointSet) -> Result<KernelSpec> {
        match *self {
            Bandwidth::Fixed(s) => KernelSpec::gaussian_rbf(s),
            Bandwidth::Rule(BandwidthRule::Median) => KernelSpec::median_heuristic(inputs),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(Bandwidth::Rule(BandwidthRule::Median));
        }
        s.parse::<f64>().map(Bandwidth::Fixed).map_err(|_| format!("expected a number or \"median\", got {s:?}"))
    }
}

/// Where the operator-error term `F` of the tube comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    Bootstrap,
    Bernstein,
}

/// Large-sample Monte Carlo reference for the one-step prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSpec {
    /// Fresh pairs `M`.
    pub samples: usize,
    pub trials: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { samples: 5000, trials: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub dim: usize,
    pub lag: f64,
    pub m: usize,
    pub lambda: f64,
    pub bandwidth: Bandwidth,
    pub m_b: usize,
    pub alpha_conf: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rho0: f64,
    pub initial: InitialDistribution,
    pub seed: u64,
    /// Euler-Maruyama step for non-OU models.
    pub dt: f64,
    pub output_dir: PathBuf,
    /// Training-set sizes for convergence studies.
    pub m_list: Vec<usize>,
    pub oracle: OracleSpec,
    pub bound: BoundSource,
    /// Force `F = 0` in the tube.
    pub zero_model_error: bool,
    /// Existing dataset CSV to use instead of simulating.
    pub dataset: Option<PathBuf>,
    /// Also emit SVG plots next to the CSV files.
    pub svg: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::Ou { alpha: 1.0, beta_temp: 1.0 },
            dim: 1,
            lag: 0.1,
            m: 250,
            lambda: 0.01,
            bandwidth: Bandwidth::Rule(BandwidthRule::Median),
            m_b: 200,
            alpha_conf: 0.05,
            horizon: 20,
            rho0: 0.1,
            initial: InitialDistribution::Gaussian { mean: 0.5, variance: 2.0 },
            seed: 0,
            dt: 1e-3,
            output_dir: PathBuf::from("out"),
            m_list: vec![50, 100, 200, 400, 800],
            oracle: OracleSpec::default(),
            bound: BoundSource::Bootstrap,
            zero_model_error: false,
            dataset: None,
            svg: false,
        }
    }
}

/// Settings not fixed by the experiment this tool reproduces, reported in
/// emitted metadata so results are not mistaken for published constants.
pub const UNPUBLISHED_DEFAULTS: &[&str] = &["T", "lag", "bandwidth", "m_b", "dt"];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.build()?;
        self.initial.validate()?;
        let check = |ok: bool, name: &'static str, reason: &str| if ok { Ok(()) } else { Err(Error::invalid(name, reason)) };
        check(self.dim >= 1, "dim", "must be at least 1")?;
        check(self.lag > 0.0 && self.lag.is_finite(), "lag", "must be positive")?;
        check(self.m >= 2, "m", "must be at least 2")?;
        check(self.lambda > 0.0 && self.lambda.is_finite(), "lambda", "must be positive")?;
        if let Bandwidth::Fixed(s) = self.bandwidth {
            check(s > 0.0 && s.is_finite(), "bandwidth", "must be positive")?;
        }
        check(self.m_b >= 1, "m_b", "must be at least 1")?;
        check(self.alpha_conf > 0.0 && self.alpha_conf < 1.0, "alpha_conf", "must lie in (0, 1)")?;
        check(self.horizon >= 1, "T", "must be at least 1")?;
        check(self.rho0 >= 0.0 && self.rho0.is_finite(), "rho0", "must be nonnegative")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "dt", "must be positive")?;
        check(self.m_list.iter().all(|&m| m >= 2), "m_list", "every entry must be at least 2")?;
        check(self.oracle.samples >= 100, "oracle.samples", "must be at least 100")?;
        check(self.oracle.trials >= 1, "oracle.trials", "must be at least 1")?;
        Ok(())
    }
}
