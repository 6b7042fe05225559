//! Run configuration read from a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use cagp_core::oodgen::SynthConfig;
use cagp_core::{CoverageMode, ThresholdBasis, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// How the CAGP mixing weight is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// `alpha = 0.5`.
    Fixed,
    /// Grid search on the validation partition.
    #[default]
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodConfig {
    /// Frequency percentile in percent, e.g. `10.0`.
    pub tau_percentile: f64,
    pub tau_basis: ThresholdBasis,
    /// Frequency tolerances for the matched-fraction sweep.
    pub epsilons: Vec<u64>,
    /// Percentiles of the threshold sensitivity sweep.
    pub tau_sweep: Vec<f64>,
}

impl Default for OodConfig {
    fn default() -> Self {
        OodConfig {
            tau_percentile: 10.0,
            tau_basis: ThresholdBasis::TripleMinFrequency,
            epsilons: vec![1, 5, 10, 20, 50, 100],
            tau_sweep: vec![5.0, 10.0, 20.0, 30.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub alpha: AlphaMode,
    pub coverage: CoverageMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub bootstrap_iterations: usize,
    pub ece_bins: usize,
    /// Fractions of queries answered in the selective-prediction table.
    pub answer_rates: Vec<f64>,
    /// A query counts as correct when its true tail ranks within this cutoff.
    pub hits_at: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bootstrap_iterations: 10_000,
            ece_bins: 10,
            answer_rates: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5],
            hits_at: 10,
        }
    }
}

/// Every random stream of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    pub corruption: u64,
    pub bootstrap: u64,
    /// Embedding draws of the score baseline.
    pub score: u64,
    pub synth: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { train: 0, corruption: 1, bootstrap: 2, score: 3, synth: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory with `train.txt`, `valid.txt` and `test.txt`. Ignored when
    /// `synthetic` is set.
    pub dataset: PathBuf,
    /// Generate the synthetic fixture instead of reading a dataset.
    pub synthetic: Option<SynthConfig>,
    pub output: PathBuf,
    /// Training hyperparameters. The seed is taken from `seeds.train`.
    pub train: TrainConfig,
    pub ood: OodConfig,
    pub uncertainty: UncertaintyConfig,
    pub eval: EvalConfig,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("data/FB15k-237"),
            synthetic: None,
            output: PathBuf::from("runs/default"),
            train: TrainConfig::default(),
            ood: OodConfig::default(),
            uncertainty: UncertaintyConfig::default(),
            eval: EvalConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::format(path, m),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        let pct_ok = |p: f64| p > 0.0 && p <= 100.0;
        if !pct_ok(self.ood.tau_percentile) || !self.ood.tau_sweep.iter().all(|&p| pct_ok(p)) {
            return Err(CliError::Config("tau percentiles must lie in (0, 100]".into()));
        }
        if self.eval.bootstrap_iterations == 0 || self.eval.ece_bins == 0 || self.eval.hits_at == 0 {
            return Err(CliError::Config("bootstrap_iterations, ece_bins and hits_at must be positive".into()));
        }
        if !self.eval.answer_rates.iter().all(|&r| r > 0.0 && r <= 1.0) {
            return Err(CliError::Config("answer rates must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Training hyperparameters with the configured training seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seeds.train, ..self.train.clone() }
    }

    /// Threshold percentile as a fraction in `(0, 1]`.
    pub fn tau_fraction(&self) -> f64 {
        self.ood.tau_percentile / 100.0
    }
}
