//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cpbm_core::estimators::EstimatorKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub etas: Vec<f64>,
    /// When nonempty, every cell gets a one-hot device indicator and a
    /// device-only examination curve.
    #[serde(default)]
    pub device_probs: Vec<f64>,
    pub estimators: Vec<String>,
    #[serde(default)]
    pub randomization: Randomization,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub ranker: RankerSpec,
    #[serde(default)]
    pub estimation: EstimationSpec,
    #[serde(default)]
    pub ltr: LtrSpec,
    /// Directory that relative dataset paths are resolved against; the
    /// config file's directory when loaded from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Randomization {
    #[default]
    On,
    Off,
    /// A randomized and a plain log per cell, for the difference table.
    Both,
}

impl Randomization {
    pub fn modes(self) -> &'static [bool] {
        match self {
            Randomization::On => &[true],
            Randomization::Off => &[false],
            Randomization::Both => &[true, false],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Sinbin {
        #[serde(default = "d_queries")]
        n_queries: usize,
        #[serde(default = "d_queries")]
        n_test_queries: usize,
        #[serde(default = "d_items")]
        n_items: usize,
        #[serde(default = "d_ten")]
        item_dim: usize,
        #[serde(default = "d_ten")]
        positions: usize,
    },
    Letor {
        train_path: PathBuf,
        test_path: PathBuf,
        #[serde(default = "d_sigma")]
        sigma: f64,
        #[serde(default = "d_ten")]
        positions: usize,
        #[serde(default = "d_irrelevant")]
        irrelevant_click_prob: f64,
    },
}

fn d_queries() -> usize {
    10_000
}
fn d_items() -> usize {
    100
}
fn d_ten() -> usize {
    10
}
fn d_sigma() -> f64 {
    1.0
}
fn d_irrelevant() -> f64 {
    0.1
}

impl DatasetSpec {
    pub fn positions(&self) -> usize {
        match self {
            DatasetSpec::Sinbin { positions, .. } | DatasetSpec::Letor { positions, .. } => *positions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankerSpec {
    pub lambda: f64,
    pub noise: f64,
}

impl Default for RankerSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub bootstrap_iterations: usize,
    pub ci_level: f64,
    /// Divide predictions by their first-position value before scoring.
    pub normalize: bool,
}

impl Default for EstimationSpec {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 20,
            learning_rate: 0.001,
            bootstrap_iterations: 1000,
            ci_level: 0.95,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LtrSpec {
    /// `flat`, `truth`, or any fitted estimator name.
    pub predictors: Vec<String>,
    /// Limit on test queries; all of them when absent.
    pub n_queries: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text).context("invalid experiment config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        if self.etas.is_empty() {
            bail!("etas must not be empty");
        }
        if let Some(e) = self.etas.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            bail!("eta must be finite and >= 0, got {e}");
        }
        if let Some(p) = self.device_probs.iter().find(|p| !(0.0..=0.5).contains(*p)) {
            bail!("device_prob must lie in [0, 0.5], got {p}");
        }
        for name in &self.estimators {
            name.parse::<EstimatorKind>()?;
        }
        for name in &self.ltr.predictors {
            if name != "flat" && name != "truth" {
                name.parse::<EstimatorKind>()
                    .with_context(|| format!("unknown LTR predictor '{name}'"))?;
            }
        }
        if self.estimation.batch_size == 0 {
            bail!("batch_size must be at least 1");
        }
        if self.estimation.bootstrap_iterations == 0 {
            bail!("bootstrap_iterations must be at least 1");
        }
        if self.dataset.positions() < 2 {
            bail!("at least two positions are required");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; any field change changes it.
    /// `base_dir` is not part of it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
