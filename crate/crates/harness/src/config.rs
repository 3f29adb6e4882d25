//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use decfl::bandit::{RewardNormalizers, RewardWeights};
use decfl::federation::Baseline;
use decfl::models::ModelKind;
use decfl::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Run,
    Bench,
    Attack,
    SelectSim,
}

/// Where the records come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum DatasetConfig {
    /// `user item rating [timestamp]` lines, binarized at `threshold`.
    Ratings {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: String,
        threshold: f64,
    },
    /// `label idx:val ...` lines.
    Labeled { path: PathBuf },
    /// Seeded generator matching the model kind.
    Synthetic {
        #[serde(default = "default_users")]
        users: usize,
        /// Items (similarity), features (ridge) or vocabulary (naive Bayes).
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_min_items")]
        min_items: usize,
        #[serde(default = "default_max_items")]
        max_items: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_tokens")]
        tokens: usize,
    },
}

fn default_delimiter() -> String {
    "::".into()
}
fn default_users() -> usize {
    200
}
fn default_width() -> usize {
    30
}
fn default_classes() -> usize {
    3
}
fn default_min_items() -> usize {
    2
}
fn default_max_items() -> usize {
    6
}
fn default_noise() -> f64 {
    0.1
}
fn default_tokens() -> usize {
    12
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            users: default_users(),
            width: default_width(),
            classes: default_classes(),
            min_items: default_min_items(),
            max_items: default_max_items(),
            noise: default_noise(),
            tokens: default_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub lambda: f64,
    pub alpha: f64,
    pub top_k: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ppr,
            lambda: 1.0,
            alpha: 1.0,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub items: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400, 800, 1600, 3200],
            dim: 16,
            items: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectSimConfig {
    /// Bernoulli means; drawn uniformly in `[0.1, 0.9]` when empty.
    pub means: Vec<f64>,
    pub rounds: u64,
}

impl Default for SelectSimConfig {
    fn default() -> Self {
        Self {
            means: Vec::new(),
            rounds: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub devices: usize,
    pub m: usize,
    pub ttl_ms: f64,
    pub epsilon: f64,
    pub rounds: u64,
    pub theta: f64,
    pub forget_interval: u64,
    pub arrivals_per_round: usize,
    /// Fraction of each shard incorporated before the first round.
    pub initial_fraction: f64,
    pub lru_theta: f64,
    pub priority_weight: f64,
    pub max_network_delay_ms: f64,
    /// JSON array of device profiles; the built-in handsets when absent.
    pub profiles: Option<PathBuf>,
    /// One probability per device, or a single value for all.
    pub availability: Vec<f64>,
    pub beta: f64,
    pub weights: Vec<f64>,
    pub min_fraction: Vec<f64>,
    pub reward_weights: RewardWeights,
    pub reward_normalizers: RewardNormalizers,
    pub baseline: Baseline,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Fraction of users held out for evaluation.
    pub holdout: f64,
    pub hit_k: usize,
    /// User deleted by the attack mode.
    pub attack_user: Option<String>,
    pub bench: BenchConfig,
    pub select_sim: SelectSimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Run,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            devices: 10,
            m: 3,
            ttl_ms: 1000.0,
            epsilon: 0.0,
            rounds: 50,
            theta: 0.3,
            forget_interval: 1,
            arrivals_per_round: 1,
            initial_fraction: 0.5,
            lru_theta: 0.3,
            priority_weight: 1.0,
            max_network_delay_ms: 20.0,
            profiles: None,
            availability: vec![1.0],
            beta: 0.05,
            weights: Vec::new(),
            min_fraction: Vec::new(),
            reward_weights: RewardWeights::default(),
            reward_normalizers: RewardNormalizers::default(),
            baseline: Baseline::Deal,
            seed: 0,
            output_dir: PathBuf::from("out"),
            holdout: 0.2,
            hit_k: 10,
            attack_user: None,
            bench: BenchConfig::default(),
            select_sim: SelectSimConfig::default(),
        }
    }
}

fn expand(values: &[f64], n: usize, default: f64, field: &str) -> Result<Vec<f64>, ConfigError> {
    match values.len() {
        0 => Ok(vec![default; n]),
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(ConfigError::new(
            field,
            format!("expected 1 or {n} values, got {len}"),
        )),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn availability(&self) -> Result<Vec<f64>, ConfigError> {
        expand(&self.availability, self.devices, 1.0, "availability")
    }

    pub fn weights(&self) -> Result<Vec<f64>, ConfigError> {
        expand(&self.weights, self.devices, 1.0, "weights")
    }

    pub fn min_fraction(&self) -> Result<Vec<f64>, ConfigError> {
        expand(&self.min_fraction, self.devices, 0.0, "min_fraction")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.devices == 0 {
            return Err(ConfigError::new("devices", "must be positive"));
        }
        if self.m == 0 || self.m > self.devices {
            return Err(ConfigError::new(
                "m",
                format!("must be in 1..={}, got {}", self.devices, self.m),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError::new(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if !(self.model.lambda > 0.0) {
            return Err(ConfigError::new("model.lambda", "must be positive"));
        }
        if !(self.model.alpha > 0.0) {
            return Err(ConfigError::new("model.alpha", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.initial_fraction) {
            return Err(ConfigError::new("initial_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(ConfigError::new("holdout", "must lie in [0, 1)"));
        }
        self.availability()?;
        self.weights()?;
        self.min_fraction()?;
        if let Some(p) = &self.profiles {
            if !p.exists() {
                return Err(ConfigError::new(
                    "profiles",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        match &self.dataset {
            DatasetConfig::Ratings { path, .. } | DatasetConfig::Labeled { path } => {
                if !path.exists() {
                    return Err(ConfigError::new(
                        "dataset.path",
                        format!("{} does not exist", path.display()),
                    ));
                }
            }
            DatasetConfig::Synthetic {
                min_items,
                max_items,
                ..
            } => {
                if min_items > max_items {
                    return Err(ConfigError::new("dataset.min_items", "exceeds max_items"));
                }
            }
        }
        Ok(())
    }
}
