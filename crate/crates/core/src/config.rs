//! Experiment configuration: one JSON file drives training and evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::RewardWeights;
use crate::rl::{PpoConfig, TerminationConfig};
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Clip references: `builtin:<name>` or a path to a canonical clip file.
    pub clips: Vec<String>,
    /// Optional skeleton JSON path; the built-in canonical skeleton is used
    /// when absent.
    pub skeleton: Option<PathBuf>,
    pub iterations: usize,
    /// Write a checkpoint every this many iterations (and at the end).
    pub checkpoint_interval: usize,
    /// Run a deterministic (mean-action, noise-free) evaluation pass over
    /// the training clips every this many iterations; 0 disables it.
    pub eval_interval: usize,
    /// Mask controller observations during training and evaluation.
    pub headset_only: bool,
    /// Hidden layer sizes of policy and value networks.
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    /// Exploration standard deviation in normalized action space.
    pub sigma: f64,
    /// Optional final sigma: linearly annealed over the run when set
    /// (desk-scale exploration schedule; the default keeps sigma fixed).
    pub sigma_final: Option<f64>,
    /// Orthogonal-init gains (hidden layers, final layer).
    pub init_gain: f64,
    pub final_gain: f64,
    pub sim: SimConfig,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
    pub termination: TerminationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            clips: vec!["builtin:stand".into(), "builtin:walk".into()],
            skeleton: None,
            iterations: 1000,
            checkpoint_interval: 100,
            eval_interval: 25,
            headset_only: false,
            policy_hidden: vec![400, 300, 200],
            value_hidden: vec![400, 300, 200],
            sigma: 0.03,
            sigma_final: None,
            init_gain: 5.0 / 3.0,
            final_gain: 0.01,
            sim: SimConfig::default(),
            reward: RewardWeights::default(),
            ppo: PpoConfig::default(),
            termination: TerminationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.clips.is_empty() {
            return Err(ConfigError::Invalid("clip list is empty".into()));
        }
        for clip in &self.clips {
            if let Some(name) = clip.strip_prefix("builtin:") {
                if !crate::mocap::synthetic::BUILTIN_NAMES.contains(&name) {
                    return Err(ConfigError::Invalid(format!("unknown builtin clip '{name}'")));
                }
            } else if !Path::new(clip).exists() {
                return Err(ConfigError::MissingFile(PathBuf::from(clip)));
            }
        }
        if let Some(sk) = &self.skeleton {
            if !sk.exists() {
                return Err(ConfigError::MissingFile(sk.clone()));
            }
        }
        if self.iterations == 0 {
            return Err(ConfigError::Invalid("iterations must be positive".into()));
        }
        if self.sigma <= 0.0 {
            return Err(ConfigError::Invalid("sigma must be positive".into()));
        }
        self.reward
            .validate()
            .map_err(ConfigError::Invalid)?;
        self.ppo.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    /// FNV-1a hash over the canonical JSON encoding; embedded in every
    /// artifact this config produces.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        fnv1a64(json.as_bytes())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_builtin_is_rejected() {
        let cfg = ExperimentConfig {
            clips: vec!["builtin:sprint".into()],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn missing_clip_file_is_rejected() {
        let cfg = ExperimentConfig {
            clips: vec!["/nonexistent/clip.json".into()],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingFile(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }
}
