//! PPO training: parallel rollouts, GAE advantages, clipped-surrogate
//! updates.

pub mod env;
pub mod gae;
pub mod rollout;
pub mod update;

pub use env::{PreparedClip, StepOutcome, TerminationConfig, TrackingEnv};
pub use gae::compute_gae;
pub use rollout::{collect_rollout, RolloutBatch};
pub use update::{ppo_update, PpoStats, UpdateError};

use serde::{Deserialize, Serialize};

/// PPO hyperparameters. Defaults follow the training recipe at desk scale:
/// the full-scale setup runs 4000 environments; 64 keeps the same
/// batch structure (envs × 15 steps, 4 minibatches, 5 epochs) on one CPU.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub n_envs: usize,
    pub rollout_steps: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub value_loss_coef: f64,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
    /// KL-adaptive learning rate: the rate is halved when the per-minibatch
    /// KL divergence exceeds twice this target and raised when it falls
    /// below half of it. With the small fixed exploration noise this keeps
    /// the clipped-surrogate updates inside their trust region.
    pub desired_kl: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.97,
            lambda: 0.95,
            clip: 0.2,
            learning_rate: 1e-4,
            n_envs: 64,
            rollout_steps: 15,
            minibatches: 4,
            epochs: 5,
            value_loss_coef: 0.5,
            normalize_advantages: true,
            max_grad_norm: None,
            desired_kl: Some(0.01),
        }
    }
}

impl PpoConfig {
    pub fn batch_size(&self) -> usize {
        self.n_envs * self.rollout_steps
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err("lambda must be in [0, 1]".into());
        }
        if self.clip <= 0.0 {
            return Err("clip must be positive".into());
        }
        if self.batch_size() % self.minibatches != 0 {
            return Err(format!(
                "batch size {} must divide into {} minibatches",
                self.batch_size(),
                self.minibatches
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let cfg = PpoConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.batch_size(), 960);
    }

    #[test]
    fn indivisible_minibatches_rejected() {
        let cfg = PpoConfig {
            n_envs: 3,
            rollout_steps: 5,
            minibatches: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
