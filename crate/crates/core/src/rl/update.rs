//! Clipped-surrogate PPO update.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{Adam, GaussianPolicy, Mlp};

use super::rollout::RolloutBatch;
use super::PpoConfig;

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("non-finite loss (policy {policy}, value {value}); parameters restored")]
    NonFiniteLoss { policy: f64, value: f64 },
}

/// Diagnostics from one update.
#[derive(Debug, Clone, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub mean_kl: f64,
    pub learning_rate: f64,
    /// Max |ratio − 1| over the first minibatch of the first epoch, before
    /// any parameter change (log-prob bookkeeping check).
    pub initial_ratio_dev: f64,
    pub mean_reward: f64,
    pub episode_ends: usize,
}

/// Advantages normalized to zero mean and unit variance over the batch.
fn normalized_advantages(batch: &RolloutBatch) -> Vec<f64> {
    let n = batch.advantages.len() as f64;
    let mean = batch.advantages.iter().sum::<f64>() / n;
    let var = batch
        .advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1e-8);
    batch.advantages.iter().map(|a| (a - mean) / std).collect()
}

/// Runs `epochs` passes of `minibatches` shuffled minibatch updates on the
/// policy and value networks. On a non-finite loss both networks are
/// restored to their pre-update parameters and an error is returned.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value: &mut Mlp,
    adam_policy: &mut Adam,
    adam_value: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats, UpdateError> {
    let total = batch.len();
    assert!(total > 0, "empty batch");
    assert_eq!(
        total % cfg.minibatches,
        0,
        "batch size {total} not divisible into {} minibatches",
        cfg.minibatches
    );
    let mb_size = total / cfg.minibatches;
    let advantages = if cfg.normalize_advantages {
        normalized_advantages(batch)
    } else {
        batch.advantages.clone()
    };

    let policy_backup = policy.mean.flatten();
    let value_backup = value.flatten();

    let mut stats = PpoStats {
        mean_reward: batch.mean_reward(),
        episode_ends: batch.episode_ends,
        ..Default::default()
    };
    let mut indices: Vec<usize> = (0..total).collect();
    let mut clip_events = 0usize;
    let mut ratio_sum = 0.0;
    let mut sample_count = 0usize;
    let mut first_batch = true;
    let mut kl_acc = 0.0;
    let mut kl_batches = 0usize;

    for _epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        for mb in 0..cfg.minibatches {
            let idx = &indices[mb * mb_size..(mb + 1) * mb_size];
            let obs = batch.observations.select_columns(idx);
            let actions = batch.actions.select_columns(idx);
            let old_logp: Vec<f64> = idx.iter().map(|&i| batch.log_probs[i]).collect();
            let adv: Vec<f64> = idx.iter().map(|&i| advantages[i]).collect();
            let ret: Vec<f64> = idx.iter().map(|&i| batch.returns[i]).collect();

            // Policy pass.
            let cache = policy.mean.forward_batch_cached(&obs).expect("obs dims");
            let mu = cache.output().clone();
            let logp_new = policy.log_prob_batch(&mu, &actions);
            let mut d_mu = DMatrix::zeros(mu.nrows(), mb_size);
            let dlogp = policy.dlogp_dmean(&mu, &actions);
            let mut policy_loss = 0.0;
            let mut kl_sum = 0.0;
            for c in 0..mb_size {
                let ratio = (logp_new[c] - old_logp[c]).exp();
                kl_sum += (ratio - 1.0) - (logp_new[c] - old_logp[c]);
                if first_batch {
                    stats.initial_ratio_dev = stats.initial_ratio_dev.max((ratio - 1.0).abs());
                }
                ratio_sum += ratio;
                sample_count += 1;
                let a = adv[c];
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                let unclipped_obj = ratio * a;
                let clipped_obj = clipped * a;
                policy_loss += -unclipped_obj.min(clipped_obj);
                if clipped_obj < unclipped_obj {
                    clip_events += 1;
                }
                // Gradient flows through the ratio branch only when the
                // min selects it.
                let coef = if unclipped_obj <= clipped_obj {
                    -a * ratio / mb_size as f64
                } else {
                    0.0
                };
                if coef != 0.0 {
                    for r in 0..mu.nrows() {
                        d_mu[(r, c)] = coef * dlogp[(r, c)];
                    }
                }
            }
            policy_loss /= mb_size as f64;
            first_batch = false;
            let kl = kl_sum / mb_size as f64;
            kl_acc += kl;
            kl_batches += 1;
            if let Some(target) = cfg.desired_kl {
                if kl > 2.0 * target {
                    adam_policy.learning_rate = (adam_policy.learning_rate / 1.5).max(1e-8);
                    adam_value.learning_rate = adam_policy.learning_rate;
                } else if kl < 0.5 * target && kl >= 0.0 {
                    adam_policy.learning_rate = (adam_policy.learning_rate * 1.5).min(1e-2);
                    adam_value.learning_rate = adam_policy.learning_rate;
                }
            }

            // Value pass.
            let vcache = value.forward_batch_cached(&obs).expect("obs dims");
            let v_out = vcache.output().clone();
            let mut d_v = DMatrix::zeros(1, mb_size);
            let mut value_loss = 0.0;
            for c in 0..mb_size {
                let err = v_out[(0, c)] - ret[c];
                value_loss += 0.5 * err * err;
                d_v[(0, c)] = cfg.value_loss_coef * err / mb_size as f64;
            }
            value_loss = cfg.value_loss_coef * value_loss / mb_size as f64;

            if !policy_loss.is_finite() || !value_loss.is_finite() {
                policy.mean.unflatten_into(&policy_backup).expect("shape");
                value.unflatten_into(&value_backup).expect("shape");
                return Err(UpdateError::NonFiniteLoss {
                    policy: policy_loss,
                    value: value_loss,
                });
            }

            let mut pgrads = policy.mean.backward_batch(&cache, &d_mu);
            let mut vgrads = value.backward_batch(&vcache, &d_v);
            if let Some(max_norm) = cfg.max_grad_norm {
                let pn = pgrads.global_norm();
                if pn > max_norm {
                    pgrads.scale(max_norm / pn);
                }
                let vn = vgrads.global_norm();
                if vn > max_norm {
                    vgrads.scale(max_norm / vn);
                }
            }

            let mut pparams = policy.mean.flatten();
            adam_policy.step(&mut pparams, &pgrads.flatten());
            policy.mean.unflatten_into(&pparams).expect("shape");
            let mut vparams = value.flatten();
            adam_value.step(&mut vparams, &vgrads.flatten());
            value.unflatten_into(&vparams).expect("shape");

            stats.policy_loss = policy_loss;
            stats.value_loss = value_loss;
        }
    }
    stats.clip_fraction = clip_events as f64 / sample_count.max(1) as f64;
    stats.mean_ratio = ratio_sum / sample_count.max(1) as f64;
    stats.mean_kl = kl_acc / kl_batches.max(1) as f64;
    stats.learning_rate = adam_policy.learning_rate;
    Ok(stats)
}

/// Value predictions for a batch of observations (columns).
pub fn value_batch(value: &Mlp, obs: &DMatrix<f64>) -> DVector<f64> {
    let out = value.forward_batch(obs).expect("obs dims");
    DVector::from_iterator(out.ncols(), out.row(0).iter().copied())
}
