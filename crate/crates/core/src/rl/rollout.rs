//! Parallel rollout collection.
//!
//! Environments step independently (rayon), each with its own RNG stream,
//! and transitions are assembled in (env, step) order, so parallel and
//! serial collection produce identical batches for identical seeds.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::nn::{GaussianPolicy, Mlp};

use super::env::{StepOutcome, TrackingEnv};
use super::gae::compute_gae;
use super::PpoConfig;

/// Flat storage of one rollout: sample index = env * steps + step.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub n_envs: usize,
    pub steps: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Observations as columns.
    pub observations: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value bootstrap per environment for the state after the last step.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Episode-end bookkeeping for diagnostics.
    pub episode_ends: usize,
    pub diverged: usize,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.n_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

struct EnvTrajectory {
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    episode_ends: usize,
    diverged: usize,
}

fn run_env(
    env: &mut TrackingEnv,
    policy: &GaussianPolicy,
    value: &Mlp,
    steps: usize,
    gamma: f64,
) -> EnvTrajectory {
    let mut traj = EnvTrajectory {
        obs: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        log_probs: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        bootstrap: 0.0,
        episode_ends: 0,
        diverged: 0,
    };
    for _ in 0..steps {
        let obs = env.observe();
        let (action, logp) = policy.sample(&obs, &mut env.rng).expect("obs dim");
        let v = value.forward(&obs).expect("obs dim")[0];
        let (mut reward, outcome) = env.step(&action);
        let done = outcome != StepOutcome::Running;
        if outcome == StepOutcome::ClipEnd {
            // Time-out, not failure: bootstrap the cut-off return from the
            // terminal observation so the value targets stay unbiased.
            let terminal_obs = env.observe();
            reward += gamma * value.forward(&terminal_obs).expect("obs dim")[0];
        }
        if done {
            traj.episode_ends += 1;
            if outcome == StepOutcome::Diverged {
                traj.diverged += 1;
            }
            env.reset();
        }
        traj.obs.push(obs);
        traj.actions.push(action);
        traj.log_probs.push(logp);
        traj.rewards.push(reward);
        traj.values.push(v);
        traj.dones.push(done);
    }
    let final_obs = env.observe();
    traj.bootstrap = value.forward(&final_obs).expect("obs dim")[0];
    traj
}

/// Collects `steps` transitions from every environment and computes GAE
/// advantages and TD(λ) returns.
pub fn collect_rollout(
    envs: &mut [TrackingEnv],
    policy: &GaussianPolicy,
    value: &Mlp,
    cfg: &PpoConfig,
) -> RolloutBatch {
    let steps = cfg.rollout_steps;
    let trajectories: Vec<EnvTrajectory> = envs
        .par_iter_mut()
        .map(|env| run_env(env, policy, value, steps, cfg.gamma))
        .collect();

    let n_envs = envs.len();
    let obs_dim = policy.mean.spec.input;
    let act_dim = policy.action_dim();
    let total = n_envs * steps;
    let mut observations = DMatrix::zeros(obs_dim, total);
    let mut actions = DMatrix::zeros(act_dim, total);
    let mut log_probs = Vec::with_capacity(total);
    let mut rewards = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    let mut dones = Vec::with_capacity(total);
    let mut bootstrap = Vec::with_capacity(n_envs);
    let mut advantages = Vec::with_capacity(total);
    let mut returns = Vec::with_capacity(total);
    let mut episode_ends = 0;
    let mut diverged = 0;

    for (e, traj) in trajectories.into_iter().enumerate() {
        let (adv, ret) = compute_gae(
            &traj.rewards,
            &traj.values,
            &traj.dones,
            traj.bootstrap,
            cfg.gamma,
            cfg.lambda,
        )
        .expect("matched lengths by construction");
        for s in 0..steps {
            let col = e * steps + s;
            observations.column_mut(col).copy_from_slice(&traj.obs[s]);
            actions.column_mut(col).copy_from_slice(&traj.actions[s]);
        }
        log_probs.extend_from_slice(&traj.log_probs);
        rewards.extend_from_slice(&traj.rewards);
        values.extend_from_slice(&traj.values);
        dones.extend_from_slice(&traj.dones);
        advantages.extend_from_slice(&adv);
        returns.extend_from_slice(&ret);
        bootstrap.push(traj.bootstrap);
        episode_ends += traj.episode_ends;
        diverged += traj.diverged;
    }

    RolloutBatch {
        n_envs,
        steps,
        obs_dim,
        act_dim,
        observations,
        actions,
        log_probs,
        rewards,
        values,
        dones,
        bootstrap,
        advantages,
        returns,
        episode_ends,
        diverged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::synthetic;
    use crate::nn::MlpSpec;
    use crate::obs::OBS_DIM;
    use crate::reward::RewardWeights;
    use crate::rl::env::{PreparedClip, TerminationConfig};
    use crate::rl::PpoConfig;
    use crate::sim::SimConfig;
    use crate::skeleton::{build_default_skeleton, scale_skeleton};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn tiny_nets(seed: u64) -> (GaussianPolicy, Mlp) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(
            Mlp::init(
                MlpSpec {
                    input: OBS_DIM,
                    hidden: vec![16],
                    output: 33,
                    output_tanh: true,
                },
                1.0,
                0.01,
                &mut rng,
            ),
            0.03,
        );
        let value = Mlp::init(
            MlpSpec {
                input: OBS_DIM,
                hidden: vec![16],
                output: 1,
                output_tanh: false,
            },
            1.0,
            1.0,
            &mut rng,
        );
        (policy, value)
    }

    fn make_envs(n: usize) -> Vec<TrackingEnv> {
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
        let clips = Arc::new(vec![PreparedClip::prepare(
            synthetic::standing_clip(&sk, 1.5),
            &sk,
        )]);
        (0..n)
            .map(|i| {
                TrackingEnv::new(
                    &sk,
                    SimConfig::default(),
                    clips.clone(),
                    RewardWeights::default(),
                    TerminationConfig::default(),
                    ChaCha8Rng::seed_from_u64(1000 + i as u64),
                )
            })
            .collect()
    }

    #[test]
    fn two_envs_fifteen_steps_yield_thirty_transitions() {
        let (policy, value) = tiny_nets(1);
        let mut envs = make_envs(2);
        let cfg = PpoConfig {
            n_envs: 2,
            rollout_steps: 15,
            ..Default::default()
        };
        let batch = collect_rollout(&mut envs, &policy, &value, &cfg);
        assert_eq!(batch.len(), 30);
        assert_eq!(batch.observations.ncols(), 30);
        assert_eq!(batch.bootstrap.len(), 2);
    }

    #[test]
    fn deterministic_seed_gives_identical_batches() {
        let (policy, value) = tiny_nets(2);
        let cfg = PpoConfig {
            n_envs: 3,
            rollout_steps: 8,
            ..Default::default()
        };
        let mut envs_a = make_envs(3);
        let mut envs_b = make_envs(3);
        let a = collect_rollout(&mut envs_a, &policy, &value, &cfg);
        let b = collect_rollout(&mut envs_b, &policy, &value, &cfg);
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.advantages, b.advantages);
    }

    #[test]
    fn oracle_hold_on_standing_clip_keeps_rewards_high() {
        // Reference-holding PD torques on a zero-velocity standing clip
        // at contact equilibrium: every reward stays above 0.8.
        use crate::rl::env::{pd_hold_torques, PdGains};
        use crate::skeleton::TORQUE_LIMIT;
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
        let gains = PdGains::for_skeleton(&sk, &SimConfig::default(), 12.0);
        let mut envs = make_envs(2);
        let mut rewards = Vec::new();
        for env in envs.iter_mut() {
            env.reset_to(0, 0);
            for step in 0..15 {
                let torques = pd_hold_torques(env.state(), env.next_reference_frame(), &gains);
                let action: Vec<f64> = torques.iter().map(|t| t / TORQUE_LIMIT).collect();
                let (r, _) = env.step(&action);
                // Skip the contact settling transient.
                if step >= 3 {
                    rewards.push(r);
                }
            }
        }
        assert_eq!(rewards.len(), 24);
        for r in rewards {
            assert!(r > 0.8, "oracle reward dropped to {r}");
        }
    }
}
