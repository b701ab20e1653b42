//! Motion-tracking environment: one simulated character following one
//! reference clip with synthesized sensors.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mocap::{synthesize_sensors, MotionClip, SensorFrame, SensorTrace};
use crate::obs::{
    self, build_observation_with_heading, heading_from_pose, normalize_observation, HeadingFrame,
    FUTURE_FRAMES,
};
use crate::reward::{imitation_reward, PoseFeatures, RewardWeights};
use crate::skeleton::{link, ScaledSkeleton, TORQUE_LIMIT};
use crate::sim::{ArticulatedModel, CharacterState, SimConfig, Simulator};

/// Episode-termination rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminationConfig {
    /// Fall when the head drops below this fraction of standing height.
    pub fall_height_ratio: f64,
    /// Terminate after `floor_steps` consecutive steps below this reward.
    pub reward_floor: f64,
    pub floor_steps: usize,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            fall_height_ratio: 0.3,
            reward_floor: 0.1,
            floor_steps: 10,
        }
    }
}

/// A clip with everything precomputed for fast rollouts: its synthesized
/// sensor trace and per-frame reward features.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub clip: MotionClip,
    pub trace: SensorTrace,
    pub gt_features: Vec<PoseFeatures>,
}

impl PreparedClip {
    pub fn prepare(clip: MotionClip, skeleton: &ScaledSkeleton) -> Self {
        let trace = synthesize_sensors(&clip, skeleton);
        let model = ArticulatedModel::from_skeleton(skeleton, false);
        let mut heading = HeadingFrame::identity();
        let gt_features = clip
            .frames
            .iter()
            .map(|f| {
                // Forward-fill degenerate headings.
                if let Ok(h) = heading_from_pose(&f.root_position, &f.root_orientation) {
                    heading = h;
                }
                PoseFeatures::from_frame(&model, f, &heading)
            })
            .collect();
        Self {
            clip,
            trace,
            gt_features,
        }
    }
}

/// What ended an episode step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Running,
    ClipEnd,
    Fell,
    LowReward,
    Diverged,
}

pub struct TrackingEnv {
    pub sim: Simulator,
    clips: Arc<Vec<PreparedClip>>,
    reward_weights: RewardWeights,
    termination: TerminationConfig,
    /// Mask controller observations (headset-only mode).
    pub headset_only: bool,
    scale_obs: f64,
    standing_head_height: f64,
    pub rng: ChaCha8Rng,

    clip_idx: usize,
    frame_idx: usize,
    state: CharacterState,
    last_heading: HeadingFrame,
    low_reward_streak: usize,
}

impl TrackingEnv {
    pub fn new(
        skeleton: &ScaledSkeleton,
        sim_config: SimConfig,
        clips: Arc<Vec<PreparedClip>>,
        reward_weights: RewardWeights,
        termination: TerminationConfig,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!(!clips.is_empty(), "environment needs at least one clip");
        let sim = Simulator::for_skeleton(skeleton, sim_config);
        let state = sim.reset_from_frame(&clips[0].clip.frames[0]);
        let mut env = Self {
            sim,
            clips,
            reward_weights,
            termination,
            headset_only: false,
            scale_obs: skeleton.user_height,
            standing_head_height: skeleton.standing_head_height(),
            rng,
            clip_idx: 0,
            frame_idx: 0,
            state,
            last_heading: HeadingFrame::identity(),
            low_reward_streak: 0,
        };
        env.reset();
        env
    }

    pub fn state(&self) -> &CharacterState {
        &self.state
    }

    pub fn clip_frame(&self) -> (usize, usize) {
        (self.clip_idx, self.frame_idx)
    }

    /// Starts a new episode from a uniformly sampled clip and frame
    /// (reference-state initialization).
    pub fn reset(&mut self) {
        self.clip_idx = self.rng.gen_range(0..self.clips.len());
        let usable = self.clips[self.clip_idx].clip.len().saturating_sub(2);
        self.frame_idx = self.rng.gen_range(0..usable.max(1));
        self.reset_to(self.clip_idx, self.frame_idx);
    }

    /// Deterministic reset to a specific clip and frame.
    pub fn reset_to(&mut self, clip_idx: usize, frame_idx: usize) {
        self.clip_idx = clip_idx;
        self.frame_idx = frame_idx;
        let frame = &self.clips[clip_idx].clip.frames[frame_idx];
        self.state = self.sim.reset_from_frame(frame);
        self.last_heading = heading_from_pose(&frame.root_position, &frame.root_orientation)
            .unwrap_or(HeadingFrame::identity());
        self.low_reward_streak = 0;
    }

    fn future_sensors(&self) -> Vec<SensorFrame> {
        let trace = &self.clips[self.clip_idx].trace;
        let last = trace.frames.len() - 1;
        (1..=FUTURE_FRAMES)
            .map(|k| {
                let idx = (self.frame_idx + k).min(last);
                let mut frame = trace.frames[idx];
                if self.headset_only {
                    // Documented mask: controller slots pinned to the
                    // identity pose at the frame origin.
                    frame.left = crate::mocap::DevicePose::identity();
                    frame.right = crate::mocap::DevicePose::identity();
                }
                frame
            })
            .collect()
    }

    /// Normalized policy observation for the current state.
    pub fn observe(&mut self) -> Vec<f64> {
        if let Ok(h) = obs::compute_heading_frame(&self.state) {
            self.last_heading = h;
        }
        let raw = build_observation_with_heading(
            &self.state,
            &self.future_sensors(),
            self.scale_obs,
            &self.last_heading,
        )
        .expect("future sensor window is always padded to length");
        normalize_observation(&raw)
    }

    /// Applies a normalized action, advances the simulation one control
    /// step and scores the result against the next reference frame. The
    /// environment resets itself when the episode ends.
    pub fn step(&mut self, action: &[f64]) -> (f64, StepOutcome) {
        let torques: Vec<f64> = action.iter().map(|a| a * TORQUE_LIMIT).collect();
        let f_prev = [self.state.foot_forces[0].y, self.state.foot_forces[1].y];
        let next = match self.sim.step(&self.state, &torques) {
            Ok(s) => s,
            Err(_) => return (0.0, StepOutcome::Diverged),
        };
        let f_now = [next.foot_forces[0].y, next.foot_forces[1].y];
        let gt_idx = self.frame_idx + 1;
        let prepared = &self.clips[self.clip_idx];
        let gt = &prepared.gt_features[gt_idx];
        let sim_features = PoseFeatures::from_state(&next, &self.last_heading);
        let reward = imitation_reward(&sim_features, gt, f_prev, f_now, &self.reward_weights)
            .map(|r| r.total)
            .unwrap_or(0.0);

        self.state = next;
        self.frame_idx = gt_idx;

        let head_height = self.state.link_poses[link::HEAD].position.y;
        let fell = head_height < self.termination.fall_height_ratio * self.standing_head_height;
        if reward < self.termination.reward_floor {
            self.low_reward_streak += 1;
        } else {
            self.low_reward_streak = 0;
        }
        let low = self.low_reward_streak >= self.termination.floor_steps;
        let clip_end = gt_idx + 1 >= prepared.clip.len();

        // Callers decide when to reset (rollout collection bootstraps
        // truncated episodes from the terminal observation first).
        if fell {
            (reward, StepOutcome::Fell)
        } else if low {
            (reward, StepOutcome::LowReward)
        } else if clip_end {
            (reward, StepOutcome::ClipEnd)
        } else {
            (reward, StepOutcome::Running)
        }
    }
}

/// Joint-space PD gains for the reference-holding baseline controller.
#[derive(Debug, Clone)]
pub struct PdGains {
    /// Per-DoF proportional gains.
    pub kp: Vec<f64>,
    /// Per-DoF derivative gains.
    pub kd: Vec<f64>,
}

impl PdGains {
    /// Gains scaled by the apparent joint inertia at the standing pose
    /// (reciprocal of the inverse-mass-matrix diagonal, which accounts for
    /// coupling), giving every DoF the same closed-loop frequency `omega`
    /// with critical damping.
    pub fn for_skeleton(skeleton: &ScaledSkeleton, sim_config: &SimConfig, omega: f64) -> Self {
        use crate::sim::dynamics::mass_matrix;
        use crate::sim::model::{sweep_kinematics, FrameMotion};
        use nalgebra::Rotation3;
        let model = ArticulatedModel::from_skeleton(skeleton, false);
        let n = model.dof();
        let root = FrameMotion::at_rest(
            nalgebra::Vector3::new(0.0, skeleton.standing_root_height(), 0.0),
            Rotation3::identity(),
        );
        let zeros = vec![0.0; n];
        let kin = sweep_kinematics(&model, &root, &zeros, &zeros);
        let mut m = mass_matrix(&model, &kin);
        for i in 0..n {
            m[(6 + i, 6 + i)] += sim_config.armature;
        }
        let minv = m
            .cholesky()
            .expect("standing mass matrix is SPD")
            .inverse();
        let mut kp = Vec::with_capacity(n);
        let mut kd = Vec::with_capacity(n);
        for i in 0..n {
            let apparent = 1.0 / minv[(6 + i, 6 + i)];
            kp.push(omega * omega * apparent);
            kd.push(2.0 * omega * apparent);
        }
        Self { kp, kd }
    }
}

/// Reference-holding PD torques: a baseline "oracle" controller that tracks
/// a target frame without any learning or inverse dynamics.
pub fn pd_hold_torques(
    state: &CharacterState,
    target: &crate::mocap::FullBodyFrame,
    gains: &PdGains,
) -> Vec<f64> {
    state
        .q
        .iter()
        .zip(&state.qd)
        .zip(target.joint_angles.iter().zip(&target.joint_velocities))
        .zip(gains.kp.iter().zip(&gains.kd))
        .map(|(((q, qd), (tq, tqd)), (kp, kd))| {
            (kp * (tq - q) + kd * (tqd - qd)).clamp(-TORQUE_LIMIT, TORQUE_LIMIT)
        })
        .collect()
}

impl TrackingEnv {
    /// Current reference frame (the frame the next step is scored against
    /// follows it).
    pub fn reference_frame(&self) -> &crate::mocap::FullBodyFrame {
        let (c, f) = (self.clip_idx, self.frame_idx);
        &self.clips[c].clip.frames[f]
    }

    /// Next reference frame, clamped at the clip end.
    pub fn next_reference_frame(&self) -> &crate::mocap::FullBodyFrame {
        let (c, f) = (self.clip_idx, self.frame_idx);
        let last = self.clips[c].clip.len() - 1;
        &self.clips[c].clip.frames[(f + 1).min(last)]
    }
}
