//! Imitation reward: a weighted dot product of Gaussian-kernel similarity
//! terms between the simulated state and the reference frame.
//!
//! Terms, in order: joint angles, joint velocities, Cartesian link
//! positions, Cartesian link velocities, and a contact-smoothness term that
//! penalizes abrupt drops in vertical foot force (so a leg is unloaded
//! before being lifted).
//!
//! Cartesian terms compare the root in world coordinates (so global drift
//! is penalized exactly once) and the other 15 links in each body's own
//! heading frame (pure pose shape).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mocap::FullBodyFrame;
use crate::obs::{heading_from_pose, HeadingFrame};
use crate::sim::{fk_on_model, ArticulatedModel, CharacterState};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vertical contact forces must be non-negative, got {0}")]
    NegativeForce(f64),
}

/// Term weights and kernel sensitivities.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Weights for [r(q), r(q̇), r(x), r(ẋ), r_f]; must sum to 1.
    pub w: [f64; 5],
    /// Kernel sensitivities [k_q, k_q̇, k_x, k_ẋ, k_f].
    pub k: [f64; 5],
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w: [0.4, 0.1, 0.2, 0.1, 0.2],
            k: [40.0, 0.3, 6.0, 2.0, 0.01],
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        if self.w.iter().any(|w| *w < 0.0) {
            return Err("weights must be non-negative".into());
        }
        let sum: f64 = self.w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("weights must sum to 1, got {sum}"));
        }
        if self.k.iter().any(|k| *k <= 0.0) {
            return Err("kernel sensitivities must be positive".into());
        }
        Ok(())
    }
}

/// `exp(−k · Σ_j (sim_j − gt_j)²)`; 1 exactly when the inputs coincide.
pub fn gaussian_kernel_term(sim: &[f64], gt: &[f64], k: f64) -> Result<f64, RewardError> {
    if sim.len() != gt.len() {
        return Err(RewardError::DimensionMismatch(sim.len(), gt.len()));
    }
    let sum: f64 = sim.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-k * sum).exp())
}

/// `exp(−k_f · Σ_{L,R} max(0, f_prev − f_now))` over vertical foot forces:
/// force drops are penalized, increases never are.
pub fn contact_smoothness_term(
    f_prev: [f64; 2],
    f_now: [f64; 2],
    k_f: f64,
) -> Result<f64, RewardError> {
    for f in f_prev.iter().chain(f_now.iter()) {
        if *f < 0.0 {
            return Err(RewardError::NegativeForce(*f));
        }
    }
    let drop: f64 = f_prev
        .iter()
        .zip(f_now.iter())
        .map(|(p, n)| (p - n).max(0.0))
        .sum();
    Ok((-k_f * drop).exp())
}

/// Pose features entering the imitation reward, precomputable per reference
/// frame. `link_pos_local` / `link_vel_local` hold the 15 non-root links in
/// the body's own heading frame; the root enters in world coordinates.
#[derive(Debug, Clone)]
pub struct PoseFeatures {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub root_pos: Vector3<f64>,
    pub root_vel: Vector3<f64>,
    pub link_pos_local: Vec<Vector3<f64>>,
    pub link_vel_local: Vec<Vector3<f64>>,
}

impl PoseFeatures {
    pub fn from_state(state: &CharacterState, fallback_heading: &HeadingFrame) -> Self {
        let heading = heading_from_pose(&state.root_position, &state.root_orientation)
            .unwrap_or(*fallback_heading);
        let link_pos_local = state.link_poses[1..]
            .iter()
            .map(|p| heading.point_to_local(&p.position))
            .collect();
        let link_vel_local = state.link_velocities[1..]
            .iter()
            .map(|(lin, _)| heading.vector_to_local(lin))
            .collect();
        Self {
            q: state.q.clone(),
            qd: state.qd.clone(),
            root_pos: state.root_position,
            root_vel: state.root_linear_vel,
            link_pos_local,
            link_vel_local,
        }
    }

    pub fn from_frame(
        model: &ArticulatedModel,
        frame: &FullBodyFrame,
        fallback_heading: &HeadingFrame,
    ) -> Self {
        let (poses, vels) = fk_on_model(model, frame);
        let heading = heading_from_pose(&frame.root_position, &frame.root_orientation)
            .unwrap_or(*fallback_heading);
        let link_pos_local = poses[1..]
            .iter()
            .map(|p| heading.point_to_local(&p.position))
            .collect();
        let link_vel_local = vels[1..]
            .iter()
            .map(|(lin, _)| heading.vector_to_local(lin))
            .collect();
        Self {
            q: frame.joint_angles.clone(),
            qd: frame.joint_velocities.clone(),
            root_pos: frame.root_position,
            root_vel: frame.root_linear_vel,
            link_pos_local,
            link_vel_local,
        }
    }
}

/// All five reward terms, returned alongside the combined value.
#[derive(Debug, Clone, Copy)]
pub struct RewardTerms {
    pub joint_pose: f64,
    pub joint_velocity: f64,
    pub cartesian_pose: f64,
    pub cartesian_velocity: f64,
    pub contact: f64,
    pub total: f64,
}

fn squared_vec_sum(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum()
}

/// Weighted dot product of the five similarity terms; bounded in (0, 1].
pub fn imitation_reward(
    sim: &PoseFeatures,
    gt: &PoseFeatures,
    f_prev: [f64; 2],
    f_now: [f64; 2],
    weights: &RewardWeights,
) -> Result<RewardTerms, RewardError> {
    let r_q = gaussian_kernel_term(&sim.q, &gt.q, weights.k[0])?;
    let r_qd = gaussian_kernel_term(&sim.qd, &gt.qd, weights.k[1])?;

    let mut x_sum = (sim.root_pos - gt.root_pos).norm_squared();
    if sim.link_pos_local.len() != gt.link_pos_local.len() {
        return Err(RewardError::DimensionMismatch(
            sim.link_pos_local.len(),
            gt.link_pos_local.len(),
        ));
    }
    x_sum += squared_vec_sum(&sim.link_pos_local, &gt.link_pos_local);
    let r_x = (-weights.k[2] * x_sum).exp();

    let mut xd_sum = (sim.root_vel - gt.root_vel).norm_squared();
    xd_sum += squared_vec_sum(&sim.link_vel_local, &gt.link_vel_local);
    let r_xd = (-weights.k[3] * xd_sum).exp();

    let r_f = contact_smoothness_term(f_prev, f_now, weights.k[4])?;

    let total = weights.w[0] * r_q
        + weights.w[1] * r_qd
        + weights.w[2] * r_x
        + weights.w[3] * r_xd
        + weights.w[4] * r_f;
    Ok(RewardTerms {
        joint_pose: r_q,
        joint_velocity: r_qd,
        cartesian_pose: r_x,
        cartesian_velocity: r_xd,
        contact: r_f,
        total,
    })
}
