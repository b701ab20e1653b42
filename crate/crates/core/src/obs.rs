//! Policy observation encoding.
//!
//! All spatial quantities are expressed in the heading frame S: a yaw-only
//! frame on the floor under the avatar's root, so observations are invariant
//! to global position and facing direction. The vector layout is frozen
//! (see [`layout`]); checkpoints record [`OBS_LAYOUT_VERSION`].

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::mocap::SensorFrame;
use crate::sim::CharacterState;

pub const SIM_OBS_DIM: usize = 312;
pub const USER_OBS_DIM: usize = 162;
pub const SCALE_OBS_DIM: usize = 1;
pub const OBS_DIM: usize = SIM_OBS_DIM + USER_OBS_DIM + SCALE_OBS_DIM;

/// Number of future sensor frames the policy sees (t+1 … t+6 at 36 fps,
/// about 160 ms of anticipation).
pub const FUTURE_FRAMES: usize = 6;

pub const OBS_LAYOUT_VERSION: u32 = 1;

/// Frozen index ranges of each observation block.
pub mod layout {
    use std::ops::Range;

    pub const JOINT_ANGLES: Range<usize> = 0..33;
    pub const JOINT_VELOCITIES: Range<usize> = 33..66;
    pub const LINK_POSITIONS: Range<usize> = 66..114;
    pub const LINK_ROTATIONS_6D: Range<usize> = 114..210;
    pub const LINK_VELOCITIES: Range<usize> = 210..306;
    pub const FOOT_FORCES: Range<usize> = 306..312;
    pub const USER: Range<usize> = 312..474;
    pub const SCALE: usize = 474;
}

#[derive(Debug, Error)]
pub enum ObsError {
    #[error("heading direction is degenerate (vertical forward axis)")]
    DegenerateHeading,
    #[error("expected {expected} future sensor frames, got {got}")]
    InsufficientFuture { expected: usize, got: usize },
}

/// Yaw-only reference frame on the floor below the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingFrame {
    /// Floor projection of the root position (y = 0).
    pub origin: Vector3<f64>,
    /// Rotation about the vertical axis aligning the canonical forward
    /// axis (+z) with the avatar's heading.
    pub yaw: f64,
}

impl HeadingFrame {
    pub fn identity() -> Self {
        Self {
            origin: Vector3::zeros(),
            yaw: 0.0,
        }
    }

    fn inv_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::y_axis(), -self.yaw)
    }

    /// Expresses a world point in this frame.
    pub fn point_to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.inv_rotation() * (p - self.origin)
    }

    /// Expresses a free vector (velocity, force) in this frame.
    pub fn vector_to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.inv_rotation() * v
    }

    /// Expresses a world rotation in this frame.
    pub fn rotation_to_local(&self, r: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -self.yaw) * r
    }
}

/// First two columns of the rotation matrix, `[col0, col1]`.
pub fn encode_rotation_6d(r: &UnitQuaternion<f64>) -> [f64; 6] {
    let m = r.to_rotation_matrix();
    let m = m.matrix();
    [
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ]
}

/// Gram-Schmidt reconstruction of the rotation from its 6D encoding.
pub fn decode_rotation_6d(e: &[f64; 6]) -> UnitQuaternion<f64> {
    let a = Vector3::new(e[0], e[1], e[2]);
    let b = Vector3::new(e[3], e[4], e[5]);
    let c0 = a.normalize();
    let c1 = (b - c0 * c0.dot(&b)).normalize();
    let c2 = c0.cross(&c1);
    let m = nalgebra::Matrix3::from_columns(&[c0, c1, c2]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Heading of the root: its forward axis projected onto the ground plane.
/// Fails when the projection is shorter than 1e-6 (root facing straight up
/// or down); callers keep the last valid frame in that case.
pub fn compute_heading_frame(state: &CharacterState) -> Result<HeadingFrame, ObsError> {
    heading_from_pose(&state.root_position, &state.root_orientation)
}

pub fn heading_from_pose(
    position: &Vector3<f64>,
    orientation: &UnitQuaternion<f64>,
) -> Result<HeadingFrame, ObsError> {
    let forward = orientation * Vector3::z();
    let horizontal = Vector3::new(forward.x, 0.0, forward.z);
    if horizontal.norm() < 1e-6 {
        return Err(ObsError::DegenerateHeading);
    }
    Ok(HeadingFrame {
        origin: Vector3::new(position.x, 0.0, position.z),
        yaw: horizontal.x.atan2(horizontal.z),
    })
}

fn push_device(out: &mut Vec<f64>, heading: &HeadingFrame, position: &Vector3<f64>, rotation: &UnitQuaternion<f64>) {
    let p = heading.point_to_local(position);
    out.extend_from_slice(p.as_slice());
    out.extend_from_slice(&encode_rotation_6d(&heading.rotation_to_local(rotation)));
}

/// Builds the full observation vector for a state, the next six sensor
/// frames and the user scale (height in meters), all expressed in the
/// heading frame computed from the state.
pub fn build_observation(
    state: &CharacterState,
    future: &[SensorFrame],
    scale: f64,
) -> Result<Vec<f64>, ObsError> {
    let heading = compute_heading_frame(state)?;
    build_observation_with_heading(state, future, scale, &heading)
}

/// As [`build_observation`] with an explicit heading frame, used when the
/// caller falls back to the last valid heading.
pub fn build_observation_with_heading(
    state: &CharacterState,
    future: &[SensorFrame],
    scale: f64,
    heading: &HeadingFrame,
) -> Result<Vec<f64>, ObsError> {
    if future.len() != FUTURE_FRAMES {
        return Err(ObsError::InsufficientFuture {
            expected: FUTURE_FRAMES,
            got: future.len(),
        });
    }
    let mut out = Vec::with_capacity(OBS_DIM);
    out.extend_from_slice(&state.q);
    out.extend_from_slice(&state.qd);
    for pose in &state.link_poses {
        let p = heading.point_to_local(&pose.position);
        out.extend_from_slice(p.as_slice());
    }
    for pose in &state.link_poses {
        out.extend_from_slice(&encode_rotation_6d(&heading.rotation_to_local(&pose.rotation)));
    }
    for (lin, ang) in &state.link_velocities {
        let l = heading.vector_to_local(lin);
        let a = heading.vector_to_local(ang);
        out.extend_from_slice(l.as_slice());
        out.extend_from_slice(a.as_slice());
    }
    for f in &state.foot_forces {
        let local = heading.vector_to_local(f);
        out.extend_from_slice(local.as_slice());
    }
    for frame in future {
        push_device(&mut out, heading, &frame.head.position, &frame.head.rotation);
        push_device(&mut out, heading, &frame.left.position, &frame.left.rotation);
        push_device(&mut out, heading, &frame.right.position, &frame.right.rotation);
    }
    out.push(scale);
    debug_assert_eq!(out.len(), OBS_DIM);
    Ok(out)
}

/// Fixed per-block scaling applied before the network input, so every
/// feature is roughly unit magnitude. Constants are part of the checkpoint
/// contract (layout version).
pub fn normalize_observation(obs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(obs.len());
    for (i, &v) in obs.iter().enumerate() {
        let scale = if layout::JOINT_ANGLES.contains(&i) {
            1.0 / std::f64::consts::PI
        } else if layout::JOINT_VELOCITIES.contains(&i) {
            0.1
        } else if layout::LINK_VELOCITIES.contains(&i) {
            0.2
        } else if layout::FOOT_FORCES.contains(&i) {
            1.0 / 1000.0
        } else if i == layout::SCALE {
            0.5
        } else {
            // Positions, 6D rotations and user poses are already O(1).
            1.0
        };
        out.push(v * scale);
    }
    out
}
