//! Motion-clip ingestion and sensor synthesis.
//!
//! Clips hold full-body reference poses at a fixed rate (36 fps after
//! resampling) in the canonical skeleton's coordinates: root pose plus the
//! 33 joint angles, with forward finite-difference velocities. Sensor traces
//! pair each clip with synthesized headset/controller poses.

mod bvh;
mod retarget;
mod sensors;
pub mod synthetic;

pub use bvh::{parse_bvh, BvhChannel, BvhHierarchy, BvhJoint, BvhMotion, RawBvh};
pub use retarget::{canonical_to_bvh, retarget_to_canonical, JointMap};
pub use sensors::{synthesize_sensors, DevicePose, SensorFrame, SensorTrace, SensorSource};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::DOF_COUNT;

/// Canonical clip frame rate in Hz.
pub const CLIP_FRAME_RATE: f64 = 36.0;

/// Schema version of the serialized clip container.
pub const CLIP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MocapError {
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported channel order: {0}")]
    UnsupportedChannelOrder(String),
    #[error("no mapping for canonical link '{0}'")]
    MissingJointMapping(String),
    #[error("first frame is not an A-pose standing frame: {0}")]
    NoAPoseStart(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// One full-body reference pose with finite-difference velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullBodyFrame {
    pub root_position: Vector3<f64>,
    pub root_orientation: UnitQuaternion<f64>,
    /// World-frame velocity of the root frame origin.
    pub root_linear_vel: Vector3<f64>,
    pub root_angular_vel: Vector3<f64>,
    pub joint_angles: Vec<f64>,
    pub joint_velocities: Vec<f64>,
}

impl FullBodyFrame {
    pub fn at_rest(
        root_position: Vector3<f64>,
        root_orientation: UnitQuaternion<f64>,
        joint_angles: Vec<f64>,
    ) -> Self {
        let n = joint_angles.len();
        Self {
            root_position,
            root_orientation,
            root_linear_vel: Vector3::zeros(),
            root_angular_vel: Vector3::zeros(),
            joint_angles,
            joint_velocities: vec![0.0; n],
        }
    }
}

/// Fixed-rate full-body reference motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub schema_version: u32,
    pub name: String,
    pub frame_rate: f64,
    pub subject_height: f64,
    /// Hash of the configuration that produced this artifact.
    #[serde(default)]
    pub producer_hash: u64,
    pub frames: Vec<FullBodyFrame>,
}

impl MotionClip {
    pub fn duration(&self) -> f64 {
        (self.frames.len().saturating_sub(1)) as f64 / self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Validates the clip invariants: at least two frames, a positive frame
    /// rate, unit quaternions and consistent vector lengths.
    pub fn validate(&self) -> Result<(), MocapError> {
        if self.frame_rate <= 0.0 {
            return Err(MocapError::InvalidClip("frame_rate must be > 0".into()));
        }
        if self.frames.len() < 2 {
            return Err(MocapError::InvalidClip("clip needs at least 2 frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.joint_angles.len() != DOF_COUNT || f.joint_velocities.len() != DOF_COUNT {
                return Err(MocapError::InvalidClip(format!(
                    "frame {i} has wrong joint vector length"
                )));
            }
            if (f.root_orientation.norm() - 1.0).abs() > 1e-6 {
                return Err(MocapError::InvalidClip(format!(
                    "frame {i} root quaternion is not unit-norm"
                )));
            }
            let finite = f.root_position.iter().all(|v| v.is_finite())
                && f.joint_angles.iter().all(|v| v.is_finite())
                && f.joint_velocities.iter().all(|v| v.is_finite());
            if !finite {
                return Err(MocapError::InvalidClip(format!("frame {i} has non-finite values")));
            }
        }
        Ok(())
    }

    /// Recomputes velocities with the canonical forward-difference scheme:
    /// frame i's velocity is `(pose_{i+1} - pose_i) * frame_rate`; the last
    /// frame copies the previous one. Root angular velocity comes from the
    /// relative quaternion's scaled axis.
    pub fn recompute_velocities(&mut self) {
        let rate = self.frame_rate;
        let n = self.frames.len();
        for i in 0..n {
            let j = if i + 1 < n { i + 1 } else { i };
            if j == i {
                // Last frame copies the previous velocity.
                if i > 0 {
                    let (prev, last) = {
                        let (a, b) = self.frames.split_at_mut(i);
                        (&a[i - 1], &mut b[0])
                    };
                    last.root_linear_vel = prev.root_linear_vel;
                    last.root_angular_vel = prev.root_angular_vel;
                    last.joint_velocities = prev.joint_velocities.clone();
                }
                continue;
            }
            let next_pos = self.frames[j].root_position;
            let next_rot = self.frames[j].root_orientation;
            let next_q = self.frames[j].joint_angles.clone();
            let f = &mut self.frames[i];
            f.root_linear_vel = (next_pos - f.root_position) * rate;
            let dq = next_rot * f.root_orientation.inverse();
            f.root_angular_vel = dq.scaled_axis() * rate;
            f.joint_velocities = f
                .joint_angles
                .iter()
                .zip(&next_q)
                .map(|(a, b)| (b - a) * rate)
                .collect();
        }
    }

    pub fn to_json(&self) -> Result<String, MocapError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, MocapError> {
        let clip: MotionClip = serde_json::from_str(s)?;
        clip.validate()?;
        Ok(clip)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), MocapError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, MocapError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Resamples a clip to a new frame rate. Positions interpolate linearly,
/// orientations with slerp; velocities are recomputed afterwards. The output
/// preserves the clip duration to within one frame period.
pub fn resample(clip: &MotionClip, new_rate: f64) -> MotionClip {
    if (clip.frame_rate - new_rate).abs() < 1e-9 * new_rate {
        // Same rate up to text round-tripping: snap to the exact target.
        let mut out = clip.clone();
        out.frame_rate = new_rate;
        out.recompute_velocities();
        return out;
    }
    let n_in = clip.frames.len();
    // Number of new-rate samples covering the source duration; the small
    // slack absorbs rate values that round-tripped through text.
    let duration = (n_in - 1) as f64 / clip.frame_rate;
    let n_out = ((duration * new_rate + 1e-6).floor() as usize + 1).max(2);
    let mut frames = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let t_src = (k as f64 / new_rate) * clip.frame_rate;
        let i = (t_src.floor() as usize).min(n_in - 1);
        let j = (i + 1).min(n_in - 1);
        let alpha = (t_src - i as f64).clamp(0.0, 1.0);
        let a = &clip.frames[i];
        let b = &clip.frames[j];
        let root_position = a.root_position.lerp(&b.root_position, alpha);
        let root_orientation = a
            .root_orientation
            .try_slerp(&b.root_orientation, alpha, 1e-12)
            .unwrap_or(a.root_orientation);
        let joint_angles = a
            .joint_angles
            .iter()
            .zip(&b.joint_angles)
            .map(|(x, y)| x + (y - x) * alpha)
            .collect();
        frames.push(FullBodyFrame::at_rest(root_position, root_orientation, joint_angles));
    }
    let mut out = MotionClip {
        schema_version: CLIP_SCHEMA_VERSION,
        name: clip.name.clone(),
        frame_rate: new_rate,
        subject_height: clip.subject_height,
        producer_hash: clip.producer_hash,
        frames,
    };
    out.recompute_velocities();
    out
}
