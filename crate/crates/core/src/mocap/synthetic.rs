//! Bundled procedural reference clips: stand, walk cycle, arm raise.
//!
//! Every clip starts with a short standing A-pose lead-in so the first frame
//! passes the calibration check used for height estimation. Clips are
//! generated for a specific skeleton instance and carry its height.

use nalgebra::{UnitQuaternion, Vector3};

use crate::skeleton::{link, ScaledSkeleton};

use super::{FullBodyFrame, MotionClip, CLIP_FRAME_RATE, CLIP_SCHEMA_VERSION};

/// Seconds of still A-pose at the start of each generated clip.
const LEAD_IN: f64 = 0.5;

struct DofMap {
    torso_x: usize,
    l_shoulder_x: usize,
    r_shoulder_x: usize,
    l_elbow: usize,
    r_elbow: usize,
    l_hip_x: usize,
    r_hip_x: usize,
    l_knee: usize,
    r_knee: usize,
    l_ankle_x: usize,
    r_ankle_x: usize,
}

fn dof_map(sk: &ScaledSkeleton) -> DofMap {
    let mut first = vec![0usize; sk.links.len()];
    let mut at = 0;
    for j in sk.joints() {
        first[j.link] = at;
        at += j.dof();
    }
    DofMap {
        torso_x: first[link::TORSO],
        l_shoulder_x: first[link::L_UPPER_ARM],
        r_shoulder_x: first[link::R_UPPER_ARM],
        l_elbow: first[link::L_FOREARM],
        r_elbow: first[link::R_FOREARM],
        l_hip_x: first[link::L_THIGH],
        r_hip_x: first[link::R_THIGH],
        l_knee: first[link::L_SHIN],
        r_knee: first[link::R_SHIN],
        l_ankle_x: first[link::L_FOOT],
        r_ankle_x: first[link::R_FOOT],
    }
}

fn generate(
    sk: &ScaledSkeleton,
    name: &str,
    seconds: f64,
    mut pose_at: impl FnMut(f64, &mut Vec<f64>),
) -> MotionClip {
    let rate = CLIP_FRAME_RATE;
    let n = ((LEAD_IN + seconds) * rate).round().max(2.0) as usize;
    let root = Vector3::new(0.0, sk.standing_root_height(), 0.0);
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / rate;
        let mut q = vec![0.0; sk.dof_count()];
        if t > LEAD_IN {
            pose_at(t - LEAD_IN, &mut q);
        }
        frames.push(FullBodyFrame::at_rest(root, UnitQuaternion::identity(), q));
    }
    let mut clip = MotionClip {
        schema_version: CLIP_SCHEMA_VERSION,
        name: name.to_string(),
        frame_rate: rate,
        subject_height: sk.user_height,
        producer_hash: 0,
        frames,
    };
    clip.recompute_velocities();
    clip
}

/// Still standing pose.
pub fn standing_clip(sk: &ScaledSkeleton, seconds: f64) -> MotionClip {
    generate(sk, "stand", seconds, |_, _| {})
}

/// Gentle in-place stepping cycle with opposing arm swing.
pub fn walk_clip(sk: &ScaledSkeleton, seconds: f64) -> MotionClip {
    let map = dof_map(sk);
    let period = 1.2;
    generate(sk, "walk", seconds, move |t, q| {
        let phase = std::f64::consts::TAU * t / period;
        // Smooth ramp-in over the first half cycle.
        let ramp = (t / (period / 2.0)).min(1.0);
        let lift_l = phase.sin().max(0.0) * ramp;
        let lift_r = (-phase.sin()).max(0.0) * ramp;
        let swing = phase.sin() * ramp;

        q[map.l_hip_x] = -0.30 * lift_l;
        q[map.l_knee] = 0.60 * lift_l;
        q[map.l_ankle_x] = -0.30 * lift_l;
        q[map.r_hip_x] = -0.30 * lift_r;
        q[map.r_knee] = 0.60 * lift_r;
        q[map.r_ankle_x] = -0.30 * lift_r;
        // Arms swing opposite to their leg.
        q[map.l_shoulder_x] = 0.25 * swing;
        q[map.r_shoulder_x] = -0.25 * swing;
        q[map.l_elbow] = -0.3 - 0.1 * swing;
        q[map.r_elbow] = -0.3 + 0.1 * swing;
        q[map.torso_x] = 0.03 * (2.0 * phase).sin() * ramp;
    })
}

/// Both arms raised forward, held, then lowered.
pub fn arm_raise_clip(sk: &ScaledSkeleton, seconds: f64) -> MotionClip {
    let map = dof_map(sk);
    generate(sk, "arm-raise", seconds, move |t, q| {
        let raise_time = (seconds * 0.4).max(0.1);
        let hold_time = seconds * 0.2;
        let angle = if t < raise_time {
            t / raise_time
        } else if t < raise_time + hold_time {
            1.0
        } else {
            (1.0 - (t - raise_time - hold_time) / raise_time).max(0.0)
        };
        // Negative shoulder pitch raises the hanging arm forward.
        q[map.l_shoulder_x] = -1.2 * angle;
        q[map.r_shoulder_x] = -1.2 * angle;
    })
}

/// Clip registry for `builtin:` references in configs and the CLI.
pub fn builtin_clip(name: &str, sk: &ScaledSkeleton) -> Option<MotionClip> {
    match name {
        "stand" => Some(standing_clip(sk, 4.0)),
        "walk" => Some(walk_clip(sk, 4.0)),
        "arm-raise" => Some(arm_raise_clip(sk, 3.0)),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["stand", "walk", "arm-raise"];
