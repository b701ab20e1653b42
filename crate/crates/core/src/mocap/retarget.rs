//! Maps parsed BVH motion onto the canonical skeleton.
//!
//! A name-mapping table links every canonical link to a BVH joint. Each
//! canonical joint angle set is extracted from the relative world rotation
//! of the mapped joints, so intermediate unmapped BVH joints (extra spine
//! segments etc.) are skipped over naturally. Angles are clamped to the
//! canonical joint limits; the result is resampled to the 36 fps clip rate
//! and the subject height is estimated from the first (A-pose) frame.

use std::collections::HashMap;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::skeleton::{estimate_height_from_apose, link, SkeletonSpec};

use super::bvh::RawBvh;
use super::{resample, FullBodyFrame, MocapError, MotionClip, CLIP_FRAME_RATE, CLIP_SCHEMA_VERSION};

/// Mapping from canonical link names to BVH joint names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointMap {
    pub names: HashMap<String, String>,
    /// Multiplier converting BVH position units to meters (1.0 = meters,
    /// 0.01 = centimeters).
    #[serde(default = "default_scale")]
    pub position_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl JointMap {
    /// Identity map: canonical link names map to themselves.
    pub fn identity(spec: &SkeletonSpec) -> Self {
        Self {
            names: spec
                .links
                .iter()
                .map(|l| (l.name.clone(), l.name.clone()))
                .collect(),
            position_scale: 1.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MocapError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Extracts intrinsic X-Y-Z angles from `R = Rx(a) · Ry(b) · Rz(c)`.
fn decompose_xyz(r: &Rotation3<f64>) -> [f64; 3] {
    let m = r.matrix();
    let b = m[(0, 2)].clamp(-1.0, 1.0).asin();
    let (a, c) = if m[(0, 2)].abs() < 1.0 - 1e-12 {
        (
            (-m[(1, 2)]).atan2(m[(2, 2)]),
            (-m[(0, 1)]).atan2(m[(0, 0)]),
        )
    } else {
        // Gimbal lock: fold everything into the first angle.
        (m[(2, 1)].atan2(m[(1, 1)]), 0.0)
    };
    [a, b, c]
}

/// Best-fit rotation angle about the X axis.
fn decompose_x(r: &Rotation3<f64>) -> f64 {
    let m = r.matrix();
    (m[(2, 1)] - m[(1, 2)]).atan2(m[(1, 1)] + m[(2, 2)])
}

/// Extracts angles from `R ≈ Rx(a) · Rz(c)`.
fn decompose_xz(r: &Rotation3<f64>) -> [f64; 2] {
    let m = r.matrix();
    let c = (-m[(0, 1)]).atan2(m[(0, 0)]);
    let a = (-m[(1, 2)]).atan2(m[(2, 2)]);
    [a, c]
}

const X: Vector3<f64> = Vector3::new(1.0, 0.0, 0.0);
const Y: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);
const Z: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

fn extract_angles(axes: &[Vector3<f64>], r: &Rotation3<f64>) -> Result<Vec<f64>, MocapError> {
    match axes {
        [a, b, c] if *a == X && *b == Y && *c == Z => Ok(decompose_xyz(r).to_vec()),
        [a] if *a == X => Ok(vec![decompose_x(r)]),
        [a, b] if *a == X && *b == Z => Ok(decompose_xz(r).to_vec()),
        _ => Err(MocapError::InvalidClip(format!(
            "unsupported canonical joint axis sequence {axes:?}"
        ))),
    }
}

/// Retargets a parsed BVH onto the canonical skeleton and resamples the
/// result to 36 fps.
pub fn retarget_to_canonical(
    raw: &RawBvh,
    map: &JointMap,
    spec: &SkeletonSpec,
    name: &str,
) -> Result<MotionClip, MocapError> {
    let mut bvh_index = Vec::with_capacity(spec.links.len());
    for l in &spec.links {
        let mapped = map
            .names
            .get(&l.name)
            .ok_or_else(|| MocapError::MissingJointMapping(l.name.clone()))?;
        let idx = raw
            .joint_index(mapped)
            .ok_or_else(|| MocapError::MissingJointMapping(l.name.clone()))?;
        bvh_index.push(idx);
    }
    if raw.motion.frames.len() < 2 {
        return Err(MocapError::InvalidClip("BVH has fewer than 2 frames".into()));
    }

    let scale = map.position_scale;
    let mut frames = Vec::with_capacity(raw.motion.frames.len());
    for f in 0..raw.motion.frames.len() {
        let world = raw.world_poses(f);
        let root_rot = world[bvh_index[link::PELVIS]].0;
        let root_pos = world[bvh_index[link::PELVIS]].1 * scale;
        let mut q = Vec::with_capacity(spec.dof_count);
        for joint in &spec.joints {
            let parent = spec.links[joint.link].parent.expect("non-root link");
            let parent_rot = world[bvh_index[parent]].0;
            let child_rot = world[bvh_index[joint.link]].0;
            let local = parent_rot.inverse() * child_rot;
            let angles = extract_angles(&joint.axes, &local)?;
            for (k, angle) in angles.iter().enumerate() {
                let (lo, hi) = joint.limits[k];
                q.push(angle.clamp(lo, hi));
            }
        }
        frames.push(FullBodyFrame::at_rest(
            root_pos,
            UnitQuaternion::from_rotation_matrix(&root_rot),
            q,
        ));
    }

    // Subject height from the first frame, which must be a standing A-pose.
    let world0 = raw.world_poses(0);
    let positions: Vec<Vector3<f64>> = bvh_index
        .iter()
        .map(|&i| world0[i].1 * scale)
        .collect();
    let subject_height = estimate_height_from_apose(&positions, link::HEAD)
        .map_err(|e| MocapError::NoAPoseStart(e.to_string()))?;

    let mut clip = MotionClip {
        schema_version: CLIP_SCHEMA_VERSION,
        name: name.to_string(),
        frame_rate: raw.frame_rate(),
        subject_height,
        producer_hash: 0,
        frames,
    };
    clip.recompute_velocities();
    let clip = resample(&clip, CLIP_FRAME_RATE);
    clip.validate()?;
    Ok(clip)
}

/// Writes a canonical clip as BVH text with the canonical hierarchy and
/// X-Y-Z rotation channels. Used by tests and the trajectory dump path.
pub fn canonical_to_bvh(clip: &MotionClip, spec: &SkeletonSpec) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("HIERARCHY\n");

    fn emit_joint(
        out: &mut String,
        spec: &SkeletonSpec,
        link_idx: usize,
        depth: usize,
        children: &[Vec<usize>],
    ) {
        let pad = "  ".repeat(depth);
        let l = &spec.links[link_idx];
        if link_idx == 0 {
            let _ = writeln!(out, "{pad}ROOT {}", l.name);
        } else {
            let _ = writeln!(out, "{pad}JOINT {}", l.name);
        }
        let _ = writeln!(out, "{pad}{{");
        // The root's position is carried entirely by its channels.
        let off = if link_idx == 0 { Vector3::zeros() } else { l.offset };
        let _ = writeln!(
            out,
            "{pad}  OFFSET {:.10} {:.10} {:.10}",
            off.x, off.y, off.z
        );
        if link_idx == 0 {
            let _ = writeln!(
                out,
                "{pad}  CHANNELS 6 Xposition Yposition Zposition Xrotation Yrotation Zrotation"
            );
        } else {
            let _ = writeln!(out, "{pad}  CHANNELS 3 Xrotation Yrotation Zrotation");
        }
        if children[link_idx].is_empty() {
            let _ = writeln!(out, "{pad}  End Site");
            let _ = writeln!(out, "{pad}  {{");
            let _ = writeln!(out, "{pad}    OFFSET 0.0 0.0 0.0");
            let _ = writeln!(out, "{pad}  }}");
        } else {
            for &c in &children[link_idx] {
                emit_joint(out, spec, c, depth + 1, children);
            }
        }
        let _ = writeln!(out, "{pad}}}");
    }

    let mut children = vec![Vec::new(); spec.links.len()];
    for (i, l) in spec.links.iter().enumerate() {
        if let Some(p) = l.parent {
            children[p].push(i);
        }
    }
    emit_joint(&mut out, spec, 0, 0, &children);

    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", clip.frames.len());
    let _ = writeln!(out, "Frame Time: {:.10}", 1.0 / clip.frame_rate);
    for f in &clip.frames {
        let mut row: Vec<f64> = vec![f.root_position.x, f.root_position.y, f.root_position.z];
        let root = decompose_xyz(&f.root_orientation.to_rotation_matrix());
        row.extend(root.iter().map(|a| a.to_degrees()));
        let mut at = 0;
        for joint in &spec.joints {
            let d = joint.dof();
            let angles = &f.joint_angles[at..at + d];
            // Expand to the intrinsic X-Y-Z channel triple.
            let (x, y, z) = match joint.axes.len() {
                3 => (angles[0], angles[1], angles[2]),
                2 => (angles[0], 0.0, angles[1]),
                _ => (angles[0], 0.0, 0.0),
            };
            row.extend([x.to_degrees(), y.to_degrees(), z.to_degrees()]);
            at += d;
        }
        let line: Vec<String> = row.iter().map(|v| format!("{v:.10}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}
