//! Canonical humanoid definition and height scaling.
//!
//! The canonical skeleton is a 16-link, 33-DoF humanoid. The pelvis is the
//! root link; its 6 free DoF are handled by the simulator and are not counted
//! in the 33. All other links attach to their parent through a 1-3 DoF
//! revolute joint whose axes are fixed in the parent frame.
//!
//! Conventions: Y is up, +Z is the character's forward direction, +X is the
//! character's left. The zero pose (all joint angles zero) is an upright
//! calibration stance with arms hanging at the sides, feet resting on the
//! ground plane y = 0.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema version of the serialized skeleton format.
pub const SKELETON_SCHEMA_VERSION: u32 = 1;

/// Number of links in the canonical humanoid.
pub const LINK_COUNT: usize = 16;

/// Number of actuated degrees of freedom (excludes the 6-DoF free root).
pub const DOF_COUNT: usize = 33;

/// Height of the unscaled reference skeleton in meters.
pub const REFERENCE_HEIGHT: f64 = 1.75;

/// Per-DoF torque limit in N·m.
pub const TORQUE_LIMIT: f64 = 200.0;

/// Accepted user height range in meters for [`scale_skeleton`].
pub const HEIGHT_BOUNDS: (f64, f64) = (1.0, 2.5);

/// Head-joint height as a fraction of total standing height. The height
/// estimator multiplies the observed head-joint height by the reciprocal of
/// this ratio, so the estimate scales exactly with the skeleton.
pub const HEAD_JOINT_HEIGHT_RATIO: f64 = 1.50 / 1.75;

/// Canonical link indices.
pub mod link {
    pub const PELVIS: usize = 0;
    pub const TORSO: usize = 1;
    pub const CHEST: usize = 2;
    pub const HEAD: usize = 3;
    pub const L_UPPER_ARM: usize = 4;
    pub const L_FOREARM: usize = 5;
    pub const L_HAND: usize = 6;
    pub const R_UPPER_ARM: usize = 7;
    pub const R_FOREARM: usize = 8;
    pub const R_HAND: usize = 9;
    pub const L_THIGH: usize = 10;
    pub const L_SHIN: usize = 11;
    pub const L_FOOT: usize = 12;
    pub const R_THIGH: usize = 13;
    pub const R_SHIN: usize = 14;
    pub const R_FOOT: usize = 15;
}

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("user height {0} m outside accepted range [{1}, {2}] m")]
    OutOfRangeHeight(f64, f64, f64),
    #[error("pose is not a standing pose: {0}")]
    NotStanding(String),
    #[error("invalid skeleton: {0}")]
    Invalid(String),
}

/// Collision capsule in the link's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    /// Capsule center in the link frame.
    pub center: Vector3<f64>,
    /// Unit axis of the capsule in the link frame.
    pub axis: Vector3<f64>,
    pub radius: f64,
    pub half_length: f64,
}

impl Capsule {
    /// Centers of the two end-cap spheres in the link frame.
    pub fn endpoints(&self) -> [Vector3<f64>; 2] {
        [
            self.center - self.axis * self.half_length,
            self.center + self.axis * self.half_length,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    /// Parent link index; `None` only for the pelvis.
    pub parent: Option<usize>,
    /// Position of this link's joint in the parent frame (meters).
    pub offset: Vector3<f64>,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Diagonal inertia about the center of mass, in the link frame (kg·m²).
    pub inertia: Vector3<f64>,
    pub capsule: Capsule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    Spherical,
    Universal,
    Hinge,
}

/// A joint connecting `link` to its parent, with 1-3 revolute DoF applied in
/// sequence. Axes are unit vectors in the parent frame (the link frame is
/// aligned with the parent frame in the zero pose).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub link: usize,
    pub kind: JointKind,
    pub axes: Vec<Vector3<f64>>,
    /// Per-DoF (lower, upper) angle limits in radians.
    pub limits: Vec<(f64, f64)>,
    /// Per-DoF torque limit in N·m.
    pub torque_limit: f64,
}

impl JointSpec {
    pub fn dof(&self) -> usize {
        self.axes.len()
    }
}

/// Rigid transform from a link frame to an attached sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorOffset {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl SensorOffset {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }
}

/// Sensor attachment frames: headset on the head link, one controller on
/// each hand link. These are physical device offsets and do not scale with
/// the skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorOffsets {
    pub head: SensorOffset,
    pub left_wrist: SensorOffset,
    pub right_wrist: SensorOffset,
}

/// The canonical humanoid definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub schema_version: u32,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub dof_count: usize,
    pub reference_height: f64,
    pub sensor_offsets: SensorOffsets,
}

/// A skeleton instance uniformly scaled to a user's height.
///
/// All linear dimensions, masses, inertias and collision geometry are
/// multiplied by the same factor `scale = user_height / reference_height`.
/// Sensor offsets are device geometry and stay unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSkeleton {
    pub spec: SkeletonSpec,
    pub scale: f64,
    pub user_height: f64,
    /// Scaled copies of the link specs.
    pub links: Vec<LinkSpec>,
}

impl ScaledSkeleton {
    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.spec.joints
    }

    pub fn dof_count(&self) -> usize {
        self.spec.dof_count
    }

    /// Standing head-joint height of this instance (zero pose).
    pub fn standing_head_height(&self) -> f64 {
        zero_pose_joint_heights(&self.links)[link::HEAD]
    }

    /// Pelvis height above the ground in the zero pose.
    pub fn standing_root_height(&self) -> f64 {
        zero_pose_root_height(&self.links)
    }

    pub fn sensor_offsets(&self) -> &SensorOffsets {
        &self.spec.sensor_offsets
    }
}

fn capsule_inertia(mass: f64, radius: f64, half_length: f64) -> (f64, f64) {
    // Solid capsule about its center: returns (axial, transverse) moments.
    let r = radius;
    let h = 2.0 * half_length;
    let v_cyl = std::f64::consts::PI * r * r * h;
    let v_sph = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
    let density = mass / (v_cyl + v_sph);
    let m_cyl = density * v_cyl;
    let m_sph = density * v_sph;

    let axial = m_cyl * r * r / 2.0 + m_sph * 2.0 * r * r / 5.0;
    let trans_cyl = m_cyl * (3.0 * r * r + h * h) / 12.0;
    // Two hemispheres at distance h/2 from center plus their own term.
    let trans_sph = m_sph * (2.0 * r * r / 5.0 + h * h / 4.0 + 3.0 * h * r / 8.0);
    (axial, trans_cyl + trans_sph)
}

fn diag_inertia_for(axis: Vector3<f64>, mass: f64, radius: f64, half_length: f64) -> Vector3<f64> {
    let (axial, trans) = capsule_inertia(mass, radius, half_length);
    // Capsule axes here are always coordinate-aligned.
    if axis.x.abs() > 0.5 {
        Vector3::new(axial, trans, trans)
    } else if axis.y.abs() > 0.5 {
        Vector3::new(trans, axial, trans)
    } else {
        Vector3::new(trans, trans, axial)
    }
}

struct LinkBuild {
    name: &'static str,
    parent: Option<usize>,
    offset: Vector3<f64>,
    mass: f64,
    com: Vector3<f64>,
    capsule: Capsule,
}

fn make_link(b: LinkBuild) -> LinkSpec {
    let inertia = diag_inertia_for(b.capsule.axis, b.mass, b.capsule.radius, b.capsule.half_length);
    LinkSpec {
        name: b.name.to_string(),
        parent: b.parent,
        offset: b.offset,
        mass: b.mass,
        com: b.com,
        inertia,
        capsule: b.capsule,
    }
}

fn vcap(center: Vector3<f64>, axis: Vector3<f64>, radius: f64, half_length: f64) -> Capsule {
    Capsule {
        center,
        axis,
        radius,
        half_length,
    }
}

const X: Vector3<f64> = Vector3::new(1.0, 0.0, 0.0);
const Y: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);
const Z: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Builds the canonical 16-link, 33-DoF humanoid at the reference height of
/// 1.75 m with a total mass of 70 kg.
///
/// Mass fractions follow standard anthropometric tables (trunk split across
/// pelvis/torso/chest): pelvis 0.178, torso 0.139, chest 0.180, head 0.081,
/// upper arm 0.028, forearm 0.016, hand 0.006, thigh 0.100, shin 0.0465,
/// foot 0.0145 of total body mass.
pub fn build_default_skeleton() -> SkeletonSpec {
    const TOTAL_MASS: f64 = 70.0;

    // Key joint heights in the zero pose (meters).
    let hip_y = 0.90;
    let root_y = 0.95;
    let knee_drop = 0.43; // hip -> knee
    let ankle_drop = 0.39; // knee -> ankle (ankle at 0.08)
    let hip_half_width = 0.09;
    let shoulder_half_width = 0.18;

    let mut links = Vec::with_capacity(LINK_COUNT);

    // Pelvis: root. Offset holds the default standing root position.
    links.push(make_link(LinkBuild {
        name: "pelvis",
        parent: None,
        offset: Vector3::new(0.0, root_y, 0.0),
        mass: 0.178 * TOTAL_MASS,
        com: Vector3::new(0.0, -0.02, 0.0),
        capsule: vcap(Vector3::new(0.0, -0.02, 0.0), X, 0.10, 0.08),
    }));
    links.push(make_link(LinkBuild {
        name: "torso",
        parent: Some(link::PELVIS),
        offset: Vector3::new(0.0, 0.11, 0.0), // torso joint at 1.06
        mass: 0.139 * TOTAL_MASS,
        com: Vector3::new(0.0, 0.08, 0.0),
        capsule: vcap(Vector3::new(0.0, 0.08, 0.0), Y, 0.11, 0.05),
    }));
    links.push(make_link(LinkBuild {
        name: "chest",
        parent: Some(link::TORSO),
        offset: Vector3::new(0.0, 0.16, 0.0), // chest joint at 1.22
        mass: 0.180 * TOTAL_MASS,
        com: Vector3::new(0.0, 0.14, 0.0),
        capsule: vcap(Vector3::new(0.0, 0.14, 0.0), Y, 0.12, 0.07),
    }));
    links.push(make_link(LinkBuild {
        name: "head",
        parent: Some(link::CHEST),
        offset: Vector3::new(0.0, 0.28, 0.0), // head joint at 1.50
        mass: 0.081 * TOTAL_MASS,
        com: Vector3::new(0.0, 0.12, 0.0),
        capsule: vcap(Vector3::new(0.0, 0.12, 0.0), Y, 0.09, 0.04),
    }));

    // Arms hang straight down in the zero pose. Shoulder joint at y = 1.42.
    let upper_arm_len = 0.28;
    let forearm_len = 0.26;
    let hand_len = 0.16;
    for (side, sx) in [("l", 1.0f64), ("r", -1.0f64)] {
        let names: [&'static str; 3] = if side == "l" {
            ["l_upper_arm", "l_forearm", "l_hand"]
        } else {
            ["r_upper_arm", "r_forearm", "r_hand"]
        };
        let parent_of_upper = link::CHEST;
        let upper = make_link(LinkBuild {
            name: names[0],
            parent: Some(parent_of_upper),
            offset: Vector3::new(sx * shoulder_half_width, 0.20, 0.0),
            mass: 0.028 * TOTAL_MASS,
            com: Vector3::new(0.0, -upper_arm_len / 2.0, 0.0),
            capsule: vcap(
                Vector3::new(0.0, -upper_arm_len / 2.0, 0.0),
                Y,
                0.045,
                upper_arm_len / 2.0 - 0.045,
            ),
        });
        let upper_idx = links.len();
        links.push(upper);
        links.push(make_link(LinkBuild {
            name: names[1],
            parent: Some(upper_idx),
            offset: Vector3::new(0.0, -upper_arm_len, 0.0),
            mass: 0.016 * TOTAL_MASS,
            com: Vector3::new(0.0, -forearm_len / 2.0, 0.0),
            capsule: vcap(
                Vector3::new(0.0, -forearm_len / 2.0, 0.0),
                Y,
                0.035,
                forearm_len / 2.0 - 0.035,
            ),
        }));
        links.push(make_link(LinkBuild {
            name: names[2],
            parent: Some(upper_idx + 1),
            offset: Vector3::new(0.0, -forearm_len, 0.0),
            mass: 0.006 * TOTAL_MASS,
            com: Vector3::new(0.0, -hand_len / 2.0, 0.0),
            capsule: vcap(
                Vector3::new(0.0, -hand_len / 2.0, 0.0),
                Y,
                0.035,
                hand_len / 2.0 - 0.035,
            ),
        }));
    }

    // Legs: hip at (±0.09, 0.90), knee at 0.47, ankle at 0.08.
    for (side, sx) in [("l", 1.0f64), ("r", -1.0f64)] {
        let names: [&'static str; 3] = if side == "l" {
            ["l_thigh", "l_shin", "l_foot"]
        } else {
            ["r_thigh", "r_shin", "r_foot"]
        };
        let thigh = make_link(LinkBuild {
            name: names[0],
            parent: Some(link::PELVIS),
            offset: Vector3::new(sx * hip_half_width, hip_y - root_y, 0.0),
            mass: 0.100 * TOTAL_MASS,
            com: Vector3::new(0.0, -knee_drop / 2.0, 0.0),
            capsule: vcap(
                Vector3::new(0.0, -knee_drop / 2.0, 0.0),
                Y,
                0.07,
                knee_drop / 2.0 - 0.07,
            ),
        });
        let thigh_idx = links.len();
        links.push(thigh);
        links.push(make_link(LinkBuild {
            name: names[1],
            parent: Some(thigh_idx),
            offset: Vector3::new(0.0, -knee_drop, 0.0),
            mass: 0.0465 * TOTAL_MASS,
            com: Vector3::new(0.0, -ankle_drop / 2.0, 0.0),
            capsule: vcap(
                Vector3::new(0.0, -ankle_drop / 2.0, 0.0),
                Y,
                0.05,
                ankle_drop / 2.0 - 0.05,
            ),
        }));
        // Foot frame at the ankle (y = 0.08); capsule runs heel to toe with
        // its underside resting on y = 0 in the zero pose.
        links.push(make_link(LinkBuild {
            name: names[2],
            parent: Some(thigh_idx + 1),
            offset: Vector3::new(0.0, -ankle_drop, 0.0),
            mass: 0.0145 * TOTAL_MASS,
            com: Vector3::new(0.0, -0.04, 0.05),
            capsule: vcap(Vector3::new(0.0, -0.04, 0.05), Z, 0.04, 0.09),
        }));
    }

    let spherical = |link: usize, range: f64| JointSpec {
        link,
        kind: JointKind::Spherical,
        axes: vec![X, Y, Z],
        limits: vec![(-range, range); 3],
        torque_limit: TORQUE_LIMIT,
    };

    let joints = vec![
        spherical(link::TORSO, 0.8),
        spherical(link::CHEST, 0.8),
        spherical(link::HEAD, 1.0),
        spherical(link::L_UPPER_ARM, 2.8),
        JointSpec {
            link: link::L_FOREARM,
            kind: JointKind::Hinge,
            axes: vec![X],
            limits: vec![(-2.6, 0.05)],
            torque_limit: TORQUE_LIMIT,
        },
        JointSpec {
            link: link::L_HAND,
            kind: JointKind::Universal,
            axes: vec![X, Z],
            limits: vec![(-1.2, 1.2), (-1.2, 1.2)],
            torque_limit: TORQUE_LIMIT,
        },
        spherical(link::R_UPPER_ARM, 2.8),
        JointSpec {
            link: link::R_FOREARM,
            kind: JointKind::Hinge,
            axes: vec![X],
            limits: vec![(-2.6, 0.05)],
            torque_limit: TORQUE_LIMIT,
        },
        JointSpec {
            link: link::R_HAND,
            kind: JointKind::Universal,
            axes: vec![X, Z],
            limits: vec![(-1.2, 1.2), (-1.2, 1.2)],
            torque_limit: TORQUE_LIMIT,
        },
        spherical(link::L_THIGH, 2.4),
        JointSpec {
            link: link::L_SHIN,
            kind: JointKind::Hinge,
            axes: vec![X],
            limits: vec![(-0.05, 2.6)],
            torque_limit: TORQUE_LIMIT,
        },
        JointSpec {
            link: link::L_FOOT,
            kind: JointKind::Universal,
            axes: vec![X, Z],
            limits: vec![(-1.0, 1.0), (-0.6, 0.6)],
            torque_limit: TORQUE_LIMIT,
        },
        spherical(link::R_THIGH, 2.4),
        JointSpec {
            link: link::R_SHIN,
            kind: JointKind::Hinge,
            axes: vec![X],
            limits: vec![(-0.05, 2.6)],
            torque_limit: TORQUE_LIMIT,
        },
        JointSpec {
            link: link::R_FOOT,
            kind: JointKind::Universal,
            axes: vec![X, Z],
            limits: vec![(-1.0, 1.0), (-0.6, 0.6)],
            torque_limit: TORQUE_LIMIT,
        },
    ];

    let spec = SkeletonSpec {
        schema_version: SKELETON_SCHEMA_VERSION,
        links,
        joints,
        dof_count: DOF_COUNT,
        reference_height: REFERENCE_HEIGHT,
        sensor_offsets: SensorOffsets {
            head: SensorOffset {
                translation: Vector3::new(0.0, 0.10, 0.08),
                rotation: UnitQuaternion::identity(),
            },
            left_wrist: SensorOffset {
                translation: Vector3::new(0.0, -0.05, 0.02),
                rotation: UnitQuaternion::identity(),
            },
            right_wrist: SensorOffset {
                translation: Vector3::new(0.0, -0.05, 0.02),
                rotation: UnitQuaternion::identity(),
            },
        },
    };
    spec.validate().expect("default skeleton must be valid");
    spec
}

impl SkeletonSpec {
    /// Checks all construction invariants: link/DoF counts, tree structure,
    /// positive mass properties and left/right mirror symmetry.
    pub fn validate(&self) -> Result<(), SkeletonError> {
        if self.links.len() != LINK_COUNT {
            return Err(SkeletonError::Invalid(format!(
                "expected {LINK_COUNT} links, got {}",
                self.links.len()
            )));
        }
        let dof: usize = self.joints.iter().map(|j| j.dof()).sum();
        if dof != DOF_COUNT || self.dof_count != DOF_COUNT {
            return Err(SkeletonError::Invalid(format!(
                "expected {DOF_COUNT} DoF, got {dof}"
            )));
        }
        if self.links[0].parent.is_some() {
            return Err(SkeletonError::Invalid("link 0 must be the root".into()));
        }
        // Tree check: every link reachable from the pelvis, no cycles.
        // Parent indices must precede children.
        for (i, l) in self.links.iter().enumerate().skip(1) {
            match l.parent {
                Some(p) if p < i => {}
                _ => {
                    return Err(SkeletonError::Invalid(format!(
                        "link {i} has invalid parent {:?}",
                        l.parent
                    )))
                }
            }
        }
        let mut reached = vec![false; self.links.len()];
        reached[0] = true;
        for i in 1..self.links.len() {
            let p = self.links[i].parent.unwrap();
            if !reached[p] {
                return Err(SkeletonError::Invalid(format!("link {i} unreachable")));
            }
            reached[i] = true;
        }
        for (i, l) in self.links.iter().enumerate() {
            if l.mass <= 0.0 {
                return Err(SkeletonError::Invalid(format!("link {i} mass <= 0")));
            }
            if l.inertia.min() <= 0.0 {
                return Err(SkeletonError::Invalid(format!("link {i} inertia <= 0")));
            }
            if l.capsule.radius <= 0.0 {
                return Err(SkeletonError::Invalid(format!("link {i} capsule radius <= 0")));
            }
        }
        // Each joint must target a valid non-root link, exactly once.
        let mut seen = vec![false; self.links.len()];
        for j in &self.joints {
            if j.link == 0 || j.link >= self.links.len() || seen[j.link] {
                return Err(SkeletonError::Invalid(format!(
                    "joint targets invalid link {}",
                    j.link
                )));
            }
            if j.axes.len() != j.limits.len() {
                return Err(SkeletonError::Invalid("axes/limits length mismatch".into()));
            }
            seen[j.link] = true;
        }
        if seen.iter().skip(1).any(|s| !s) {
            return Err(SkeletonError::Invalid("some link has no joint".into()));
        }
        // Mirror symmetry of paired limbs.
        let pairs = [
            (link::L_UPPER_ARM, link::R_UPPER_ARM),
            (link::L_FOREARM, link::R_FOREARM),
            (link::L_HAND, link::R_HAND),
            (link::L_THIGH, link::R_THIGH),
            (link::L_SHIN, link::R_SHIN),
            (link::L_FOOT, link::R_FOOT),
        ];
        for (l, r) in pairs {
            let (a, b) = (&self.links[l], &self.links[r]);
            let mirrored = Vector3::new(-b.offset.x, b.offset.y, b.offset.z);
            if (a.offset - mirrored).norm() > 1e-12
                || (a.mass - b.mass).abs() > 1e-12
                || (a.inertia - b.inertia).norm() > 1e-12
            {
                return Err(SkeletonError::Invalid(format!(
                    "links {l}/{r} are not mirror-symmetric"
                )));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Joint world positions in the zero pose (no rotations anywhere), with
    /// the root at its default standing position.
    pub fn zero_pose_joint_positions(&self) -> Vec<Vector3<f64>> {
        zero_pose_positions(&self.links)
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }
}

fn zero_pose_positions(links: &[LinkSpec]) -> Vec<Vector3<f64>> {
    let mut out = vec![Vector3::zeros(); links.len()];
    for (i, l) in links.iter().enumerate() {
        out[i] = match l.parent {
            None => l.offset,
            Some(p) => out[p] + l.offset,
        };
    }
    out
}

fn zero_pose_joint_heights(links: &[LinkSpec]) -> Vec<f64> {
    zero_pose_positions(links).iter().map(|p| p.y).collect()
}

fn zero_pose_root_height(links: &[LinkSpec]) -> f64 {
    links[0].offset.y
}

/// Produces a uniformly scaled skeleton instance for a user of the given
/// height. Lengths, masses, inertias and collision geometry all scale by
/// `user_height / reference_height`.
pub fn scale_skeleton(
    spec: &SkeletonSpec,
    user_height: f64,
) -> Result<ScaledSkeleton, SkeletonError> {
    scale_skeleton_with_bounds(spec, user_height, HEIGHT_BOUNDS)
}

pub fn scale_skeleton_with_bounds(
    spec: &SkeletonSpec,
    user_height: f64,
    bounds: (f64, f64),
) -> Result<ScaledSkeleton, SkeletonError> {
    if !(user_height >= bounds.0 && user_height <= bounds.1) {
        return Err(SkeletonError::OutOfRangeHeight(user_height, bounds.0, bounds.1));
    }
    let s = user_height / spec.reference_height;
    let links = spec
        .links
        .iter()
        .map(|l| LinkSpec {
            name: l.name.clone(),
            parent: l.parent,
            offset: l.offset * s,
            mass: l.mass * s,
            com: l.com * s,
            inertia: l.inertia * s,
            capsule: Capsule {
                center: l.capsule.center * s,
                axis: l.capsule.axis,
                radius: l.capsule.radius * s,
                half_length: l.capsule.half_length * s,
            },
        })
        .collect();
    Ok(ScaledSkeleton {
        spec: spec.clone(),
        scale: s,
        user_height,
        links,
    })
}

/// Estimates a subject's standing height from the joint world positions of a
/// calibration (A-pose) frame.
///
/// The estimate is the head-joint height divided by [`HEAD_JOINT_HEIGHT_RATIO`],
/// which makes it exactly proportional to uniform scaling of the pose.
pub fn estimate_height_from_apose(
    joint_positions: &[Vector3<f64>],
    head_index: usize,
) -> Result<f64, SkeletonError> {
    estimate_height_with_margin(joint_positions, head_index, 0.01)
}

/// Minimum head-above-lowest-joint extent for a pose to count as standing.
pub const MIN_STANDING_EXTENT: f64 = 0.5;

/// As [`estimate_height_from_apose`], with a configurable margin by which
/// other joints may exceed the head before the pose is rejected.
pub fn estimate_height_with_margin(
    joint_positions: &[Vector3<f64>],
    head_index: usize,
    margin: f64,
) -> Result<f64, SkeletonError> {
    let head_y = joint_positions
        .get(head_index)
        .ok_or_else(|| SkeletonError::Invalid("head index out of range".into()))?
        .y;
    let mut min_y = head_y;
    for (i, p) in joint_positions.iter().enumerate() {
        if i != head_index && p.y > head_y + margin {
            return Err(SkeletonError::NotStanding(format!(
                "joint {i} (y={:.3}) is above the head joint (y={:.3})",
                p.y, head_y
            )));
        }
        min_y = min_y.min(p.y);
    }
    // A lying pose has all joints at roughly the same height; a standing
    // human of any accepted size spans well over this extent vertically.
    if head_y - min_y < MIN_STANDING_EXTENT {
        return Err(SkeletonError::NotStanding(format!(
            "vertical extent {:.3} m is too small for a standing pose",
            head_y - min_y
        )));
    }
    Ok(head_y / HEAD_JOINT_HEIGHT_RATIO)
}
