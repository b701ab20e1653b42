//! Reduced-coordinate articulated model and forward kinematics.
//!
//! Multi-DoF joints are expanded into chains of single-DoF revolute nodes
//! with zero-length offsets; the last node of each chain carries the link's
//! mass properties. Node `i`'s frame equals its parent's frame rotated by
//! `R(axis, q_i)`, so a 3-axis joint composes intrinsically in axis order.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::skeleton::ScaledSkeleton;

/// One revolute degree of freedom in the expanded tree.
#[derive(Debug, Clone)]
pub struct DofNode {
    /// Parent node index, or `None` when attached directly to the root body.
    pub parent: Option<usize>,
    /// Joint position in the parent frame (zero for stacked DoFs).
    pub offset: Vector3<f64>,
    /// Rotation axis in the parent frame.
    pub axis: Vector3<f64>,
    /// Link carried by this node (set on the last DoF of each joint chain).
    pub link: Option<usize>,
    pub limits: (f64, f64),
    pub torque_limit: f64,
    /// Mass properties; zero mass for intermediate nodes.
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Vector3<f64>,
}

/// Mass properties and geometry of the root body.
#[derive(Debug, Clone)]
pub struct RootBody {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct ContactSphere {
    /// Link index the sphere belongs to.
    pub link: usize,
    /// Sphere center in the link frame.
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Expanded kinematic/dynamic model.
#[derive(Debug, Clone)]
pub struct ArticulatedModel {
    pub floating_base: bool,
    pub root: RootBody,
    pub nodes: Vec<DofNode>,
    /// Last node index per link; `None` for the root link.
    pub link_node: Vec<Option<usize>>,
    pub link_count: usize,
    pub contact_spheres: Vec<ContactSphere>,
}

impl ArticulatedModel {
    /// Generalized velocity dimension (6 + n for a floating base).
    pub fn vel_dim(&self) -> usize {
        self.nodes.len() + if self.floating_base { 6 } else { 0 }
    }

    pub fn dof(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.root.mass + self.nodes.iter().map(|n| n.mass).sum::<f64>()
    }

    /// Builds the simulation model from a scaled skeleton. Only the foot
    /// links collide with the ground unless `all_link_collision` is set.
    pub fn from_skeleton(sk: &ScaledSkeleton, all_link_collision: bool) -> Self {
        let links = &sk.links;
        let root = RootBody {
            mass: links[0].mass,
            com: links[0].com,
            inertia: links[0].inertia,
        };
        let mut nodes = Vec::with_capacity(sk.dof_count());
        let mut link_node = vec![None; links.len()];
        for joint in sk.joints() {
            let l = &links[joint.link];
            let parent_link = l.parent.expect("non-root link has a parent");
            let parent_node = link_node[parent_link];
            let dof = joint.dof();
            for (k, axis) in joint.axes.iter().enumerate() {
                let first = k == 0;
                let last = k == dof - 1;
                nodes.push(DofNode {
                    parent: if first {
                        parent_node
                    } else {
                        Some(nodes.len() - 1)
                    },
                    offset: if first { l.offset } else { Vector3::zeros() },
                    axis: *axis,
                    link: last.then_some(joint.link),
                    limits: joint.limits[k],
                    torque_limit: joint.torque_limit,
                    mass: if last { l.mass } else { 0.0 },
                    com: if last { l.com } else { Vector3::zeros() },
                    inertia: if last { l.inertia } else { Vector3::new(0.0, 0.0, 0.0) },
                });
            }
            link_node[joint.link] = Some(nodes.len() - 1);
        }
        let mut contact_spheres = Vec::new();
        for (i, l) in links.iter().enumerate() {
            let is_foot = l.name.ends_with("foot");
            if is_foot {
                // Feet collide as a four-sphere sole (heel/toe × left/right)
                // so contact can resist ankle roll; a bare capsule is a
                // knife edge about its own axis.
                let half_width = l.capsule.radius;
                for e in l.capsule.endpoints() {
                    for side in [-1.0, 1.0] {
                        contact_spheres.push(ContactSphere {
                            link: i,
                            center: e + Vector3::new(side * half_width, 0.0, 0.0),
                            radius: l.capsule.radius,
                        });
                    }
                }
            } else if all_link_collision {
                for e in l.capsule.endpoints() {
                    contact_spheres.push(ContactSphere {
                        link: i,
                        center: e,
                        radius: l.capsule.radius,
                    });
                }
            }
        }
        Self {
            floating_base: true,
            root,
            nodes,
            link_node,
            link_count: links.len(),
            contact_spheres,
        }
    }
}

/// World-frame pose and velocity of one node (or the root body).
#[derive(Debug, Clone, Copy)]
pub struct FrameMotion {
    /// Frame origin (joint position) in world coordinates.
    pub position: Vector3<f64>,
    pub rotation: Rotation3<f64>,
    /// Linear velocity of the frame origin point.
    pub linear_vel: Vector3<f64>,
    pub angular_vel: Vector3<f64>,
}

impl FrameMotion {
    pub fn at_rest(position: Vector3<f64>, rotation: Rotation3<f64>) -> Self {
        Self {
            position,
            rotation,
            linear_vel: Vector3::zeros(),
            angular_vel: Vector3::zeros(),
        }
    }
}

/// Kinematic sweep over the expanded tree: world pose, velocity, axis and
/// mass-center data per node, reused by dynamics, contacts and observers.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub root: FrameMotion,
    /// Per node: world frame motion.
    pub frames: Vec<FrameMotion>,
    /// Per node: joint axis in world coordinates.
    pub world_axis: Vec<Vector3<f64>>,
    /// Per node: world center of mass (zero-mass nodes hold the frame origin).
    pub com: Vec<Vector3<f64>>,
    /// Per node: world-frame rotational inertia about the center of mass.
    pub inertia_w: Vec<Matrix3<f64>>,
    /// World center of mass velocity per node body.
    pub com_vel: Vec<Vector3<f64>>,
}

/// Runs the position+velocity recursion over all nodes.
pub fn sweep_kinematics(
    model: &ArticulatedModel,
    root: &FrameMotion,
    q: &[f64],
    qd: &[f64],
) -> Kinematics {
    let n = model.nodes.len();
    assert_eq!(q.len(), n, "q length mismatch");
    assert_eq!(qd.len(), n, "qd length mismatch");
    let mut frames = Vec::with_capacity(n);
    let mut world_axis = Vec::with_capacity(n);
    let mut com = Vec::with_capacity(n);
    let mut inertia_w = Vec::with_capacity(n);
    let mut com_vel = Vec::with_capacity(n);

    for (i, node) in model.nodes.iter().enumerate() {
        let parent: &FrameMotion = match node.parent {
            Some(p) => &frames[p],
            None => root,
        };
        let axis_w = parent.rotation * node.axis;
        let position = parent.position + parent.rotation * node.offset;
        let rotation = parent.rotation * Rotation3::from_axis_angle(
            &nalgebra::Unit::new_unchecked(node.axis),
            q[i],
        );
        let r = position - parent.position;
        let linear_vel = parent.linear_vel + parent.angular_vel.cross(&r);
        let angular_vel = parent.angular_vel + axis_w * qd[i];

        let c = position + rotation * node.com;
        let vc = linear_vel + angular_vel.cross(&(c - position));
        let rot_m = rotation.matrix();
        let iw = rot_m * Matrix3::from_diagonal(&node.inertia) * rot_m.transpose();

        frames.push(FrameMotion {
            position,
            rotation,
            linear_vel,
            angular_vel,
        });
        world_axis.push(axis_w);
        com.push(c);
        inertia_w.push(iw);
        com_vel.push(vc);
    }
    Kinematics {
        root: *root,
        frames,
        world_axis,
        com,
        inertia_w,
        com_vel,
    }
}

/// World pose + velocity of every link of a skeleton-backed model, indexed
/// by link. Velocities are those of the link frame origin.
pub fn link_motions(model: &ArticulatedModel, kin: &Kinematics) -> Vec<FrameMotion> {
    let mut out = Vec::with_capacity(model.link_count);
    for l in 0..model.link_count {
        match model.link_node[l] {
            Some(n) => out.push(kin.frames[n]),
            None => out.push(kin.root),
        }
    }
    out
}

/// Link pose as a (position, orientation) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPose {
    pub position: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}
