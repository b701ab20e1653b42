//! Torque-driven articulated rigid-body simulation with flat-ground contact.
//!
//! The simulator advances one control step (1/36 s by default) as a number
//! of semi-implicit Euler substeps of reduced-coordinate dynamics. Joint
//! torques are clamped to their limits, viscous joint damping and gravity
//! are always applied, and ground contact is resolved at the velocity level
//! (see [`contact`]). Foot contact forces are reported as the summed contact
//! impulses on each foot link divided by the control step duration.
//!
//! Determinism: stepping is a pure function of (state, torques, config,
//! model); repeated calls produce bit-identical results.

pub mod contact;
pub mod dynamics;
pub mod model;

pub use model::{ArticulatedModel, FrameMotion, LinkPose};

use nalgebra::{DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mocap::FullBodyFrame;
use crate::skeleton::ScaledSkeleton;
use contact::ContactParams;
use model::{link_motions, sweep_kinematics, Kinematics};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("expected {expected} torques, got {got}")]
    TorqueDimension { expected: usize, got: usize },
}

/// Simulation parameters. Defaults follow the training setup: 36 Hz control
/// with 2 substeps, joint damping 0.1, ground friction 1.0, restitution 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub control_dt: f64,
    pub substeps: usize,
    /// Viscous joint damping coefficient (N·m·s/rad), integrated
    /// implicitly.
    pub joint_friction: f64,
    /// Rotor inertia added to every joint DoF (kg·m²).
    pub armature: f64,
    pub ground_friction: f64,
    pub restitution: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub contact_iterations: usize,
    /// Cap on the contact push-out velocity for deep penetrations (m/s).
    pub max_depenetration_velocity: f64,
    pub gravity: Vector3<f64>,
    /// Divergence guard on any velocity magnitude.
    pub velocity_guard: f64,
    /// Collide every link with the ground instead of just the feet.
    pub all_link_collision: bool,
    /// Enforce joint angle limits as hard stops.
    pub enforce_joint_limits: bool,
    /// Per-substep velocity limits. Velocity-product terms are integrated
    /// explicitly, so joint rates must stay well below 1/dt for stability;
    /// these match the caps GPU RL simulators apply.
    pub max_joint_velocity: f64,
    pub max_root_linear_velocity: f64,
    pub max_root_angular_velocity: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            control_dt: 1.0 / 36.0,
            substeps: 2,
            joint_friction: 0.1,
            armature: 0.01,
            ground_friction: 1.0,
            restitution: 0.0,
            contact_stiffness: 1.0e5,
            contact_damping: 3.0e3,
            contact_iterations: 8,
            max_depenetration_velocity: 0.5,
            gravity: Vector3::new(0.0, -9.81, 0.0),
            velocity_guard: 1.0e4,
            all_link_collision: false,
            enforce_joint_limits: true,
            max_joint_velocity: 30.0,
            max_root_linear_velocity: 25.0,
            max_root_angular_velocity: 15.0,
        }
    }
}

/// Full dynamic state of the simulated character, including derived link
/// motion and the most recent foot contact forces (left, right).
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterState {
    pub root_position: Vector3<f64>,
    pub root_orientation: UnitQuaternion<f64>,
    /// World velocity of the root frame origin.
    pub root_linear_vel: Vector3<f64>,
    pub root_angular_vel: Vector3<f64>,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub link_poses: Vec<LinkPose>,
    /// Per link: (linear velocity of the frame origin, angular velocity).
    pub link_velocities: Vec<(Vector3<f64>, Vector3<f64>)>,
    /// Contact force on each foot in N, world frame: [left, right].
    pub foot_forces: [Vector3<f64>; 2],
}

impl CharacterState {
    fn root_frame(&self) -> FrameMotion {
        FrameMotion {
            position: self.root_position,
            rotation: self.root_orientation.to_rotation_matrix(),
            linear_vel: self.root_linear_vel,
            angular_vel: self.root_angular_vel,
        }
    }
}

/// Owns the expanded model plus configuration; stepping is side-effect free.
pub struct Simulator {
    pub model: ArticulatedModel,
    pub config: SimConfig,
    left_foot: Option<usize>,
    right_foot: Option<usize>,
    /// Per generalized-velocity-index lock flags (welded DoFs).
    locked: Vec<bool>,
}

impl Simulator {
    pub fn new(model: ArticulatedModel, config: SimConfig) -> Self {
        let locked = vec![false; model.vel_dim()];
        Self {
            model,
            config,
            left_foot: None,
            right_foot: None,
            locked,
        }
    }

    pub fn for_skeleton(skeleton: &ScaledSkeleton, config: SimConfig) -> Self {
        let model = ArticulatedModel::from_skeleton(skeleton, config.all_link_collision);
        let left_foot = skeleton.spec.link_index("l_foot");
        let right_foot = skeleton.spec.link_index("r_foot");
        let locked = vec![false; model.vel_dim()];
        Self {
            model,
            config,
            left_foot,
            right_foot,
            locked,
        }
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    /// Welds the given joint DoFs (indices into the joint vector). Locked
    /// DoFs hold their angle with zero rate; the root stays free.
    pub fn set_locked_joints(&mut self, joint_mask: &[bool]) {
        let base = if self.model.floating_base { 6 } else { 0 };
        for (i, &m) in joint_mask.iter().enumerate() {
            self.locked[base + i] = m;
        }
    }

    pub fn lock_all_joints(&mut self) {
        let base = if self.model.floating_base { 6 } else { 0 };
        for v in self.locked.iter_mut().skip(base) {
            *v = true;
        }
    }

    /// Advances the state by one control step under the given joint torques
    /// (clamped to the per-DoF limit).
    pub fn step(&self, state: &CharacterState, torques: &[f64]) -> Result<CharacterState, SimError> {
        let n = self.model.dof();
        if torques.len() != n {
            return Err(SimError::TorqueDimension {
                expected: n,
                got: torques.len(),
            });
        }
        let cfg = &self.config;
        let dt = cfg.control_dt / cfg.substeps as f64;
        let base = if self.model.floating_base { 6 } else { 0 };
        let dim = self.model.vel_dim();

        let mut root = state.root_frame();
        let mut orientation = state.root_orientation;
        let mut q = state.q.clone();
        let mut qd = state.qd.clone();
        for i in 0..n {
            if self.locked[base + i] {
                qd[i] = 0.0;
            }
        }
        let mut foot_impulses = [Vector3::zeros(), Vector3::zeros()];

        let contact_params = ContactParams {
            stiffness: cfg.contact_stiffness,
            damping: cfg.contact_damping,
            friction: cfg.ground_friction,
            restitution: cfg.restitution,
            iterations: cfg.contact_iterations,
            max_depenetration_velocity: cfg.max_depenetration_velocity,
        };

        // Reject corrupted incoming state.
        for value in qd.iter().chain(q.iter()) {
            if !value.is_finite() || value.abs() > cfg.velocity_guard {
                return Err(SimError::NumericalDivergence(format!(
                    "state magnitude {value} exceeds guard"
                )));
            }
        }
        for k in 0..3 {
            let vals = [root.linear_vel[k], root.angular_vel[k], root.position[k]];
            for value in vals {
                if !value.is_finite() || value.abs() > cfg.velocity_guard {
                    return Err(SimError::NumericalDivergence(format!(
                        "state magnitude {value} exceeds guard"
                    )));
                }
            }
        }

        let opts = dynamics::FactorizeOpts {
            gravity: cfg.gravity,
            armature: cfg.armature,
            damping_dt: cfg.joint_friction * dt,
        };
        let mut kin = sweep_kinematics(&self.model, &root, &q, &qd);
        for _ in 0..cfg.substeps {
            let solve = dynamics::factorize(&self.model, &kin, &qd, &opts, &self.locked)
                .ok_or_else(|| SimError::NumericalDivergence("mass matrix not SPD".into()))?;

            let mut rhs = -&solve.bias;
            for (i, node) in self.model.nodes.iter().enumerate() {
                let tau = torques[i].clamp(-node.torque_limit, node.torque_limit);
                rhs[base + i] += tau - cfg.joint_friction * qd[i];
            }
            for (i, &lock) in self.locked.iter().enumerate() {
                if lock {
                    rhs[i] = 0.0;
                }
            }
            let udot = solve.chol.solve(&rhs);

            let mut u = DVector::zeros(dim);
            if self.model.floating_base {
                for k in 0..3 {
                    u[k] = root.linear_vel[k];
                    u[3 + k] = root.angular_vel[k];
                }
            }
            for i in 0..n {
                u[base + i] = qd[i];
            }
            u += udot * dt;

            let impulses = contact::resolve_ground_contacts(
                &self.model,
                &kin,
                &solve,
                &mut u,
                dt,
                &contact_params,
                &self.locked,
            );
            for imp in &impulses {
                if Some(imp.link) == self.left_foot {
                    foot_impulses[0] += imp.impulse;
                } else if Some(imp.link) == self.right_foot {
                    foot_impulses[1] += imp.impulse;
                }
            }

            // Velocity limits keep explicit velocity-product terms stable.
            if self.model.floating_base {
                for k in 0..3 {
                    u[k] = u[k].clamp(-cfg.max_root_linear_velocity, cfg.max_root_linear_velocity);
                    u[3 + k] =
                        u[3 + k].clamp(-cfg.max_root_angular_velocity, cfg.max_root_angular_velocity);
                }
            }
            for i in 0..n {
                u[base + i] = u[base + i].clamp(-cfg.max_joint_velocity, cfg.max_joint_velocity);
            }

            // Semi-implicit position update with post-impulse velocities.
            if self.model.floating_base {
                let v = Vector3::new(u[0], u[1], u[2]);
                let w = Vector3::new(u[3], u[4], u[5]);
                root.position += v * dt;
                orientation = UnitQuaternion::from_scaled_axis(w * dt) * orientation;
                orientation.renormalize();
                root.rotation = orientation.to_rotation_matrix();
                root.linear_vel = v;
                root.angular_vel = w;
            }
            for i in 0..n {
                qd[i] = u[base + i];
                q[i] += qd[i] * dt;
            }
            if cfg.enforce_joint_limits {
                for (i, node) in self.model.nodes.iter().enumerate() {
                    let (lo, hi) = node.limits;
                    if q[i] < lo {
                        q[i] = lo;
                        qd[i] = qd[i].max(0.0);
                    } else if q[i] > hi {
                        q[i] = hi;
                        qd[i] = qd[i].min(0.0);
                    }
                }
            }

            for value in u.iter() {
                if !value.is_finite() || value.abs() > cfg.velocity_guard {
                    return Err(SimError::NumericalDivergence(format!(
                        "velocity magnitude {value} exceeds guard"
                    )));
                }
            }
            kin = sweep_kinematics(&self.model, &root, &q, &qd);
        }

        Ok(self.state_from(&root, orientation, q, qd, &kin, [
            foot_impulses[0] / cfg.control_dt,
            foot_impulses[1] / cfg.control_dt,
        ]))
    }

    fn state_from(
        &self,
        root: &FrameMotion,
        orientation: UnitQuaternion<f64>,
        q: Vec<f64>,
        qd: Vec<f64>,
        kin: &Kinematics,
        foot_forces: [Vector3<f64>; 2],
    ) -> CharacterState {
        let motions = link_motions(&self.model, kin);
        let link_poses = motions
            .iter()
            .map(|m| LinkPose {
                position: m.position,
                rotation: UnitQuaternion::from_rotation_matrix(&m.rotation),
            })
            .collect();
        let link_velocities = motions.iter().map(|m| (m.linear_vel, m.angular_vel)).collect();
        CharacterState {
            root_position: root.position,
            root_orientation: orientation,
            root_linear_vel: root.linear_vel,
            root_angular_vel: root.angular_vel,
            q,
            qd,
            link_poses,
            link_velocities,
            foot_forces,
        }
    }

    /// Builds a state directly from explicit coordinates, deriving link
    /// poses and velocities through forward kinematics.
    pub fn make_state(
        &self,
        root_position: Vector3<f64>,
        root_orientation: UnitQuaternion<f64>,
        root_linear_vel: Vector3<f64>,
        root_angular_vel: Vector3<f64>,
        q: Vec<f64>,
        qd: Vec<f64>,
    ) -> CharacterState {
        let root = FrameMotion {
            position: root_position,
            rotation: root_orientation.to_rotation_matrix(),
            linear_vel: root_linear_vel,
            angular_vel: root_angular_vel,
        };
        let kin = sweep_kinematics(&self.model, &root, &q, &qd);
        self.state_from(&root, root_orientation, q, qd, &kin, [Vector3::zeros(); 2])
    }

    /// Initializes an episode from a reference frame: pose and velocities
    /// are copied exactly, contact forces are zeroed.
    pub fn reset_from_frame(&self, frame: &FullBodyFrame) -> CharacterState {
        self.make_state(
            frame.root_position,
            frame.root_orientation,
            frame.root_linear_vel,
            frame.root_angular_vel,
            frame.joint_angles.clone(),
            frame.joint_velocities.clone(),
        )
    }

    /// Total linear momentum of the model in the given state.
    pub fn linear_momentum(&self, state: &CharacterState) -> Vector3<f64> {
        let root = state.root_frame();
        let kin = sweep_kinematics(&self.model, &root, &state.q, &state.qd);
        let mut p = Vector3::zeros();
        if self.model.floating_base {
            let c = kin.root.rotation * self.model.root.com;
            p += self.model.root.mass * (kin.root.linear_vel + kin.root.angular_vel.cross(&c));
        }
        for (i, node) in self.model.nodes.iter().enumerate() {
            if node.mass > 0.0 {
                p += node.mass * kin.com_vel[i];
            }
        }
        p
    }
}

/// World poses of all links for a root pose and joint vector: a pure tree
/// traversal over the scaled skeleton.
pub fn forward_kinematics(
    skeleton: &ScaledSkeleton,
    root_position: Vector3<f64>,
    root_orientation: UnitQuaternion<f64>,
    q: &[f64],
) -> Vec<LinkPose> {
    let (poses, _) = forward_kinematics_with_velocities(
        skeleton,
        &FullBodyFrame::at_rest(root_position, root_orientation, q.to_vec()),
    );
    poses
}

/// Link poses plus (linear, angular) world velocities for a full frame.
pub fn forward_kinematics_with_velocities(
    skeleton: &ScaledSkeleton,
    frame: &FullBodyFrame,
) -> (Vec<LinkPose>, Vec<(Vector3<f64>, Vector3<f64>)>) {
    let model = ArticulatedModel::from_skeleton(skeleton, false);
    fk_on_model(&model, frame)
}

/// As [`forward_kinematics_with_velocities`] but reusing a prebuilt model.
pub fn fk_on_model(
    model: &ArticulatedModel,
    frame: &FullBodyFrame,
) -> (Vec<LinkPose>, Vec<(Vector3<f64>, Vector3<f64>)>) {
    let root = FrameMotion {
        position: frame.root_position,
        rotation: frame.root_orientation.to_rotation_matrix(),
        linear_vel: frame.root_linear_vel,
        angular_vel: frame.root_angular_vel,
    };
    let kin = sweep_kinematics(model, &root, &frame.joint_angles, &frame.joint_velocities);
    let motions = link_motions(model, &kin);
    let poses = motions
        .iter()
        .map(|m| LinkPose {
            position: m.position,
            rotation: UnitQuaternion::from_rotation_matrix(&m.rotation),
        })
        .collect();
    let vels = motions.iter().map(|m| (m.linear_vel, m.angular_vel)).collect();
    (poses, vels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{build_default_skeleton, link, scale_skeleton};
    use model::{ContactSphere, DofNode, RootBody};

    fn reference_sim(config: SimConfig) -> Simulator {
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
        Simulator::for_skeleton(&sk, config)
    }

    fn standing_state(sim: &Simulator, root_y: f64) -> CharacterState {
        sim.make_state(
            Vector3::new(0.0, root_y, 0.0),
            UnitQuaternion::identity(),
            Vector3::zeros(),
            Vector3::zeros(),
            vec![0.0; 33],
            vec![0.0; 33],
        )
    }

    #[test]
    fn free_fall_matches_analytic_gravity() {
        let sim = reference_sim(SimConfig::default());
        // High above the ground: no contact.
        let state = standing_state(&sim, 10.0);
        let next = sim.step(&state, &vec![0.0; 33]).unwrap();
        let expected = -9.81 / 36.0;
        assert!(
            (next.root_linear_vel.y - expected).abs() < 1e-9,
            "got {}, expected {expected}",
            next.root_linear_vel.y
        );
        assert!(next.root_linear_vel.x.abs() < 1e-9);
        assert!(next.foot_forces[0].norm() == 0.0);
    }

    #[test]
    fn step_is_deterministic() {
        let sim = reference_sim(SimConfig::default());
        let state = standing_state(&sim, 0.95);
        let torques: Vec<f64> = (0..33).map(|i| (i as f64 * 0.7).sin() * 20.0).collect();
        let a = sim.step(&state, &torques).unwrap();
        let b = sim.step(&state, &torques).unwrap();
        assert_eq!(a, b);
    }

    /// Statue configuration: every joint welded, so the upright pose is a
    /// static equilibrium and the contact forces must carry the full weight.
    fn statue_sim() -> Simulator {
        let mut sim = reference_sim(SimConfig::default());
        sim.lock_all_joints();
        sim
    }

    #[test]
    fn standing_supports_body_weight() {
        let sim = statue_sim();
        let mut state = standing_state(&sim, 0.95);
        let torques = vec![0.0; 33];
        // Settle for one second.
        for _ in 0..36 {
            state = sim.step(&state, &torques).unwrap();
        }
        // Average total vertical force over the next half second.
        let mut total = 0.0;
        let steps = 18;
        for _ in 0..steps {
            state = sim.step(&state, &torques).unwrap();
            total += state.foot_forces[0].y + state.foot_forces[1].y;
        }
        let mean = total / steps as f64;
        let weight = sim.model.total_mass() * 9.81;
        assert!(
            (mean - weight).abs() < 0.05 * weight,
            "mean vertical force {mean:.1} N vs weight {weight:.1} N"
        );
        let head = state.link_poses[link::HEAD].position.y;
        assert!(head > 1.3, "head dropped to {head}");
    }

    #[test]
    fn standing_penetration_stays_below_bound() {
        let sim = statue_sim();
        let mut state = standing_state(&sim, 0.95);
        for _ in 0..72 {
            state = sim.step(&state, &vec![0.0; 33]).unwrap();
        }
        for foot in [link::L_FOOT, link::R_FOOT] {
            let pose = &state.link_poses[foot];
            for sphere in sim.model.contact_spheres.iter().filter(|s| s.link == foot) {
                let y = (pose.position + pose.rotation * sphere.center).y;
                let depth = sphere.radius - y;
                assert!(depth < 0.02, "penetration {depth:.4} m");
            }
        }
    }

    #[test]
    fn contact_forces_respect_friction_cone_and_unilaterality() {
        let sim = statue_sim();
        // Small sideways push so friction engages without toppling quickly.
        let mut state = sim.make_state(
            Vector3::new(0.0, 0.952, 0.0),
            UnitQuaternion::identity(),
            Vector3::new(0.15, 0.0, -0.1),
            Vector3::zeros(),
            vec![0.0; 33],
            vec![0.0; 33],
        );
        let mut saw_friction = false;
        for _ in 0..36 {
            state = sim.step(&state, &vec![0.0; 33]).unwrap();
            for f in &state.foot_forces {
                assert!(f.y >= 0.0, "attracting normal force {}", f.y);
                let tangential = (f.x * f.x + f.z * f.z).sqrt();
                assert!(
                    tangential <= 1.0 * f.y + 1e-6,
                    "tangential {tangential} exceeds cone bound {}",
                    f.y
                );
                if tangential > 1.0 {
                    saw_friction = true;
                }
            }
        }
        assert!(saw_friction, "test never engaged friction");
        // Foot slip must have been arrested by static friction.
        let (foot_vel, _) = state.link_velocities[link::L_FOOT];
        assert!(
            (foot_vel.x * foot_vel.x + foot_vel.z * foot_vel.z).sqrt() < 0.02,
            "foot still sliding at {foot_vel:?}"
        );
    }

    #[test]
    fn ragdoll_collapse_stays_bounded() {
        // Unactuated ragdoll crumpling to the ground must never trip the
        // divergence guard and should come to rest near where it started.
        let mut config = SimConfig::default();
        config.all_link_collision = true;
        let sim = reference_sim(config);
        let mut state = standing_state(&sim, 0.95);
        for _ in 0..144 {
            state = sim.step(&state, &vec![0.0; 33]).unwrap();
        }
        assert!(state.root_position.norm() < 5.0, "drifted to {:?}", state.root_position);
        assert!(state.root_position.y > -0.5, "fell through the floor");
    }

    #[test]
    fn dropped_character_does_not_rebound() {
        let sim = statue_sim();
        let mut state = standing_state(&sim, 0.99);
        let mut rebound_height: f64 = f64::NEG_INFINITY;
        let mut touched = false;
        for _ in 0..72 {
            state = sim.step(&state, &vec![0.0; 33]).unwrap();
            let contact = state.foot_forces[0].y + state.foot_forces[1].y > 0.0;
            if contact {
                touched = true;
            } else if touched {
                // After first impact, feet must not leave the ground again.
                let foot_y = state.link_poses[link::L_FOOT].position.y;
                rebound_height = rebound_height.max(foot_y);
            }
        }
        assert!(touched);
        assert!(
            rebound_height <= 0.081,
            "foot rebounded to {rebound_height}"
        );
    }

    #[test]
    fn airborne_horizontal_momentum_is_conserved() {
        let mut config = SimConfig::default();
        config.joint_friction = 0.0;
        let sim = reference_sim(config);
        // Gentle tumble: the integrator's O(dt²) discretization noise grows
        // with velocity magnitudes; any force-accounting bug would inject
        // momentum orders of magnitude above this threshold. Joint angles
        // stay inside their limits so the hard stops never fire.
        let q: Vec<f64> = sim
            .model
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let (lo, hi) = node.limits;
                let t = 0.5 + 0.2 * ((i * 7) as f64).sin();
                lo + t * (hi - lo)
            })
            .collect();
        let qd: Vec<f64> = (0..33).map(|i| 0.01 * ((i * 3) as f64).cos()).collect();
        let state = sim.make_state(
            Vector3::new(0.0, 20.0, 0.0),
            UnitQuaternion::from_euler_angles(0.3, 0.5, -0.2),
            Vector3::new(0.05, 0.1, -0.02),
            Vector3::new(0.01, -0.008, 0.012),
            q,
            qd,
        );
        let p0 = sim.linear_momentum(&state);
        let next = sim.step(&state, &vec![0.0; 33]).unwrap();
        let p1 = sim.linear_momentum(&next);
        assert!(
            (p1.x - p0.x).abs() < 1e-6 && (p1.z - p0.z).abs() < 1e-6,
            "momentum drift {:?} -> {:?}",
            p0,
            p1
        );
    }

    #[test]
    fn passive_pendulum_conserves_energy() {
        // 1-DoF rod pendulum on a fixed base, zero damping.
        let (l, m) = (0.8, 1.5);
        let rod_inertia = m * (2.0 * l) * (2.0 * l) / 12.0;
        let model = ArticulatedModel {
            floating_base: false,
            root: RootBody {
                mass: 0.0,
                com: Vector3::zeros(),
                inertia: Vector3::zeros(),
            },
            nodes: vec![DofNode {
                parent: None,
                offset: Vector3::zeros(),
                axis: Vector3::new(1.0, 0.0, 0.0),
                link: Some(0),
                limits: (-10.0, 10.0),
                torque_limit: 1e9,
                mass: m,
                com: Vector3::new(0.0, -l, 0.0),
                inertia: Vector3::new(rod_inertia, 1e-9, rod_inertia),
            }],
            link_node: vec![Some(0)],
            link_count: 1,
            contact_spheres: vec![],
        };
        let mut config = SimConfig::default();
        config.joint_friction = 0.0;
        config.armature = 0.0;
        let sim = Simulator::new(model, config);
        let mut state = sim.make_state(
            Vector3::zeros(),
            UnitQuaternion::identity(),
            Vector3::zeros(),
            Vector3::zeros(),
            vec![0.7],
            vec![0.0],
        );
        let energy = |s: &CharacterState| {
            let theta = s.q[0];
            let omega = s.qd[0];
            // Inertia about the pivot: I_com + m l².
            let i_pivot = rod_inertia + m * l * l;
            let h = -l * theta.cos();
            0.5 * i_pivot * omega * omega + m * 9.81 * h
        };
        let e0 = energy(&state);
        let mut max_drift: f64 = 0.0;
        for _ in 0..72 {
            state = sim.step(&state, &[0.0]).unwrap();
            max_drift = max_drift.max((energy(&state) - e0).abs());
        }
        let scale = m * 9.81 * l; // characteristic energy
        assert!(
            max_drift < 0.01 * scale,
            "energy drift {max_drift} over 2 s (scale {scale})"
        );
    }

    #[test]
    fn reset_from_frame_is_exact_and_fk_consistent() {
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, 1.6).unwrap();
        let sim = Simulator::for_skeleton(&sk, SimConfig::default());
        let mut frame = FullBodyFrame::at_rest(
            Vector3::new(0.3, 0.9, -0.1),
            UnitQuaternion::from_euler_angles(0.05, 0.8, 0.0),
            (0..33).map(|i| 0.1 * (i as f64).sin()).collect(),
        );
        frame.root_linear_vel = Vector3::new(0.7, 0.0, 0.2);
        frame.joint_velocities = vec![0.25; 33];
        let state = sim.reset_from_frame(&frame);
        assert_eq!(state.q, frame.joint_angles);
        assert_eq!(state.root_linear_vel, frame.root_linear_vel);
        assert_eq!(state.foot_forces[0], Vector3::zeros());
        let (poses, _) = forward_kinematics_with_velocities(&sk, &frame);
        for (a, b) in state.link_poses.iter().zip(&poses) {
            assert!((a.position - b.position).norm() < 1e-9);
        }
    }

    #[test]
    fn root_yaw_rotates_all_links() {
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.9);
        let q = vec![0.0; 33];
        let base = forward_kinematics(&sk, Vector3::new(0.0, 0.95, 0.0), UnitQuaternion::identity(), &q);
        let turned = forward_kinematics(&sk, Vector3::new(0.0, 0.95, 0.0), yaw, &q);
        let pivot = Vector3::new(0.0, 0.95, 0.0);
        for (a, b) in base.iter().zip(&turned) {
            let expected = pivot + yaw * (a.position - pivot);
            assert!((b.position - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn bent_knee_matches_two_link_arithmetic() {
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
        let mut q = vec![0.0; 33];
        // Left knee is the 10th joint in spec order; find its DoF index.
        let mut dof = 0;
        let mut knee_dof = None;
        for j in sk.joints() {
            if j.link == link::L_SHIN {
                knee_dof = Some(dof);
            }
            dof += j.dof();
        }
        let knee_dof = knee_dof.unwrap();
        q[knee_dof] = std::f64::consts::FRAC_PI_2;
        let poses = forward_kinematics(&sk, Vector3::new(0.0, 0.95, 0.0), UnitQuaternion::identity(), &q);
        // Hip at (0.09, 0.90, 0); knee 0.43 below; ankle 0.39 from knee,
        // rotated 90 deg about +x: -y direction maps to -z.
        let hip = Vector3::new(0.09, 0.90, 0.0);
        let knee = hip + Vector3::new(0.0, -0.43, 0.0);
        let ankle = knee + Vector3::new(0.0, 0.0, -0.39);
        assert!((poses[link::L_SHIN].position - knee).norm() < 1e-12);
        assert!(
            (poses[link::L_FOOT].position - ankle).norm() < 1e-9,
            "foot at {:?}, expected {:?}",
            poses[link::L_FOOT].position,
            ankle
        );
    }
}
