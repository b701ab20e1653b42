//! Inverse dynamics and joint-space inertia for the expanded tree.
//!
//! Forward dynamics solves `M(q) u̇ = Q - b(q, u)` where `u` stacks the root
//! spatial velocity `[v_root, ω_root]` (world frame; `v_root` is the
//! velocity of the root frame origin) and the joint rates `q̇`. The bias
//! `b = ID(q, u, 0)` comes from a recursive Newton-Euler sweep in world
//! coordinates and includes gravity; `M` is assembled column-by-column from
//! unit-acceleration inverse dynamics, then factorized with Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};

use super::model::{ArticulatedModel, Kinematics};

/// Per-node spatial acceleration terms produced by the outward sweep.
struct AccelSweep {
    /// Angular acceleration per node.
    alpha: Vec<Vector3<f64>>,
    /// Linear acceleration of each node's frame origin.
    a_frame: Vec<Vector3<f64>>,
    /// Root values.
    root_alpha: Vector3<f64>,
    root_a: Vector3<f64>,
}

fn outward_accelerations(
    model: &ArticulatedModel,
    kin: &Kinematics,
    qd: &[f64],
    qdd: &[f64],
    root_acc: (Vector3<f64>, Vector3<f64>),
    with_velocity_terms: bool,
) -> AccelSweep {
    let n = model.nodes.len();
    let (root_a, root_alpha) = root_acc;
    let mut alpha = Vec::with_capacity(n);
    let mut a_frame = Vec::with_capacity(n);
    for (i, node) in model.nodes.iter().enumerate() {
        let (p_alpha, p_a, p_pos, p_w) = match node.parent {
            Some(p) => (
                alpha[p],
                a_frame[p],
                kin.frames[p].position,
                kin.frames[p].angular_vel,
            ),
            None => (root_alpha, root_a, kin.root.position, kin.root.angular_vel),
        };
        let axis_w = kin.world_axis[i];
        let r = kin.frames[i].position - p_pos;
        let mut al = p_alpha + axis_w * qdd[i];
        let mut af = p_a + p_alpha.cross(&r);
        if with_velocity_terms {
            al += p_w.cross(&axis_w) * qd[i];
            af += p_w.cross(&p_w.cross(&r));
        }
        alpha.push(al);
        a_frame.push(af);
    }
    AccelSweep {
        alpha,
        a_frame,
        root_alpha,
        root_a,
    }
}

/// Inward Newton-Euler sweep. Returns the generalized force vector
/// `[root force, root moment about root origin, joint torques…]` (root
/// entries only when floating) required to produce the sweep's
/// accelerations under the given gravity.
fn inward_forces(
    model: &ArticulatedModel,
    kin: &Kinematics,
    acc: &AccelSweep,
    gravity: Vector3<f64>,
    with_velocity_terms: bool,
) -> DVector<f64> {
    let n = model.nodes.len();
    let base = if model.floating_base { 6 } else { 0 };
    let mut out = DVector::zeros(base + n);

    // Net wrench transmitted through each node's joint, moment about the
    // node's frame origin.
    let mut force = vec![Vector3::zeros(); n];
    let mut moment = vec![Vector3::zeros(); n];

    for (i, node) in model.nodes.iter().enumerate() {
        if node.mass > 0.0 {
            let r = kin.com[i] - kin.frames[i].position;
            let w = kin.frames[i].angular_vel;
            let mut a_com = acc.a_frame[i] + acc.alpha[i].cross(&r);
            if with_velocity_terms {
                a_com += w.cross(&w.cross(&r));
            }
            let f = node.mass * (a_com - gravity);
            let mut nq = kin.inertia_w[i] * acc.alpha[i];
            if with_velocity_terms {
                nq += w.cross(&(kin.inertia_w[i] * w));
            }
            force[i] = f;
            moment[i] = nq + r.cross(&f);
        }
    }

    // Children accumulate into parents; nodes are ordered parent-first.
    let mut root_force = Vector3::zeros();
    let mut root_moment = Vector3::zeros();
    for i in (0..n).rev() {
        out[base + i] = kin.world_axis[i].dot(&moment[i]);
        match model.nodes[i].parent {
            Some(p) => {
                let r = kin.frames[i].position - kin.frames[p].position;
                let f_child = force[i];
                let m_add = moment[i] + r.cross(&f_child);
                force[p] += f_child;
                moment[p] += m_add;
            }
            None => {
                let r = kin.frames[i].position - kin.root.position;
                root_force += force[i];
                root_moment += moment[i] + r.cross(&force[i]);
            }
        }
    }

    if model.floating_base {
        // Root body's own Newton-Euler terms.
        let root = &model.root;
        let rot = kin.root.rotation.matrix();
        let iw = rot * nalgebra::Matrix3::from_diagonal(&root.inertia) * rot.transpose();
        let r = kin.root.rotation * root.com;
        let w = kin.root.angular_vel;
        let mut a_com = acc.root_a + acc.root_alpha.cross(&r);
        if with_velocity_terms {
            a_com += w.cross(&w.cross(&r));
        }
        let f = root.mass * (a_com - gravity);
        let mut nq = iw * acc.root_alpha;
        if with_velocity_terms {
            nq += w.cross(&(iw * w));
        }
        root_force += f;
        root_moment += nq + r.cross(&f);
        for k in 0..3 {
            out[k] = root_force[k];
            out[3 + k] = root_moment[k];
        }
    }
    out
}

/// Velocity-dependent and gravity bias: `ID(q, u, u̇ = 0)`.
pub fn bias_forces(
    model: &ArticulatedModel,
    kin: &Kinematics,
    qd: &[f64],
    gravity: Vector3<f64>,
) -> DVector<f64> {
    let zeros = vec![0.0; model.nodes.len()];
    let acc = outward_accelerations(
        model,
        kin,
        qd,
        &zeros,
        (Vector3::zeros(), Vector3::zeros()),
        true,
    );
    inward_forces(model, kin, &acc, gravity, true)
}

/// Joint-space inertia matrix assembled from unit-acceleration inverse
/// dynamics with zero velocities and zero gravity.
pub fn mass_matrix(model: &ArticulatedModel, kin: &Kinematics) -> DMatrix<f64> {
    let n = model.nodes.len();
    let dim = model.vel_dim();
    let base = if model.floating_base { 6 } else { 0 };
    let zeros = vec![0.0; n];
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut qdd = vec![0.0; n];
        let mut root_acc = (Vector3::zeros(), Vector3::zeros());
        if model.floating_base && j < 6 {
            if j < 3 {
                root_acc.0[j] = 1.0;
            } else {
                root_acc.1[j - 3] = 1.0;
            }
        } else {
            qdd[j - base] = 1.0;
        }
        let acc = outward_accelerations(model, kin, &zeros, &qdd, root_acc, false);
        let col = inward_forces(model, kin, &acc, Vector3::zeros(), false);
        m.set_column(j, &col);
    }
    // Symmetrize away the last bits of floating-point asymmetry.
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// Factorized dynamics for one configuration: mass matrix Cholesky plus the
/// bias vector, reused by the integrator and the contact solver.
pub struct DynamicsSolve {
    pub chol: Cholesky<f64, Dyn>,
    pub bias: DVector<f64>,
}

/// Diagonal regularization and constraint options for [`factorize`].
#[derive(Debug, Clone, Copy)]
pub struct FactorizeOpts {
    pub gravity: Vector3<f64>,
    /// Rotor inertia added to every joint DoF. Light distal links make the
    /// plain system stiff; armature keeps their rates integrable.
    pub armature: f64,
    /// `dt · d` added to the joint diagonal so viscous damping integrates
    /// implicitly (stable for any coefficient).
    pub damping_dt: f64,
}

pub fn factorize(
    model: &ArticulatedModel,
    kin: &Kinematics,
    qd: &[f64],
    opts: &FactorizeOpts,
    locked: &[bool],
) -> Option<DynamicsSolve> {
    let mut m = mass_matrix(model, kin);
    let mut bias = bias_forces(model, kin, qd, opts.gravity);
    let base = if model.floating_base { 6 } else { 0 };
    for i in 0..model.nodes.len() {
        m[(base + i, base + i)] += opts.armature + opts.damping_dt;
    }
    // Locked DoFs (always moved with zero rate) are welded: their rows and
    // columns decouple and their acceleration is pinned to zero.
    for (i, &lock) in locked.iter().enumerate() {
        if lock {
            for j in 0..m.nrows() {
                m[(i, j)] = 0.0;
                m[(j, i)] = 0.0;
            }
            m[(i, i)] = 1.0;
            bias[i] = 0.0;
        }
    }
    let chol = Cholesky::new(m)?;
    Some(DynamicsSolve { chol, bias })
}

/// Point Jacobian of a world point attached to `link`, mapping generalized
/// velocity to the point's world linear velocity. Returns a dense
/// `3 × vel_dim` matrix.
pub fn point_jacobian(
    model: &ArticulatedModel,
    kin: &Kinematics,
    link: usize,
    point: Vector3<f64>,
) -> DMatrix<f64> {
    let dim = model.vel_dim();
    let base = if model.floating_base { 6 } else { 0 };
    let mut j = DMatrix::zeros(3, dim);
    if model.floating_base {
        // v_pt = v_root + ω × (pt - root) + Σ axis_k × (pt - x_k) q̇_k.
        for k in 0..3 {
            j[(k, k)] = 1.0;
        }
        let r = point - kin.root.position;
        // ∂(ω × r)/∂ω = -skew(r)
        j[(0, 4)] = r.z;
        j[(0, 5)] = -r.y;
        j[(1, 3)] = -r.z;
        j[(1, 5)] = r.x;
        j[(2, 3)] = r.y;
        j[(2, 4)] = -r.x;
    }
    // Walk ancestors of the link's node chain.
    let mut node = model.link_node[link];
    while let Some(i) = node {
        let col = kin.world_axis[i].cross(&(point - kin.frames[i].position));
        for k in 0..3 {
            j[(k, base + i)] += col[k];
        }
        node = model.nodes[i].parent;
    }
    j
}

/// Splits a generalized velocity vector into root linear/angular parts and
/// joint rates.
pub fn split_velocity(model: &ArticulatedModel, u: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>, Vec<f64>) {
    if model.floating_base {
        (
            Vector3::new(u[0], u[1], u[2]),
            Vector3::new(u[3], u[4], u[5]),
            u.iter().skip(6).copied().collect(),
        )
    } else {
        (Vector3::zeros(), Vector3::zeros(), u.iter().copied().collect())
    }
}
