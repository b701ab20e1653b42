//! Flat-ground contact resolution.
//!
//! Contact points are the end-cap sphere centers of colliding capsules
//! tested against the plane y = 0. Each active contact applies a
//! spring-damper penalty force, integrated implicitly at the velocity level
//! so stiffness and damping can be set without a stability limit on the
//! substep. Friction is velocity-clamped Coulomb: the tangential impulse
//! drives slip velocity to zero, clamped to the friction disc μ·λ_n.
//! Normal impulses never pull (λ_n ≥ 0) and there is no restitution term.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};

use super::dynamics::{point_jacobian, DynamicsSolve};
use super::model::{ArticulatedModel, Kinematics};

#[derive(Debug, Clone, Copy)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    /// Restitution coefficient; 0 gives fully inelastic ground contact.
    pub restitution: f64,
    /// Number of Gauss-Seidel sweeps over the active contacts.
    pub iterations: usize,
    /// Cap on the separating velocity the spring term may produce, so deep
    /// penetrations recover gradually instead of launching the body.
    pub max_depenetration_velocity: f64,
}

/// One resolved contact: accumulated impulse in world coordinates.
#[derive(Debug, Clone)]
pub struct ContactImpulse {
    pub link: usize,
    pub point: Vector3<f64>,
    pub impulse: Vector3<f64>,
}

struct ActiveContact {
    link: usize,
    point: Vector3<f64>,
    depth: f64,
    /// Normal velocity at contact activation (for restitution).
    approach: f64,
    /// M⁻¹ Jᵀ, vel_dim × 3.
    minv_jt: DMatrix<f64>,
    /// J M⁻¹ Jᵀ, 3 × 3.
    w: nalgebra::Matrix3<f64>,
    jac: DMatrix<f64>,
    /// Accumulated impulse (x, z tangential; y normal).
    lambda: Vector3<f64>,
}

/// Detects active contacts and resolves impulses against the post-dynamics
/// velocity `u`. Modifies `u` in place and returns the per-contact impulses.
pub fn resolve_ground_contacts(
    model: &ArticulatedModel,
    kin: &Kinematics,
    solve: &DynamicsSolve,
    u: &mut DVector<f64>,
    dt: f64,
    params: &ContactParams,
    locked: &[bool],
) -> Vec<ContactImpulse> {
    let mut contacts = Vec::new();
    for sphere in &model.contact_spheres {
        let frame = match model.link_node[sphere.link] {
            Some(n) => &kin.frames[n],
            None => &kin.root,
        };
        let center = frame.position + frame.rotation * sphere.center;
        let depth = sphere.radius - center.y;
        if depth <= 0.0 {
            continue;
        }
        let mut jac = point_jacobian(model, kin, sphere.link, center);
        for (i, &lock) in locked.iter().enumerate() {
            if lock {
                for r in 0..3 {
                    jac[(r, i)] = 0.0;
                }
            }
        }
        let minv_jt = solve.chol.solve(&jac.transpose());
        let w_full = &jac * &minv_jt;
        let mut w = nalgebra::Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                w[(r, c)] = w_full[(r, c)];
            }
        }
        let approach = (&jac * &*u)[1];
        contacts.push(ActiveContact {
            link: sphere.link,
            point: center,
            depth,
            approach,
            minv_jt,
            w,
            jac,
            lambda: Vector3::zeros(),
        });
    }
    if contacts.is_empty() {
        return Vec::new();
    }

    let k = params.stiffness;
    let d = params.damping;
    // Implicit spring-damper: force = K·δ − (K·dt + D)·v_n at the end of the
    // step, solved per contact as an impulse with accumulation + projection.
    let kd = k * dt + d;
    for _ in 0..params.iterations {
        for c in contacts.iter_mut() {
            // Current point velocity.
            let v = &c.jac * &*u;
            let v_n = v[1];
            // Restitution target: bounce back at e times the approach speed.
            let bounce = if params.restitution > 0.0 && c.approach < -1e-3 {
                -params.restitution * c.approach
            } else {
                0.0
            };
            let rhs = dt * (k * c.depth - kd * (v_n - bounce)) - c.lambda.y;
            let denom = 1.0 + dt * kd * c.w[(1, 1)];
            let mut delta_n = rhs / denom;
            // Depenetration cap: never push the point out faster than the
            // configured separating velocity.
            let w_nn = c.w[(1, 1)].max(1e-12);
            let v_cap = params.max_depenetration_velocity;
            if v_n + w_nn * delta_n > v_cap {
                delta_n = (v_cap - v_n) / w_nn;
            }
            let new_n = (c.lambda.y + delta_n).max(0.0);
            let applied_n = new_n - c.lambda.y;
            c.lambda.y = new_n;
            if applied_n != 0.0 {
                for i in 0..u.len() {
                    u[i] += c.minv_jt[(i, 1)] * applied_n;
                }
            }

            // Friction: drive tangential velocity to zero, clamp to disc.
            let v = &c.jac * &*u;
            let vt = Vector2::new(v[0], v[2]);
            let wt = Matrix2::new(c.w[(0, 0)], c.w[(0, 2)], c.w[(2, 0)], c.w[(2, 2)]);
            let delta_t = match wt.try_inverse() {
                Some(inv) => inv * (-vt),
                None => Vector2::zeros(),
            };
            let mut new_t = Vector2::new(c.lambda.x + delta_t.x, c.lambda.z + delta_t.y);
            let max_t = params.friction * c.lambda.y;
            let norm = new_t.norm();
            if norm > max_t {
                new_t *= if norm > 0.0 { max_t / norm } else { 0.0 };
            }
            let applied_t = new_t - Vector2::new(c.lambda.x, c.lambda.z);
            c.lambda.x = new_t.x;
            c.lambda.z = new_t.y;
            if applied_t != Vector2::zeros() {
                for i in 0..u.len() {
                    u[i] += c.minv_jt[(i, 0)] * applied_t.x + c.minv_jt[(i, 2)] * applied_t.y;
                }
            }
        }
    }

    contacts
        .into_iter()
        .map(|c| ContactImpulse {
            link: c.link,
            point: c.point,
            impulse: c.lambda,
        })
        .collect()
}
