//! Tracking-quality metrics between a reconstructed trajectory and ground
//! truth, plus the report formats.
//!
//! Conventions (the alignment choices are part of this crate's contract):
//! - MPJPE: root-relative positions of the 15 non-root links, in cm. The
//!   root's own error is reported separately as RootE.
//! - MPJRE: geodesic angle of local rotations, averaged over all 16 links
//!   (the root contributes its world orientation, every other link its
//!   rotation relative to the parent), in degrees.
//! - SIP: global orientation error of upper arms and thighs, in degrees.
//! - Jitter: mean jerk magnitude from central third differences of the 16
//!   link positions, in km/s³.
//! - MHPE/MHRE: global pose error of the three synthesized devices against
//!   the sensor trace, in cm / degrees.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mocap::{DevicePose, MotionClip, SensorTrace};
use crate::skeleton::{link, ScaledSkeleton, SensorOffsets};
use crate::sim::{fk_on_model, ArticulatedModel, CharacterState};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("trajectory too short: {0} frames, need at least {1}")]
    TooShort(usize, usize),
}

/// Per-frame link poses of a full-body trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryFrame {
    pub root_position: Vector3<f64>,
    pub link_positions: Vec<Vector3<f64>>,
    /// World orientations per link.
    pub link_rotations: Vec<UnitQuaternion<f64>>,
    /// Local rotations: world root orientation plus parent-relative
    /// rotations for the other 15 links.
    pub local_rotations: Vec<UnitQuaternion<f64>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frame_rate: f64,
    pub frames: Vec<TrajectoryFrame>,
}

fn frame_from_links(
    skeleton: &ScaledSkeleton,
    root_position: Vector3<f64>,
    poses: &[crate::sim::LinkPose],
) -> TrajectoryFrame {
    let link_positions: Vec<_> = poses.iter().map(|p| p.position).collect();
    let link_rotations: Vec<_> = poses.iter().map(|p| p.rotation).collect();
    let local_rotations = skeleton
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| match l.parent {
            None => link_rotations[i],
            Some(p) => link_rotations[p].inverse() * link_rotations[i],
        })
        .collect();
    TrajectoryFrame {
        root_position,
        link_positions,
        link_rotations,
        local_rotations,
    }
}

impl Trajectory {
    pub fn from_clip(clip: &MotionClip, skeleton: &ScaledSkeleton) -> Self {
        let model = ArticulatedModel::from_skeleton(skeleton, false);
        let frames = clip
            .frames
            .iter()
            .map(|f| {
                let (poses, _) = fk_on_model(&model, f);
                frame_from_links(skeleton, f.root_position, &poses)
            })
            .collect();
        Self {
            frame_rate: clip.frame_rate,
            frames,
        }
    }

    pub fn from_states(states: &[CharacterState], skeleton: &ScaledSkeleton, frame_rate: f64) -> Self {
        let frames = states
            .iter()
            .map(|s| frame_from_links(skeleton, s.root_position, &s.link_poses))
            .collect();
        Self { frame_rate, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Device poses synthesized from the head/hand links and the sensor
    /// offsets, per frame: [head, left, right].
    pub fn device_poses(&self, offsets: &SensorOffsets) -> Vec<[DevicePose; 3]> {
        self.frames
            .iter()
            .map(|f| {
                let compose = |idx: usize, off: &crate::skeleton::SensorOffset| DevicePose {
                    position: f.link_positions[idx] + f.link_rotations[idx] * off.translation,
                    rotation: f.link_rotations[idx] * off.rotation,
                };
                [
                    compose(link::HEAD, &offsets.head),
                    compose(link::L_HAND, &offsets.left_wrist),
                    compose(link::R_HAND, &offsets.right_wrist),
                ]
            })
            .collect()
    }
}

fn check_lengths(a: &Trajectory, b: &Trajectory) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::TooShort(0, 1));
    }
    Ok(())
}

fn geodesic_deg(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b).to_degrees()
}

/// Mean per-joint rotation error in degrees over all 16 local rotations.
pub fn mpjre(sim: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    check_lengths(sim, gt)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, g) in sim.frames.iter().zip(&gt.frames) {
        for (a, b) in s.local_rotations.iter().zip(&g.local_rotations) {
            sum += geodesic_deg(a, b);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Mean per-joint position error in cm, root-relative over the 15 non-root
/// links.
pub fn mpjpe(sim: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    check_lengths(sim, gt)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, g) in sim.frames.iter().zip(&gt.frames) {
        for i in 1..s.link_positions.len() {
            let ds = s.link_positions[i] - s.root_position;
            let dg = g.link_positions[i] - g.root_position;
            sum += (ds - dg).norm();
            count += 1;
        }
    }
    Ok(sum / count as f64 * 100.0)
}

/// Global root position error in cm.
pub fn root_error(sim: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    check_lengths(sim, gt)?;
    let sum: f64 = sim
        .frames
        .iter()
        .zip(&gt.frames)
        .map(|(s, g)| (s.root_position - g.root_position).norm())
        .sum();
    Ok(sum / sim.len() as f64 * 100.0)
}

/// Mean global orientation error of upper arms and thighs in degrees.
pub fn sip_error(sim: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    check_lengths(sim, gt)?;
    const SIP_LINKS: [usize; 4] = [
        link::L_UPPER_ARM,
        link::R_UPPER_ARM,
        link::L_THIGH,
        link::R_THIGH,
    ];
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, g) in sim.frames.iter().zip(&gt.frames) {
        for &l in &SIP_LINKS {
            sum += geodesic_deg(&s.link_rotations[l], &g.link_rotations[l]);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Mean jerk magnitude in km/s³ from central third differences
/// `(p[t+2] − 2p[t+1] + 2p[t−1] − p[t−2]) · rate³ / 2`.
pub fn jitter(traj: &Trajectory) -> Result<f64, EvalError> {
    let n = traj.len();
    if n < 5 {
        return Err(EvalError::TooShort(n, 5));
    }
    let rate3 = traj.frame_rate.powi(3);
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 2..n - 2 {
        let links = traj.frames[t].link_positions.len();
        for j in 0..links {
            let jerk = (traj.frames[t + 2].link_positions[j]
                - traj.frames[t + 1].link_positions[j] * 2.0
                + traj.frames[t - 1].link_positions[j] * 2.0
                - traj.frames[t - 2].link_positions[j])
                * (rate3 / 2.0);
            sum += jerk.norm();
            count += 1;
        }
    }
    Ok(sum / count as f64 / 1000.0)
}

/// Mean headset/controller position (cm) and rotation (deg) error between
/// the trajectory's synthesized device poses and the sensor trace.
pub fn mhpe_mhre(
    traj: &Trajectory,
    offsets: &SensorOffsets,
    trace: &SensorTrace,
) -> Result<(f64, f64), EvalError> {
    if traj.len() != trace.frames.len() {
        return Err(EvalError::LengthMismatch(traj.len(), trace.frames.len()));
    }
    if traj.is_empty() {
        return Err(EvalError::TooShort(0, 1));
    }
    let device_poses = traj.device_poses(offsets);
    let mut pos_sum = 0.0;
    let mut rot_sum = 0.0;
    let mut count = 0usize;
    for (devices, frame) in device_poses.iter().zip(&trace.frames) {
        let targets = [&frame.head, &frame.left, &frame.right];
        for (d, t) in devices.iter().zip(targets) {
            pos_sum += (d.position - t.position).norm();
            rot_sum += geodesic_deg(&d.rotation, &t.rotation);
            count += 1;
        }
    }
    Ok((pos_sum / count as f64 * 100.0, rot_sum / count as f64))
}

/// Metrics for one clip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip: String,
    pub mpjre_deg: f64,
    pub mpjpe_cm: f64,
    pub root_e_cm: f64,
    pub sip_deg: f64,
    pub jitter_km_s3: f64,
    pub mhpe_cm: f64,
    pub mhre_deg: f64,
}

/// Aggregated report over a clip set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensors_mode: String,
    pub checkpoint_hash: u64,
    pub config_hash: u64,
    pub frame_rate: f64,
    pub per_clip: Vec<ClipMetrics>,
    pub mean: ClipMetrics,
}

impl MetricsReport {
    pub fn aggregate(
        sensors_mode: &str,
        checkpoint_hash: u64,
        config_hash: u64,
        frame_rate: f64,
        per_clip: Vec<ClipMetrics>,
    ) -> Self {
        let n = per_clip.len().max(1) as f64;
        let mean = ClipMetrics {
            clip: "mean".into(),
            mpjre_deg: per_clip.iter().map(|m| m.mpjre_deg).sum::<f64>() / n,
            mpjpe_cm: per_clip.iter().map(|m| m.mpjpe_cm).sum::<f64>() / n,
            root_e_cm: per_clip.iter().map(|m| m.root_e_cm).sum::<f64>() / n,
            sip_deg: per_clip.iter().map(|m| m.sip_deg).sum::<f64>() / n,
            jitter_km_s3: per_clip.iter().map(|m| m.jitter_km_s3).sum::<f64>() / n,
            mhpe_cm: per_clip.iter().map(|m| m.mhpe_cm).sum::<f64>() / n,
            mhre_deg: per_clip.iter().map(|m| m.mhre_deg).sum::<f64>() / n,
        };
        Self {
            sensors_mode: sensors_mode.to_string(),
            checkpoint_hash,
            config_hash,
            frame_rate,
            per_clip,
            mean,
        }
    }

    /// Plain-text table with one row per metric.
    pub fn to_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "Sensors: {}", self.sensors_mode);
        let mut header = format!("{:<16}", "Metric");
        for m in self.per_clip.iter().chain(std::iter::once(&self.mean)) {
            header.push_str(&format!("{:>12}", m.clip));
        }
        let _ = writeln!(out, "{header}");
        let rows: [(&str, fn(&ClipMetrics) -> f64); 7] = [
            ("MPJRE [deg]", |m| m.mpjre_deg),
            ("MPJPE [cm]", |m| m.mpjpe_cm),
            ("RootE [cm]", |m| m.root_e_cm),
            ("SIP [deg]", |m| m.sip_deg),
            ("Jitter [km/s3]", |m| m.jitter_km_s3),
            ("MHPE [cm]", |m| m.mhpe_cm),
            ("MHRE [deg]", |m| m.mhre_deg),
        ];
        for (name, get) in rows {
            let mut row = format!("{name:<16}");
            for m in self.per_clip.iter().chain(std::iter::once(&self.mean)) {
                row.push_str(&format!("{:>12.3}", get(m)));
            }
            let _ = writeln!(out, "{row}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::{synthesize_sensors, synthetic};
    use crate::skeleton::{build_default_skeleton, scale_skeleton};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> (ScaledSkeleton, Trajectory, MotionClip) {
        let spec = build_default_skeleton();
        let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
        let clip = synthetic::walk_clip(&sk, 1.5);
        let traj = Trajectory::from_clip(&clip, &sk);
        (sk, traj, clip)
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let (sk, traj, clip) = reference();
        assert_eq!(mpjre(&traj, &traj).unwrap(), 0.0);
        assert_eq!(mpjpe(&traj, &traj).unwrap(), 0.0);
        assert_eq!(root_error(&traj, &traj).unwrap(), 0.0);
        assert_eq!(sip_error(&traj, &traj).unwrap(), 0.0);
        let trace = synthesize_sensors(&clip, &sk);
        let (mhpe, mhre) = mhpe_mhre(&traj, sk.sensor_offsets(), &trace).unwrap();
        assert!(mhpe < 1e-9 && mhre < 1e-9);
    }

    #[test]
    fn uniform_offset_on_non_root_joints_gives_exact_mpjpe() {
        let (_, gt, _) = reference();
        let mut sim = gt.clone();
        for f in &mut sim.frames {
            for p in f.link_positions.iter_mut().skip(1) {
                p.x += 0.01;
            }
        }
        let e = mpjpe(&sim, &gt).unwrap();
        assert!((e - 1.0).abs() < 1e-9, "MPJPE {e}");
        // Root untouched: RootE stays zero.
        assert_eq!(root_error(&sim, &gt).unwrap(), 0.0);
    }

    #[test]
    fn single_joint_rotation_on_half_the_frames_averages_correctly() {
        let (_, gt, _) = reference();
        let mut sim = gt.clone();
        let n = sim.frames.len() & !1;
        sim.frames.truncate(n);
        let mut gt2 = gt.clone();
        gt2.frames.truncate(n);
        let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 10f64.to_radians());
        for f in sim.frames.iter_mut().take(n / 2) {
            f.local_rotations[5] = rot * f.local_rotations[5];
        }
        let e = mpjre(&sim, &gt2).unwrap();
        let expected = 10.0 / (16.0 * 2.0);
        assert!((e - expected).abs() < 1e-9, "MPJRE {e} vs {expected}");
    }

    #[test]
    fn sip_averages_over_four_links() {
        let (_, gt, _) = reference();
        let mut sim = gt.clone();
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 20f64.to_radians());
        for f in &mut sim.frames {
            f.link_rotations[link::L_THIGH] = rot * f.link_rotations[link::L_THIGH];
            f.link_rotations[link::R_THIGH] = rot * f.link_rotations[link::R_THIGH];
        }
        let e = sip_error(&sim, &gt).unwrap();
        assert!((e - 10.0).abs() < 1e-9, "SIP {e}");
    }

    #[test]
    fn sip_matches_bruteforce_quaternion_oracle_on_random_fixture() {
        let (_, gt, _) = reference();
        let mut sim = gt.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in &mut sim.frames {
            for l in [link::L_UPPER_ARM, link::R_UPPER_ARM, link::L_THIGH, link::R_THIGH] {
                let axis = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
                let angle = rng.gen::<f64>() * 0.2;
                if let Some(unit) = nalgebra::Unit::try_new(axis, 1e-9) {
                    f.link_rotations[l] = UnitQuaternion::from_axis_angle(&unit, angle) * f.link_rotations[l];
                }
            }
        }
        // Independent per-frame oracle.
        let mut sum = 0.0;
        let mut count = 0;
        for (s, g) in sim.frames.iter().zip(&gt.frames) {
            for l in [link::L_UPPER_ARM, link::R_UPPER_ARM, link::L_THIGH, link::R_THIGH] {
                let rel = s.link_rotations[l].inverse() * g.link_rotations[l];
                sum += rel.angle().to_degrees();
                count += 1;
            }
        }
        let oracle = sum / count as f64;
        let got = sip_error(&sim, &gt).unwrap();
        assert!((got - oracle).abs() < 1e-9);
    }

    fn synthetic_position_trajectory(
        rate: f64,
        n: usize,
        pos: impl Fn(f64) -> Vector3<f64>,
    ) -> Trajectory {
        let frames = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let p = pos(t);
                TrajectoryFrame {
                    root_position: p,
                    link_positions: vec![p; 16],
                    link_rotations: vec![UnitQuaternion::identity(); 16],
                    local_rotations: vec![UnitQuaternion::identity(); 16],
                }
            })
            .collect();
        Trajectory {
            frame_rate: rate,
            frames,
        }
    }

    #[test]
    fn jitter_vanishes_for_linear_and_quadratic_motion() {
        let lin = synthetic_position_trajectory(36.0, 30, |t| Vector3::new(2.0 * t, 1.0, -t));
        assert!(jitter(&lin).unwrap() < 1e-12);
        let quad = synthetic_position_trajectory(36.0, 30, |t| Vector3::new(0.0, 3.0 * t * t, 0.0));
        assert!(jitter(&quad).unwrap() < 1e-9);
    }

    #[test]
    fn cubic_trajectory_has_analytic_jerk() {
        let cubic = synthetic_position_trajectory(36.0, 40, |t| Vector3::new(t * t * t, 0.0, 0.0));
        let j = jitter(&cubic).unwrap();
        assert!((j - 0.006).abs() < 1e-9, "jitter {j}");
    }

    #[test]
    fn jitter_is_invariant_to_constant_velocity_offset() {
        let (_, traj, _) = reference();
        let base = jitter(&traj).unwrap();
        let mut shifted = traj.clone();
        for (i, f) in shifted.frames.iter_mut().enumerate() {
            let d = Vector3::new(0.7, 0.0, -0.3) * (i as f64 / 36.0);
            f.root_position += d;
            for p in &mut f.link_positions {
                *p += d;
            }
        }
        let moved = jitter(&shifted).unwrap();
        assert!((base - moved).abs() < 1e-9, "{base} vs {moved}");
    }

    #[test]
    fn head_offset_spreads_over_three_devices() {
        let (sk, traj, clip) = reference();
        let trace = synthesize_sensors(&clip, &sk);
        let mut offsets = sk.sensor_offsets().clone();
        offsets.head.translation.y += 0.05;
        let (mhpe, _) = mhpe_mhre(&traj, &offsets, &trace).unwrap();
        assert!((mhpe - 5.0 / 3.0).abs() < 1e-9, "MHPE {mhpe}");
    }

    #[test]
    fn mixed_device_errors_match_bruteforce_oracle() {
        let (sk, traj, clip) = reference();
        let mut trace = synthesize_sensors(&clip, &sk);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for f in &mut trace.frames {
            f.head.position += Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * 0.02;
            f.left.rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), rng.gen::<f64>() * 0.1)
                * f.left.rotation;
        }
        let (mhpe, mhre) = mhpe_mhre(&traj, sk.sensor_offsets(), &trace).unwrap();
        // Brute-force loop over frames and devices.
        let devices = traj.device_poses(sk.sensor_offsets());
        let mut ps = 0.0;
        let mut rs = 0.0;
        let mut count = 0;
        for (d, f) in devices.iter().zip(&trace.frames) {
            for (a, b) in d.iter().zip([&f.head, &f.left, &f.right]) {
                ps += (a.position - b.position).norm();
                rs += a.rotation.angle_to(&b.rotation).to_degrees();
                count += 1;
            }
        }
        assert!((mhpe - ps / count as f64 * 100.0).abs() < 1e-9);
        assert!((mhre - rs / count as f64).abs() < 1e-9);
    }

    #[test]
    fn root_relative_metrics_are_invariant_under_global_rigid_transform() {
        let (_, gt, _) = reference();
        let mut sim = gt.clone();
        // Perturb sim a little so errors are nonzero.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for f in &mut sim.frames {
            for p in f.link_positions.iter_mut() {
                p.x += 0.01 * rng.gen::<f64>();
            }
        }
        let before = (mpjpe(&sim, &gt).unwrap(), mpjre(&sim, &gt).unwrap());
        for _ in 0..5 {
            let g = UnitQuaternion::from_euler_angles(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() * 6.0,
                rng.gen::<f64>() - 0.5,
            );
            let t = Vector3::new(rng.gen::<f64>() * 10.0, rng.gen::<f64>(), rng.gen::<f64>() * 10.0);
            let transform = |traj: &Trajectory| {
                let mut out = traj.clone();
                for f in &mut out.frames {
                    f.root_position = g * f.root_position + t;
                    for p in &mut f.link_positions {
                        *p = g * *p + t;
                    }
                    for r in &mut f.link_rotations {
                        *r = g * *r;
                    }
                    // Local rotations: the root entry is in world frame.
                    f.local_rotations[0] = g * f.local_rotations[0];
                }
                out
            };
            let (sim_t, gt_t) = (transform(&sim), transform(&gt));
            let after = (mpjpe(&sim_t, &gt_t).unwrap(), mpjre(&sim_t, &gt_t).unwrap());
            assert!((before.0 - after.0).abs() < 1e-9);
            assert!((before.1 - after.1).abs() < 1e-9);
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let (_, traj, _) = reference();
        let mut short = traj.clone();
        short.frames.pop();
        assert!(matches!(
            mpjpe(&short, &traj),
            Err(EvalError::LengthMismatch(..))
        ));
    }

    #[test]
    fn report_table_lists_all_metric_rows() {
        let metrics = ClipMetrics {
            clip: "walk".into(),
            mpjre_deg: 1.0,
            mpjpe_cm: 2.0,
            root_e_cm: 0.5,
            sip_deg: 3.0,
            jitter_km_s3: 0.1,
            mhpe_cm: 1.5,
            mhre_deg: 4.0,
        };
        let report = MetricsReport::aggregate("H+2C", 1, 2, 36.0, vec![metrics]);
        let table = report.to_table();
        for row in ["MPJRE", "MPJPE", "RootE", "SIP", "Jitter", "MHPE", "MHRE"] {
            assert!(table.contains(row), "missing row {row}");
        }
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.mean.mpjpe_cm, 2.0);
    }
}
