//! End-to-end orchestration: clip loading, the training loop, evaluation
//! rollouts and trace-driven inference. The CLI is a thin wrapper over
//! these functions.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{fnv1a64, ExperimentConfig};
use crate::eval::{self, ClipMetrics, MetricsReport, Trajectory};
use crate::mocap::{
    synthetic, DevicePose, FullBodyFrame, MotionClip, SensorTrace,
};
use crate::nn::checkpoint::{self, Checkpoint};
use crate::nn::{Adam, GaussianPolicy, Mlp, MlpSpec};
use crate::obs::{self, HeadingFrame, OBS_DIM, OBS_LAYOUT_VERSION};
use crate::rl::{
    collect_rollout, ppo_update, PreparedClip, TerminationConfig, TrackingEnv,
};
use crate::skeleton::{
    build_default_skeleton, link, scale_skeleton, ScaledSkeleton, SkeletonSpec,
    HEAD_JOINT_HEIGHT_RATIO, HEIGHT_BOUNDS, TORQUE_LIMIT,
};
use crate::sim::{CharacterState, Simulator};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric: {0}")]
    Numeric(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Numeric(_) => 3,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

/// Loads the skeleton from a JSON file or builds the canonical default.
pub fn load_skeleton(path: Option<&Path>) -> Result<SkeletonSpec, PipelineError> {
    match path {
        None => Ok(build_default_skeleton()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(data_err)?;
            let spec: SkeletonSpec = serde_json::from_str(&text).map_err(data_err)?;
            spec.validate().map_err(data_err)?;
            Ok(spec)
        }
    }
}

/// Resolves a clip reference (`builtin:<name>` or a file path).
pub fn load_clip(reference: &str, spec: &SkeletonSpec) -> Result<MotionClip, PipelineError> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        let sk = scale_skeleton(spec, spec.reference_height).map_err(data_err)?;
        synthetic::builtin_clip(name, &sk)
            .ok_or_else(|| PipelineError::Data(format!("unknown builtin clip '{name}'")))
    } else {
        let clip = MotionClip::load(Path::new(reference)).map_err(data_err)?;
        Ok(clip)
    }
}

/// Environments grouped by subject height: every environment's skeleton
/// matches the height of the clips it samples from.
type ClipGroups = Vec<(ScaledSkeleton, Arc<Vec<PreparedClip>>)>;

fn build_envs(
    spec: &SkeletonSpec,
    cfg: &ExperimentConfig,
    clips: &[MotionClip],
) -> Result<(Vec<TrackingEnv>, ClipGroups), PipelineError> {
    // Group clips by height, quantized to a millimeter.
    let mut groups: Vec<(i64, Vec<MotionClip>)> = Vec::new();
    for clip in clips {
        let key = (clip.subject_height * 1000.0).round() as i64;
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push(clip.clone()),
            None => groups.push((key, vec![clip.clone()])),
        }
    }
    let mut prepared: Vec<(ScaledSkeleton, Arc<Vec<PreparedClip>>)> = Vec::new();
    for (_, list) in &groups {
        let sk = scale_skeleton(spec, list[0].subject_height).map_err(data_err)?;
        let prep: Vec<PreparedClip> = list
            .iter()
            .map(|c| PreparedClip::prepare(c.clone(), &sk))
            .collect();
        prepared.push((sk, Arc::new(prep)));
    }
    let mut envs = Vec::with_capacity(cfg.ppo.n_envs);
    for i in 0..cfg.ppo.n_envs {
        let (sk, clips) = &prepared[i % prepared.len()];
        let rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1),
        );
        let mut env = TrackingEnv::new(
            sk,
            cfg.sim.clone(),
            clips.clone(),
            cfg.reward.clone(),
            cfg.termination.clone(),
            rng,
        );
        env.headset_only = cfg.headset_only;
        envs.push(env);
    }
    Ok((envs, prepared))
}

/// Mean step reward of a deterministic (mean-action) rollout over one clip.
/// Early termination scores the remaining steps as zero.
fn deterministic_clip_reward(
    policy: &GaussianPolicy,
    sk: &ScaledSkeleton,
    prepared: Arc<Vec<PreparedClip>>,
    clip_idx: usize,
    cfg: &ExperimentConfig,
) -> f64 {
    let mut env = TrackingEnv::new(
        sk,
        cfg.sim.clone(),
        prepared.clone(),
        cfg.reward.clone(),
        cfg.termination.clone(),
        ChaCha8Rng::seed_from_u64(0),
    );
    env.headset_only = cfg.headset_only;
    env.reset_to(clip_idx, 0);
    let steps = prepared[clip_idx].clip.len() - 1;
    let mut total = 0.0;
    for _ in 0..steps {
        let obs = env.observe();
        let Ok((action, _)) = policy.mean_action(&obs) else {
            break;
        };
        let (r, outcome) = env.step(&action);
        total += r;
        if outcome != crate::rl::StepOutcome::Running {
            break;
        }
    }
    total / steps as f64
}

/// Deterministic mean imitation reward over every training clip.
pub fn deterministic_eval_reward(
    policy: &GaussianPolicy,
    groups: &ClipGroups,
    cfg: &ExperimentConfig,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (sk, prepared) in groups {
        for clip_idx in 0..prepared.len() {
            sum += deterministic_clip_reward(policy, sk, prepared.clone(), clip_idx, cfg);
            count += 1;
        }
    }
    sum / count.max(1) as f64
}

fn fresh_networks(cfg: &ExperimentConfig) -> (GaussianPolicy, Mlp, Adam, Adam) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D012_ABCD);
    let policy_spec = MlpSpec {
        input: OBS_DIM,
        hidden: cfg.policy_hidden.clone(),
        output: crate::skeleton::DOF_COUNT,
        output_tanh: true,
    };
    let value_spec = MlpSpec {
        input: OBS_DIM,
        hidden: cfg.value_hidden.clone(),
        output: 1,
        output_tanh: false,
    };
    let policy = GaussianPolicy::new(
        Mlp::init(policy_spec.clone(), cfg.init_gain, cfg.final_gain, &mut rng),
        cfg.sigma,
    );
    let value = Mlp::init(value_spec.clone(), cfg.init_gain, 1.0, &mut rng);
    let adam_policy = Adam::new(policy_spec.param_count(), cfg.ppo.learning_rate);
    let adam_value = Adam::new(value_spec.param_count(), cfg.ppo.learning_rate);
    (policy, value, adam_policy, adam_value)
}

/// One deterministic row of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct TrainRow {
    pub iteration: u64,
    pub steps: u64,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub mean_kl: f64,
    pub learning_rate: f64,
    pub initial_ratio_dev: f64,
    pub episode_ends: usize,
    /// Deterministic mean imitation reward over the training clips
    /// (mean actions, no exploration noise); present on eval iterations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_reward: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub iterations: u64,
    pub final_mean_reward: f64,
    pub first_mean_reward: f64,
    pub first_eval_reward: f64,
    pub final_eval_reward: f64,
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Runs the PPO training loop. Artifacts land in `cfg.out_dir`: a copy of
/// the config, a JSON-lines training log (deterministic bytes for a given
/// config and seed) and periodic checkpoints. Timing information goes to
/// stderr only.
pub fn train(
    cfg: &ExperimentConfig,
    resume: Option<&Path>,
    mut on_row: impl FnMut(&TrainRow),
) -> Result<TrainSummary, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
    let config_hash = cfg.hash();
    let spec = load_skeleton(cfg.skeleton.as_deref())?;
    let mut clips = Vec::new();
    for r in &cfg.clips {
        clips.push(load_clip(r, &spec)?);
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(data_err)?;
    std::fs::write(
        cfg.out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg).map_err(data_err)?,
    )
    .map_err(data_err)?;

    let (mut envs, groups) = build_envs(&spec, cfg, &clips)?;
    let (mut policy, mut value, mut adam_policy, mut adam_value) = fresh_networks(cfg);
    let mut start_iteration = 0u64;
    if let Some(ckpt_path) = resume {
        let ck = checkpoint::load(ckpt_path).map_err(data_err)?;
        checkpoint::check_layout(&ck, OBS_LAYOUT_VERSION).map_err(data_err)?;
        policy = ck.policy;
        value = ck.value;
        adam_policy = ck.adam_policy;
        adam_value = ck.adam_value;
        start_iteration = ck.iteration;
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0BAD_5EED_0000_0001);
    let log_path = cfg.out_dir.join("train_log.jsonl");
    let mut log = String::new();
    log.push_str(&format!(
        "{}\n",
        serde_json::json!({
            "config_hash": config_hash,
            "obs_layout_version": OBS_LAYOUT_VERSION,
            "start_iteration": start_iteration,
        })
    ));

    let mut first_mean_reward = f64::NAN;
    let mut final_mean_reward = 0.0;
    let mut first_eval_reward = f64::NAN;
    let mut final_eval_reward = 0.0;
    let started = std::time::Instant::now();
    let mut iteration = start_iteration;
    let save_ckpt = |policy: &GaussianPolicy,
                     value: &Mlp,
                     adam_policy: &Adam,
                     adam_value: &Adam,
                     iteration: u64,
                     path: &Path|
     -> Result<(), PipelineError> {
        let ck = Checkpoint {
            obs_layout_version: OBS_LAYOUT_VERSION,
            config_hash,
            iteration,
            policy: policy.clone(),
            value: value.clone(),
            adam_policy: adam_policy.clone(),
            adam_value: adam_value.clone(),
        };
        checkpoint::save(&ck, path).map_err(data_err)
    };

    for it in 0..cfg.iterations as u64 {
        iteration = start_iteration + it + 1;
        if let Some(sigma_final) = cfg.sigma_final {
            let t = it as f64 / (cfg.iterations as f64 - 1.0).max(1.0);
            policy.sigma = cfg.sigma + (sigma_final - cfg.sigma) * t;
        }
        let batch = collect_rollout(&mut envs, &policy, &value, &cfg.ppo);
        let stats = ppo_update(
            &mut policy,
            &mut value,
            &mut adam_policy,
            &mut adam_value,
            &batch,
            &cfg.ppo,
            &mut shuffle_rng,
        )
        .map_err(|e| PipelineError::Numeric(e.to_string()))?;
        let eval_due = cfg.eval_interval > 0
            && (it == 0 || iteration.is_multiple_of(cfg.eval_interval as u64) || it + 1 == cfg.iterations as u64);
        let eval_reward =
            eval_due.then(|| deterministic_eval_reward(&policy, &groups, cfg));
        let row = TrainRow {
            iteration,
            steps: iteration * cfg.ppo.batch_size() as u64,
            mean_reward: stats.mean_reward,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_fraction: stats.clip_fraction,
            mean_ratio: stats.mean_ratio,
            mean_kl: stats.mean_kl,
            learning_rate: stats.learning_rate,
            initial_ratio_dev: stats.initial_ratio_dev,
            episode_ends: stats.episode_ends,
            eval_reward,
        };
        if first_mean_reward.is_nan() {
            first_mean_reward = row.mean_reward;
        }
        final_mean_reward = row.mean_reward;
        if let Some(e) = eval_reward {
            if first_eval_reward.is_nan() {
                first_eval_reward = e;
            }
            final_eval_reward = e;
        }
        log.push_str(&serde_json::to_string(&row).map_err(data_err)?);
        log.push('\n');
        if iteration.is_multiple_of(10) || it + 1 == cfg.iterations as u64 {
            let sps = (it + 1) as f64 * cfg.ppo.batch_size() as f64
                / started.elapsed().as_secs_f64();
            eprintln!(
                "iter {iteration}: reward {:.3} policy_loss {:+.4} value_loss {:.4} clip {:.2} ({sps:.0} steps/s)",
                row.mean_reward, row.policy_loss, row.value_loss, row.clip_fraction
            );
        }
        on_row(&row);
        if iteration.is_multiple_of(cfg.checkpoint_interval as u64) {
            let path = cfg.out_dir.join(format!("ckpt_{iteration:06}.bin"));
            save_ckpt(&policy, &value, &adam_policy, &adam_value, iteration, &path)?;
        }
    }
    let final_path = cfg.out_dir.join("ckpt_final.bin");
    save_ckpt(&policy, &value, &adam_policy, &adam_value, iteration, &final_path)?;
    std::fs::write(&log_path, log).map_err(data_err)?;
    Ok(TrainSummary {
        iterations: iteration,
        final_mean_reward,
        first_mean_reward,
        first_eval_reward,
        final_eval_reward,
        checkpoint: final_path,
        log_path,
    })
}

/// Deterministic policy rollout along a clip's synthesized sensors; returns
/// the visited states (same count as clip frames).
pub fn track_clip(
    policy: &GaussianPolicy,
    skeleton: &ScaledSkeleton,
    prepared: &PreparedClip,
    headset_only: bool,
) -> Result<Vec<CharacterState>, PipelineError> {
    let sim = Simulator::for_skeleton(skeleton, crate::sim::SimConfig::default());
    let mut state = sim.reset_from_frame(&prepared.clip.frames[0]);
    let mut heading = obs::compute_heading_frame(&state).unwrap_or(HeadingFrame::identity());
    let mut states = Vec::with_capacity(prepared.clip.len());
    states.push(state.clone());
    let last = prepared.trace.frames.len() - 1;
    for i in 0..prepared.clip.len() - 1 {
        if let Ok(h) = obs::compute_heading_frame(&state) {
            heading = h;
        }
        let future: Vec<_> = (1..=obs::FUTURE_FRAMES)
            .map(|k| {
                let mut f = prepared.trace.frames[(i + k).min(last)];
                if headset_only {
                    f.left = DevicePose::identity();
                    f.right = DevicePose::identity();
                }
                f
            })
            .collect();
        let raw = obs::build_observation_with_heading(&state, &future, skeleton.user_height, &heading)
            .map_err(|e| PipelineError::Numeric(e.to_string()))?;
        let obs_vec = obs::normalize_observation(&raw);
        let (action, _) = policy.mean_action(&obs_vec).map_err(data_err)?;
        let torques: Vec<f64> = action.iter().map(|a| a * TORQUE_LIMIT).collect();
        state = sim
            .step(&state, &torques)
            .map_err(|e| PipelineError::Numeric(e.to_string()))?;
        states.push(state.clone());
    }
    Ok(states)
}

/// Evaluates a checkpoint on a clip set: deterministic rollouts over each
/// clip's synthesized sensors, scored with the full metric set. With
/// `oracle` the ground truth itself is scored (self-consistency harness:
/// all metrics must be zero).
pub fn evaluate(
    checkpoint_path: &Path,
    clip_refs: &[String],
    skeleton_path: Option<&Path>,
    headset_only: bool,
    oracle: bool,
) -> Result<MetricsReport, PipelineError> {
    evaluate_with_dump(checkpoint_path, clip_refs, skeleton_path, headset_only, oracle, None)
}

/// As [`evaluate`]; when `dump_dir` is set, each reconstructed trajectory
/// is also written there in the canonical clip format.
pub fn evaluate_with_dump(
    checkpoint_path: &Path,
    clip_refs: &[String],
    skeleton_path: Option<&Path>,
    headset_only: bool,
    oracle: bool,
    dump_dir: Option<&Path>,
) -> Result<MetricsReport, PipelineError> {
    if clip_refs.is_empty() {
        return Err(PipelineError::Usage("empty clip list".into()));
    }
    let ck = checkpoint::load(checkpoint_path).map_err(data_err)?;
    checkpoint::check_layout(&ck, OBS_LAYOUT_VERSION).map_err(data_err)?;
    let ck_hash = fnv1a64(&checkpoint::encode(&ck));
    let spec = load_skeleton(skeleton_path)?;
    let mut per_clip = Vec::new();
    for reference in clip_refs {
        let clip = load_clip(reference, &spec)?;
        let sk = scale_skeleton(&spec, clip.subject_height).map_err(data_err)?;
        let prepared = PreparedClip::prepare(clip, &sk);
        let gt = Trajectory::from_clip(&prepared.clip, &sk);
        let sim_traj = if oracle {
            gt.clone()
        } else {
            let states = track_clip(&ck.policy, &sk, &prepared, headset_only)?;
            if let Some(dir) = dump_dir {
                std::fs::create_dir_all(dir).map_err(data_err)?;
                let mut frames = Vec::with_capacity(states.len());
                for s in &states {
                    frames.push(FullBodyFrame {
                        root_position: s.root_position,
                        root_orientation: s.root_orientation,
                        root_linear_vel: s.root_linear_vel,
                        root_angular_vel: s.root_angular_vel,
                        joint_angles: s.q.clone(),
                        joint_velocities: s.qd.clone(),
                    });
                }
                let dump = MotionClip {
                    schema_version: crate::mocap::CLIP_SCHEMA_VERSION,
                    name: format!("{}.tracked", prepared.clip.name),
                    frame_rate: prepared.clip.frame_rate,
                    subject_height: prepared.clip.subject_height,
                    producer_hash: ck.config_hash,
                    frames,
                };
                dump.save(&dir.join(format!("{}.tracked.clip.json", prepared.clip.name)))
                    .map_err(data_err)?;
            }
            Trajectory::from_states(&states, &sk, prepared.clip.frame_rate)
        };
        let (mhpe, mhre) =
            eval::mhpe_mhre(&sim_traj, sk.sensor_offsets(), &prepared.trace).map_err(data_err)?;
        per_clip.push(ClipMetrics {
            clip: prepared.clip.name.clone(),
            mpjre_deg: eval::mpjre(&sim_traj, &gt).map_err(data_err)?,
            mpjpe_cm: eval::mpjpe(&sim_traj, &gt).map_err(data_err)?,
            root_e_cm: eval::root_error(&sim_traj, &gt).map_err(data_err)?,
            sip_deg: eval::sip_error(&sim_traj, &gt).map_err(data_err)?,
            jitter_km_s3: eval::jitter(&sim_traj).map_err(data_err)?,
            mhpe_cm: mhpe,
            mhre_deg: mhre,
        });
    }
    let mode = if headset_only { "H" } else { "H+2C" };
    Ok(MetricsReport::aggregate(
        mode,
        ck_hash,
        ck.config_hash,
        crate::mocap::CLIP_FRAME_RATE,
        per_clip,
    ))
}

/// Estimates user height from a standing headset pose: the headset sits a
/// fixed offset above the head joint, whose standing height is a fixed
/// fraction of body height.
pub fn estimate_height_from_hmd(hmd_y: f64, head_offset_y: f64) -> f64 {
    let h = (hmd_y - head_offset_y) / HEAD_JOINT_HEIGHT_RATIO;
    h.clamp(HEIGHT_BOUNDS.0, HEIGHT_BOUNDS.1)
}

/// Drives the policy from a recorded sensor trace alone (no ground truth)
/// and returns the reconstructed motion as a canonical clip. Traces at
/// twice the control rate are decimated to 36 fps first.
pub fn rollout_from_trace(
    checkpoint_path: &Path,
    trace: &SensorTrace,
    skeleton_path: Option<&Path>,
    headset_only: bool,
    name: &str,
) -> Result<MotionClip, PipelineError> {
    let ck = checkpoint::load(checkpoint_path).map_err(data_err)?;
    checkpoint::check_layout(&ck, OBS_LAYOUT_VERSION).map_err(data_err)?;
    let spec = load_skeleton(skeleton_path)?;

    let mut trace = trace.clone();
    let target = crate::mocap::CLIP_FRAME_RATE;
    if (trace.frame_rate - 2.0 * target).abs() < 1.0 {
        trace.frames = trace.frames.iter().step_by(2).copied().collect();
        trace.frame_rate /= 2.0;
    }
    if (trace.frame_rate - target).abs() > 1.0 {
        return Err(PipelineError::Data(format!(
            "trace rate {} not supported (expected {target} or {})",
            trace.frame_rate,
            2.0 * target
        )));
    }
    if trace.frames.len() < 2 {
        return Err(PipelineError::Data("trace too short".into()));
    }

    // Calibrate scale and start pose from the first frame (user standing).
    let first = trace.frames[0];
    let offsets = spec.sensor_offsets.clone();
    let user_height = estimate_height_from_hmd(first.head.position.y, offsets.head.translation.y);
    let sk = scale_skeleton(&spec, user_height).map_err(data_err)?;
    let yaw_frame = obs::heading_from_pose(&first.head.position, &first.head.rotation)
        .unwrap_or(HeadingFrame::identity());
    let yaw_rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw_frame.yaw);
    let horizontal_offset = yaw_rot * Vector3::new(offsets.head.translation.x, 0.0, offsets.head.translation.z);
    let root_pos = Vector3::new(
        first.head.position.x - horizontal_offset.x,
        sk.standing_root_height(),
        first.head.position.z - horizontal_offset.z,
    );

    let sim = Simulator::for_skeleton(&sk, crate::sim::SimConfig::default());
    let mut state = sim.make_state(
        root_pos,
        yaw_rot,
        Vector3::zeros(),
        Vector3::zeros(),
        vec![0.0; sim.dof()],
        vec![0.0; sim.dof()],
    );
    let mut heading = obs::compute_heading_frame(&state).unwrap_or(HeadingFrame::identity());
    let last = trace.frames.len() - 1;
    let mut frames = Vec::with_capacity(trace.frames.len());
    let push_frame = |frames: &mut Vec<FullBodyFrame>, s: &CharacterState| {
        frames.push(FullBodyFrame {
            root_position: s.root_position,
            root_orientation: s.root_orientation,
            root_linear_vel: s.root_linear_vel,
            root_angular_vel: s.root_angular_vel,
            joint_angles: s.q.clone(),
            joint_velocities: s.qd.clone(),
        });
    };
    push_frame(&mut frames, &state);
    for i in 0..trace.frames.len() - 1 {
        if let Ok(h) = obs::compute_heading_frame(&state) {
            heading = h;
        }
        let future: Vec<_> = (1..=obs::FUTURE_FRAMES)
            .map(|k| {
                let mut f = trace.frames[(i + k).min(last)];
                if headset_only {
                    f.left = DevicePose::identity();
                    f.right = DevicePose::identity();
                }
                f
            })
            .collect();
        let raw = obs::build_observation_with_heading(&state, &future, sk.user_height, &heading)
            .map_err(|e| PipelineError::Numeric(e.to_string()))?;
        let (action, _) = ck
            .policy
            .mean_action(&obs::normalize_observation(&raw))
            .map_err(data_err)?;
        let torques: Vec<f64> = action.iter().map(|a| a * TORQUE_LIMIT).collect();
        state = sim
            .step(&state, &torques)
            .map_err(|e| PipelineError::Numeric(e.to_string()))?;
        push_frame(&mut frames, &state);
    }
    let clip = MotionClip {
        schema_version: crate::mocap::CLIP_SCHEMA_VERSION,
        name: name.to_string(),
        frame_rate: target,
        subject_height: user_height,
        producer_hash: ck.config_hash,
        frames,
    };
    clip.validate().map_err(data_err)?;
    Ok(clip)
}

/// Ingests BVH files into canonical clips. Failures are reported per file;
/// successfully converted clips are still written.
pub fn ingest_bvh_files(
    files: &[PathBuf],
    map_path: &Path,
    out_dir: &Path,
    spec: &SkeletonSpec,
) -> (Vec<(PathBuf, MotionClip)>, Vec<(PathBuf, String)>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    let map = match std::fs::read_to_string(map_path)
        .map_err(|e| e.to_string())
        .and_then(|t| crate::mocap::JointMap::from_json(&t).map_err(|e| e.to_string()))
    {
        Ok(m) => m,
        Err(e) => {
            for f in files {
                failed.push((f.clone(), format!("mapping table: {e}")));
            }
            return (ok, failed);
        }
    };
    let map_hash = fnv1a64(
        std::fs::read(map_path)
            .unwrap_or_default()
            .as_slice(),
    );
    for file in files {
        let result = std::fs::read_to_string(file)
            .map_err(|e| e.to_string())
            .and_then(|text| crate::mocap::parse_bvh(&text).map_err(|e| e.to_string()))
            .and_then(|raw| {
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| "clip".into());
                crate::mocap::retarget_to_canonical(&raw, &map, spec, &stem)
                    .map_err(|e| e.to_string())
            });
        match result {
            Ok(mut clip) => {
                clip.producer_hash = map_hash;
                let out = out_dir.join(format!("{}.clip.json", clip.name));
                match clip.save(&out) {
                    Ok(()) => ok.push((out, clip)),
                    Err(e) => failed.push((file.clone(), e.to_string())),
                }
            }
            Err(e) => failed.push((file.clone(), e)),
        }
    }
    (ok, failed)
}

/// Scores a standing rollout for fall termination: steps the policy for
/// `seconds` on the clip and reports whether the head stayed above the fall
/// threshold throughout.
pub fn no_fall_rollout(
    policy: &GaussianPolicy,
    skeleton: &ScaledSkeleton,
    prepared: &PreparedClip,
    termination: &TerminationConfig,
    seconds: f64,
) -> Result<bool, PipelineError> {
    let sim = Simulator::for_skeleton(skeleton, crate::sim::SimConfig::default());
    let mut state = sim.reset_from_frame(&prepared.clip.frames[0]);
    let mut heading = obs::compute_heading_frame(&state).unwrap_or(HeadingFrame::identity());
    let steps = (seconds * prepared.clip.frame_rate).round() as usize;
    let last = prepared.trace.frames.len() - 1;
    let threshold = termination.fall_height_ratio * skeleton.standing_head_height();
    for step in 0..steps {
        let i = step.min(prepared.clip.len() - 2);
        if let Ok(h) = obs::compute_heading_frame(&state) {
            heading = h;
        }
        let future: Vec<_> = (1..=obs::FUTURE_FRAMES)
            .map(|k| prepared.trace.frames[(i + k).min(last)])
            .collect();
        let raw = obs::build_observation_with_heading(&state, &future, skeleton.user_height, &heading)
            .map_err(|e| PipelineError::Numeric(e.to_string()))?;
        let (action, _) = policy
            .mean_action(&obs::normalize_observation(&raw))
            .map_err(data_err)?;
        let torques: Vec<f64> = action.iter().map(|a| a * TORQUE_LIMIT).collect();
        state = match sim.step(&state, &torques) {
            Ok(s) => s,
            Err(_) => return Ok(false),
        };
        if state.link_poses[link::HEAD].position.y < threshold {
            return Ok(false);
        }
    }
    Ok(true)
}
