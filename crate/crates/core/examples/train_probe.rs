use mimic::config::ExperimentConfig;
use mimic::pipeline;
use std::path::PathBuf;

fn main() {
    let iters: usize = std::env::var("ITERS").map(|v| v.parse().unwrap()).unwrap_or(20);
    let lr: f64 = std::env::var("LR").map(|v| v.parse().unwrap()).unwrap_or(1e-4);
    let gain: f64 = std::env::var("GAIN").map(|v| v.parse().unwrap()).unwrap_or(0.01);
    let envs: usize = std::env::var("ENVS").map(|v| v.parse().unwrap()).unwrap_or(64);
    let sigma: f64 = std::env::var("SIGMA").map(|v| v.parse().unwrap()).unwrap_or(0.03);
    let kl: f64 = std::env::var("KL").map(|v| v.parse().unwrap()).unwrap_or(0.01);
    let hidden: Vec<usize> = std::env::var("HIDDEN").map(|v| v.split(',').map(|x| x.parse().unwrap()).collect()).unwrap_or_else(|_| vec![400, 300, 200]);
    let dir = PathBuf::from(format!("/tmp/mimic-probe-{}", std::process::id()));
    let cfg = ExperimentConfig {
        out_dir: dir.clone(),
        clips: std::env::var("CLIPS")
            .map(|v| v.split('+').map(|c| format!("builtin:{c}")).collect())
            .unwrap_or_else(|_| vec!["builtin:stand".into(), "builtin:walk".into()]),
        termination: mimic::rl::TerminationConfig {
            reward_floor: std::env::var("FLOOR").map(|v| v.parse().unwrap()).unwrap_or(0.1),
            fall_height_ratio: std::env::var("FALL").map(|v| v.parse().unwrap()).unwrap_or(0.3),
            floor_steps: std::env::var("FLOOR_STEPS").map(|v| v.parse().unwrap()).unwrap_or(10),
            ..Default::default()
        },
        iterations: iters,
        checkpoint_interval: 10_000,
        final_gain: gain,
        sigma,
        sigma_final: std::env::var("SIGMA_FINAL").ok().map(|v| v.parse().unwrap()),
        policy_hidden: hidden.clone(),
        value_hidden: hidden,
        eval_interval: 20,
        ppo: mimic::rl::PpoConfig {
            n_envs: envs,
            rollout_steps: std::env::var("STEPS").map(|v| v.parse().unwrap()).unwrap_or(15),
            learning_rate: lr,
            desired_kl: if kl > 0.0 { Some(kl) } else { None },
            ..Default::default()
        },
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let summary = pipeline::train(&cfg, None, |row| {
        if row.iteration <= 3 || row.iteration % 10 == 0 || row.eval_reward.is_some() {
            println!(
                "it {:4}: reward {:.3} ploss {:+.4} vloss {:.4} clipfrac {:.2} kl {:.4} lr {:.2e} ends {} eval {:?}",
                row.iteration, row.mean_reward, row.policy_loss, row.value_loss,
                row.clip_fraction, row.mean_kl, row.learning_rate, row.episode_ends, row.eval_reward.map(|e| (e * 1000.0).round() / 1000.0)
            );
        }
    })
    .unwrap();
    println!(
        "done: {} iters in {:.1}s ({:.1} s/iter); reward {:.3} -> {:.3}",
        iters,
        t0.elapsed().as_secs_f64(),
        t0.elapsed().as_secs_f64() / iters as f64,
        summary.first_mean_reward,
        summary.final_mean_reward
    );
    let _ = std::fs::remove_dir_all(&dir);
}
