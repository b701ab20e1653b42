use std::sync::Arc;
use mimic::mocap::synthetic;
use mimic::reward::RewardWeights;
use mimic::rl::env::{pd_hold_torques, PdGains, PreparedClip, TerminationConfig};
use mimic::rl::TrackingEnv;
use mimic::sim::SimConfig;
use mimic::skeleton::{build_default_skeleton, scale_skeleton, TORQUE_LIMIT};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = build_default_skeleton();
    let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
    for clip_name in ["stand", "walk"] {
        let clip = synthetic::builtin_clip(clip_name, &sk).unwrap();
        let clips = Arc::new(vec![PreparedClip::prepare(clip, &sk)]);
        for sigma in [0.0f64, 0.01, 0.03] {
            let gains = PdGains::for_skeleton(&sk, &SimConfig::default(), 12.0);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut env = TrackingEnv::new(
                &sk, SimConfig::default(), clips.clone(), RewardWeights::default(),
                TerminationConfig::default(), ChaCha8Rng::seed_from_u64(3),
            );
            env.reset_to(0, 0);
            let mut sum = 0.0;
            let mut count = 0;
            let mut terms = 0;
            for step in 0..90 {
                let torques = pd_hold_torques(env.state(), env.next_reference_frame(), &gains);
                let action: Vec<f64> = torques
                    .iter()
                    .map(|t| {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        (t / TORQUE_LIMIT + sigma * eps).clamp(-1.0, 1.0)
                    })
                    .collect();
                let (r, out) = env.step(&action);
                if step >= 3 {
                    sum += r;
                    count += 1;
                }
                if out != mimic::rl::StepOutcome::Running && out != mimic::rl::StepOutcome::ClipEnd {
                    terms += 1;
                }
            }
            println!(
                "{clip_name}: sigma {sigma:5}: mean reward {:.3} over {count} steps, terminations {terms}",
                sum / count as f64
            );
        }
    }
}
