use std::sync::Arc;
use mimic::mocap::synthetic;
use mimic::reward::RewardWeights;
use mimic::rl::env::{pd_hold_torques, PdGains, PreparedClip, TerminationConfig};
use mimic::rl::TrackingEnv;
use mimic::sim::SimConfig;
use mimic::skeleton::{build_default_skeleton, scale_skeleton, TORQUE_LIMIT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = build_default_skeleton();
    let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
    // Exactly like rl::env::tests::make_env(3).
    let clips = Arc::new(vec![
        PreparedClip::prepare(synthetic::standing_clip(&sk, 2.0), &sk),
        PreparedClip::prepare(synthetic::walk_clip(&sk, 2.0), &sk),
    ]);
    let mut env = TrackingEnv::new(
        &sk, SimConfig::default(), clips, RewardWeights::default(),
        TerminationConfig::default(), ChaCha8Rng::seed_from_u64(3),
    );
    let omega: f64 = std::env::var("OMEGA").map(|v| v.parse().unwrap()).unwrap_or(12.0);
    let gains = PdGains::for_skeleton(&sk, &SimConfig::default(), omega);
    env.reset_to(0, 0);
    let mut minr: f64 = 1.0; for step in 0..120 {
        let torques = pd_hold_torques(env.state(), env.next_reference_frame(), &gains);
        let action: Vec<f64> = torques.iter().map(|t| t / TORQUE_LIMIT).collect();
        let (r, out) = env.step(&action);
        if step >= 3 { minr = minr.min(r); }
        if out != mimic::rl::StepOutcome::Running {
            println!("ended at step {step}: {out:?} minr {minr:.3}");
            return;
        }
        let _ = r;
    }
    println!("survived 120 steps, min reward {minr:.3}");
}
