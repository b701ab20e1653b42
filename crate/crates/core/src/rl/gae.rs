//! Generalized advantage estimation and TD(λ) value targets.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GaeError {
    #[error("length mismatch: rewards {0}, values {1}, dones {2}")]
    LengthMismatch(usize, usize, usize),
}

/// Backward GAE recursion over one trajectory segment:
///
/// δ_t = r_t + γ·V(s_{t+1})·(1−done_t) − V(s_t)
/// A_t = δ_t + γλ·(1−done_t)·A_{t+1}
///
/// `bootstrap` is V of the state following the last step. Returns raw
/// (unnormalized) advantages and TD(λ) targets `A + V`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), GaeError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(GaeError::LengthMismatch(n, values.len(), dones.len()));
    }
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        next_adv = delta + gamma * lambda * not_done * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}

#[cfg(test)]
pub(crate) fn brute_force_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    // A_t = Σ_k (γλ)^k δ_{t+k}, truncating the sum at episode boundaries.
    let n = rewards.len();
    let delta = |t: usize| {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        rewards[t] + gamma * next_value * not_done - values[t]
    };
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            let mut w = 1.0;
            for k in t..n {
                acc += w * delta(k);
                if dones[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_zero_reduces_to_td_error() {
        let rewards = [1.0, 0.5, -0.25];
        let values = [0.2, 0.4, 0.1];
        let dones = [false, false, false];
        let (adv, _) = compute_gae(&rewards, &values, &dones, 0.7, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let next = if t + 1 < 3 { values[t + 1] } else { 0.7 };
            let delta = rewards[t] + 0.9 * next - values[t];
            assert!((adv[t] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_zero_reduces_to_reward_minus_value() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, 0.5, 0.5];
        let dones = [false, false, false];
        let (adv, _) = compute_gae(&rewards, &values, &dones, 9.0, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert!((adv[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_picked_three_step_sequence_matches_expansion() {
        let rewards = [1.0, -0.5, 2.0];
        let values = [0.3, 0.8, -0.2];
        let dones = [false, false, false];
        let (gamma, lambda, boot) = (0.97, 0.95, 0.6);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, boot, gamma, lambda).unwrap();
        let expected = brute_force_gae(&rewards, &values, &dones, boot, gamma, lambda);
        for t in 0..3 {
            assert!((adv[t] - expected[t]).abs() < 1e-12);
            assert!((ret[t] - (expected[t] + values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_on_random_sequences_with_dones() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=10);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.25)).collect();
            let boot = rng.gen::<f64>() * 2.0 - 1.0;
            let gamma = rng.gen::<f64>();
            let lambda = rng.gen::<f64>();
            let (adv, _) = compute_gae(&rewards, &values, &dones, boot, gamma, lambda).unwrap();
            let expected = brute_force_gae(&rewards, &values, &dones, boot, gamma, lambda);
            for t in 0..n {
                assert!(
                    (adv[t] - expected[t]).abs() < 1e-10,
                    "t={t}: {} vs {}",
                    adv[t],
                    expected[t]
                );
            }
        }
    }

    #[test]
    fn advantages_before_done_ignore_later_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = 8;
            let mut rewards: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let mut dones = vec![false; n];
            let cut = rng.gen_range(1..n - 1);
            dones[cut] = true;
            let (before, _) = compute_gae(&rewards, &values, &dones, 0.5, 0.97, 0.95).unwrap();
            // Mutate everything after the episode boundary.
            for r in rewards.iter_mut().skip(cut + 1) {
                *r += 100.0;
            }
            let (after, _) = compute_gae(&rewards, &values, &dones, 0.5, 0.97, 0.95).unwrap();
            for t in 0..=cut {
                assert_eq!(before[t], after[t], "leak at t={t}, cut={cut}");
            }
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        assert!(matches!(
            compute_gae(&[1.0], &[1.0, 2.0], &[false], 0.0, 0.9, 0.9),
            Err(GaeError::LengthMismatch(1, 2, 1))
        ));
    }
}
