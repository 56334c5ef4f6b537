//! Exact analytic references for the chain MDP: the optimal episode return,
//! random-walk reach probabilities, the discounted state-visitation
//! distribution of a fixed policy, and the induced novelty scores. These
//! are the ground truths the test suite and the `oracle` CLI command lean
//! on; everything here is dynamic programming over the explicit model, with
//! no learning involved.

use crate::envs::chain::chain_reward;
use crate::error::{Error, Result};

/// Best achievable undiscounted return of one chain episode (start s2,
/// horizon n+9), by value iteration over (state, remaining steps).
///
/// For every n >= 3 this works out to 12: n-2 right moves reach sN (the
/// arrival pays 1) and the remaining 11 actions stay there for 1 each. The
/// left end cannot compete, paying only 1/1000 per step.
pub fn chain_optimal_return(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Config(format!(
            "a chain needs at least 3 states, got {n}"
        )));
    }
    let horizon = n + 9;
    // v[s] = best return achievable from state s+1 with `rem` steps left.
    let mut v = vec![0.0; n];
    for _rem in 1..=horizon {
        let mut nv = vec![0.0; n];
        for s in 0..n {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n - 1);
            let go_left = chain_reward(left + 1, n) + v[left];
            let go_right = chain_reward(right + 1, n) + v[right];
            nv[s] = go_left.max(go_right);
        }
        v = nv;
    }
    Ok(v[1])
}

/// Exact probability that a uniform-random walk from s2 visits sN at least
/// once within the n+9-step episode. Computed by forward DP with an
/// absorbing "reached" mass; all probabilities are dyadic rationals, so the
/// sum is exact in f64.
pub fn chain_random_reach_probability(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Config(format!(
            "a chain needs at least 3 states, got {n}"
        )));
    }
    let horizon = n + 9;
    let mut dist = vec![0.0; n];
    dist[1] = 1.0;
    let mut reached = 0.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let p = dist[s];
            if p == 0.0 {
                continue;
            }
            for target in [s.saturating_sub(1), (s + 1).min(n - 1)] {
                if target == n - 1 {
                    reached += 0.5 * p;
                } else {
                    next[target] += 0.5 * p;
                }
            }
        }
        dist = next;
    }
    Ok(reached)
}

/// Probability that a uniform-random walk runs straight to sN and stays one
/// step: n-1 specific actions from s2, so 2^-(n-1). This is the only
/// episode event whose probability is 1/512 at n=10; the full-episode reach
/// probability above is roughly 38.6x larger.
pub fn chain_minimal_path_probability(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Config(format!(
            "a chain needs at least 3 states, got {n}"
        )));
    }
    Ok(0.5_f64.powi(n as i32 - 1))
}

/// Discounted state-visitation distribution of `policy` on the chain:
/// the gamma-weighted occupancy of each state over one episode horizon,
/// renormalized so the entries sum to 1. `policy[s]` holds the left/right
/// probabilities for state s+1.
pub fn visitation_distribution(policy: &[[f64; 2]], n: usize, gamma: f64) -> Result<Vec<f64>> {
    if n < 3 || policy.len() != n {
        return Err(Error::Contract(format!(
            "policy covers {} states, chain has {n}",
            policy.len()
        )));
    }
    if !(0.0..1.0).contains(&gamma) || gamma <= 0.0 {
        return Err(Error::Config(format!(
            "discount must lie strictly inside (0,1), got {gamma}"
        )));
    }
    for (s, row) in policy.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "policy row for state s{} is not a distribution: {row:?}",
                s + 1
            )));
        }
    }
    let horizon = n + 9;
    let mut dist = vec![0.0; n];
    dist[1] = 1.0; // episodes start in s2
    let mut weighted = vec![0.0; n];
    let mut norm = 0.0;
    let mut gpow = 1.0;
    for t in 0..=horizon {
        for s in 0..n {
            weighted[s] += gpow * dist[s];
        }
        norm += gpow;
        if t < horizon {
            let mut next = vec![0.0; n];
            for s in 0..n {
                let p = dist[s];
                if p == 0.0 {
                    continue;
                }
                next[s.saturating_sub(1)] += p * policy[s][0];
                next[(s + 1).min(n - 1)] += p * policy[s][1];
            }
            dist = next;
        }
        gpow *= gamma;
    }
    for w in weighted.iter_mut() {
        *w /= norm;
    }
    Ok(weighted)
}

/// Novelty of each state given the policy occupancy `rho` and a reference
/// density `g`: the probability an ideal discriminator assigns to "not
/// drawn from the policy", `1 - rho/(rho + g)`. States carrying no mass
/// under either density count as fully novel.
pub fn novelty_scores(rho: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if rho.len() != g.len() {
        return Err(Error::Contract(format!(
            "density lengths differ: {} vs {}",
            rho.len(),
            g.len()
        )));
    }
    if rho.iter().chain(g).any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Contract(
            "densities must be non-negative and finite".into(),
        ));
    }
    Ok(rho
        .iter()
        .zip(g)
        .map(|(&r, &gg)| {
            if r + gg == 0.0 {
                1.0
            } else {
                1.0 - r / (r + gg)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain::{ChainEnv, LEFT_REWARD, RIGHT_REWARD};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Replay one action bitstring through the real environment.
    fn rollout_return(n: usize, mut actions: u32, len: usize) -> f64 {
        let mut env = ChainEnv::new(n).unwrap();
        env.reset();
        let mut total = 0.0;
        for _ in 0..len {
            let out = env.step((actions & 1) as usize).unwrap();
            total += out.reward;
            actions >>= 1;
        }
        total
    }

    #[test]
    fn dp_matches_exhaustive_enumeration() {
        // Small enough chains to brute-force every action sequence.
        for n in [3usize, 4] {
            let len = n + 9;
            let mut best = f64::NEG_INFINITY;
            for seq in 0..(1u32 << len) {
                best = best.max(rollout_return(n, seq, len));
            }
            let dp = chain_optimal_return(n).unwrap();
            assert_eq!(dp, best, "n={n}");
        }
    }

    #[test]
    fn optimal_return_is_twelve_for_every_chain_length() {
        for n in [3, 4, 10, 50, 200, 1000] {
            assert_eq!(chain_optimal_return(n).unwrap(), 12.0, "n={n}");
        }
    }

    #[test]
    fn left_farming_is_strictly_worse() {
        // Sitting at the distractor end all episode earns well under 12.
        let n = 10;
        let all_left = rollout_return(n, 0, n + 9);
        assert!((all_left - 19.0 * LEFT_REWARD).abs() < 1e-12);
        assert!(all_left < chain_optimal_return(n).unwrap());
    }

    #[test]
    fn reach_probability_matches_independent_dp() {
        // Frozen from a separate implementation of the same DP. Note this
        // full-episode value is ~38.6x the 1/512 minimal-path probability:
        // random walks get many chances per 19-step episode.
        let p = chain_random_reach_probability(10).unwrap();
        assert!((p - 0.07538604736328125).abs() < 1e-15, "p = {p}");
        let minimal = chain_minimal_path_probability(10).unwrap();
        assert_eq!(minimal, 1.0 / 512.0);
        assert!(p > 38.0 * minimal && p < 39.0 * minimal);
    }

    #[test]
    fn always_left_visitation_matches_closed_form() {
        // Under the always-left policy the walk reaches s1 after one step
        // and never leaves: rho(s2) = 1/S and rho(s1) = (S-1)/S where
        // S = sum_{t<=H} gamma^t.
        let n = 6;
        let gamma = 0.99;
        let policy = vec![[1.0, 0.0]; n];
        let rho = visitation_distribution(&policy, n, gamma).unwrap();
        let horizon = n + 9;
        let s: f64 = (0..=horizon).map(|t| gamma.powi(t as i32)).sum();
        assert!((rho[0] - (s - 1.0) / s).abs() < 1e-12);
        assert!((rho[1] - 1.0 / s).abs() < 1e-12);
        for &w in &rho[2..] {
            assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn visitation_matches_monte_carlo_rollouts() {
        // 10^6 sampled episodes of a mildly right-biased policy against the
        // exact DP, elementwise within 1e-3.
        let n = 5;
        let gamma = 0.9;
        let policy = vec![[0.4, 0.6]; n];
        let exact = visitation_distribution(&policy, n, gamma).unwrap();
        let horizon = n + 9;
        let mut rng = StdRng::seed_from_u64(171);
        let episodes = 1_000_000;
        let mut acc = vec![0.0; n];
        for _ in 0..episodes {
            let mut s = 1usize; // s2, 0-based
            let mut gpow = 1.0;
            for t in 0..=horizon {
                acc[s] += gpow;
                if t < horizon {
                    let right = rng.gen::<f64>() < policy[s][1];
                    s = if right { (s + 1).min(n - 1) } else { s.saturating_sub(1) };
                }
                gpow *= gamma;
            }
        }
        let norm: f64 = (0..=horizon).map(|t| gamma.powi(t as i32)).sum();
        for (s, (&e, &a)) in exact.iter().zip(&acc).enumerate() {
            let mc = a / (episodes as f64 * norm);
            assert!((e - mc).abs() < 1e-3, "state {}: dp {e} vs mc {mc}", s + 1);
        }
    }

    #[test]
    fn invalid_policies_and_discounts_are_rejected() {
        let ok = vec![[0.5, 0.5]; 4];
        assert!(visitation_distribution(&ok, 4, 0.99).is_ok());
        assert!(visitation_distribution(&ok, 5, 0.99).is_err());
        assert!(visitation_distribution(&ok, 4, 1.0).is_err());
        assert!(visitation_distribution(&ok, 4, 0.0).is_err());
        let leaky = vec![[0.5, 0.4]; 4];
        assert!(matches!(
            visitation_distribution(&leaky, 4, 0.99),
            Err(Error::Contract(_))
        ));
        let negative = vec![[1.2, -0.2]; 4];
        assert!(visitation_distribution(&negative, 4, 0.99).is_err());
    }

    #[test]
    fn novelty_is_exactly_half_when_g_matches_rho() {
        let rho = vec![0.3, 0.007, 1e-9, 0.25];
        let nov = novelty_scores(&rho, &rho).unwrap();
        // x/(x+x) is exact in IEEE: the true quotient is representable.
        assert!(nov.iter().all(|&v| v == 0.5), "{nov:?}");
    }

    #[test]
    fn unreachable_states_are_fully_novel_and_bounds_hold() {
        let rho = vec![0.0, 0.8, 0.0];
        let g = vec![0.0, 0.2, 0.5];
        let nov = novelty_scores(&rho, &g).unwrap();
        assert_eq!(nov[0], 1.0); // no mass anywhere
        assert!((nov[1] - 0.2).abs() < 1e-12);
        assert_eq!(nov[2], 1.0); // only the reference density covers it
        assert!(novelty_scores(&rho, &[0.1]).is_err());
        assert!(novelty_scores(&[-0.1], &[0.1]).is_err());
    }

    proptest! {
        /// The visitation distribution is a distribution: non-negative and
        /// summing to 1 for arbitrary stochastic policies.
        #[test]
        fn visitation_is_normalized(
            n in 3usize..12,
            seed in 0u64..1000,
            gamma in 0.5f64..0.999,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let policy: Vec<[f64; 2]> = (0..n)
                .map(|_| {
                    let p = rng.gen::<f64>();
                    [p, 1.0 - p]
                })
                .collect();
            let rho = visitation_distribution(&policy, n, gamma).unwrap();
            prop_assert!(rho.iter().all(|&v| v >= 0.0));
            let total: f64 = rho.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rewards_used_by_the_dp_match_the_environment() {
        assert_eq!(RIGHT_REWARD, 1.0);
        assert_eq!(LEFT_REWARD, 0.001);
    }
}
