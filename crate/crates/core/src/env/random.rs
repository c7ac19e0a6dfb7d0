use rand::Rng;

use super::{sample_support, seeded_rng, EnvError, EpisodicEnv, SimRng, StepOutcome};
use crate::mdp::TabularMdp;

/// Seeded random MDP with discount 0.9.
///
/// State `num_states - 1` is an absorbing terminal with zero reward and state
/// 0 is the start. Every other transition row is a normalized vector of
/// positive uniform draws, and every transition `(s, a, s')` carries its own
/// reward drawn uniformly from `[-1, 1]`, so `|r| <= 1`.
pub fn random_mdp(num_states: usize, num_actions: usize, seed: u64) -> Result<TabularMdp<f64>, EnvError> {
    if num_states < 2 || num_actions < 1 {
        return Err(EnvError::InvalidDimensions {
            num_states,
            num_actions,
        });
    }
    let mut rng = seeded_rng(seed);
    let terminal = num_states - 1;
    let row_len = num_states;
    let mut transition = vec![0.0; num_states * num_actions * row_len];
    let mut transition_reward = vec![0.0; transition.len()];
    for s in 0..num_states {
        for a in 0..num_actions {
            let base = (s * num_actions + a) * row_len;
            if s == terminal {
                transition[base + terminal] = 1.0;
                continue;
            }
            let row = &mut transition[base..base + row_len];
            for p in row.iter_mut() {
                // (0, 1]: strictly positive mass everywhere.
                *p = 1.0 - rng.random::<f64>();
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            for r in &mut transition_reward[base..base + row_len] {
                *r = rng.random_range(-1.0..=1.0);
            }
        }
    }
    let mdp =
        TabularMdp::from_transition_rewards(num_states, num_actions, transition, transition_reward, 0.9)?;
    // The analysis normalizes rewards to |r| <= 1.
    Ok(mdp.with_reward_bound(1.0)?)
}

/// A [`TabularMdp`] run episodically: start in state 0, stop at the last
/// state.
#[derive(Clone, Debug)]
pub struct RandomMdpEnv {
    mdp: TabularMdp<f64>,
    starts: Vec<usize>,
}

impl RandomMdpEnv {
    pub fn new(mdp: TabularMdp<f64>) -> Self {
        Self { mdp, starts: vec![0] }
    }

    fn terminal(&self) -> usize {
        self.mdp.num_states() - 1
    }
}

impl EpisodicEnv for RandomMdpEnv {
    fn name(&self) -> &'static str {
        "random"
    }

    fn mdp(&self) -> &TabularMdp<f64> {
        &self.mdp
    }

    fn reset(&self, _rng: &mut SimRng) -> usize {
        0
    }

    fn step(&self, state: usize, action: usize, rng: &mut SimRng) -> StepOutcome {
        let u: f64 = rng.random();
        let next_state = sample_support(self.mdp.support(state, action), u);
        StepOutcome {
            next_state,
            reward: self.mdp.transition_reward(state, action, next_state),
            terminal: next_state == self.terminal(),
        }
    }

    fn is_terminal(&self, state: usize) -> bool {
        state == self.terminal()
    }

    fn is_success(&self, state: usize) -> bool {
        state == self.terminal()
    }

    fn start_states(&self) -> &[usize] {
        &self.starts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate_mdp;

    #[test]
    fn four_by_four_is_valid() {
        let mdp = random_mdp(4, 4, 7).unwrap();
        assert_eq!((mdp.num_states(), mdp.num_actions()), (4, 4));
        validate_mdp(&mdp).unwrap();
        for s in 0..4 {
            for a in 0..4 {
                let sum: f64 = mdp.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
        assert!(mdp.reward_bound() <= 1.0);
    }

    #[test]
    fn same_seed_same_mdp() {
        let a = random_mdp(5, 3, 99).unwrap().to_document();
        let b = random_mdp(5, 3, 99).unwrap().to_document();
        assert_eq!(a, b);
        assert_ne!(a, random_mdp(5, 3, 100).unwrap().to_document());
    }

    #[test]
    fn terminal_row_is_absorbing_with_zero_reward() {
        for seed in 0..5 {
            let mdp = random_mdp(6, 3, seed).unwrap();
            assert!(mdp.is_absorbing(5));
            for a in 0..3 {
                assert_eq!(mdp.reward(5, a), 0.0);
                assert_eq!(mdp.transition_row(5, a)[5], 1.0);
            }
        }
    }

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(random_mdp(1, 4, 0).is_err());
        assert!(random_mdp(4, 0, 0).is_err());
    }
}
