//! Empirical transition and reward models built from observed transitions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Transition;
use crate::mdp::MdpError;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("index out of range: s={state}, a={action}, s'={next_state}")]
    IndexOutOfRange {
        state: usize,
        action: usize,
        next_state: usize,
    },
    #[error("snapshot inconsistent: {0}")]
    InvalidSnapshot(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Visit counts `N(s, a)`, transition counts `N(s, a, s')` and reward sums.
///
/// Counts are kept raw and normalized on demand. Transition counts are stored
/// sparsely per `(s, a)` row, sorted by next state, so that operators cost
/// O(|S||A| * support) rather than O(|S|^2 |A|).
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel<T> {
    num_states: usize,
    num_actions: usize,
    visit_counts: Vec<u64>,
    transition_counts: Vec<Vec<(usize, u64)>>,
    reward_sums: Vec<T>,
    total_steps: u64,
    unvisited: usize,
}

impl<T: Scalar> EmpiricalModel<T> {
    /// Fresh model: `P̂ = 0`, `R̂ = 0`.
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let pairs = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            visit_counts: vec![0; pairs],
            transition_counts: vec![Vec::new(); pairs],
            reward_sums: vec![T::zero(); pairs],
            total_steps: 0,
            unvisited: pairs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.visit_counts.len()
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    fn check(&self, state: usize, action: usize, next_state: usize) -> Result<usize, EstimationError> {
        if state >= self.num_states || action >= self.num_actions || next_state >= self.num_states {
            return Err(EstimationError::IndexOutOfRange {
                state,
                action,
                next_state,
            });
        }
        Ok(state * self.num_actions + action)
    }

    /// The only mutator: folds one observed transition into the counts.
    pub fn record_transition(&mut self, t: &Transition) -> Result<(), EstimationError> {
        let pair = self.check(t.state, t.action, t.next_state)?;
        if self.visit_counts[pair] == 0 {
            self.unvisited -= 1;
        }
        self.visit_counts[pair] += 1;
        let row = &mut self.transition_counts[pair];
        match row.binary_search_by_key(&t.next_state, |e| e.0) {
            Ok(i) => row[i].1 += 1,
            Err(i) => row.insert(i, (t.next_state, 1)),
        }
        self.reward_sums[pair] = self.reward_sums[pair] + T::lit(t.reward);
        self.total_steps += 1;
        Ok(())
    }

    pub fn visit_count(&self, state: usize, action: usize) -> Result<u64, EstimationError> {
        Ok(self.visit_counts[self.check(state, action, 0)?])
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    pub fn transition_count(
        &self,
        state: usize,
        action: usize,
        next_state: usize,
    ) -> Result<u64, EstimationError> {
        let pair = self.check(state, action, next_state)?;
        let row = &self.transition_counts[pair];
        Ok(row
            .binary_search_by_key(&next_state, |e| e.0)
            .map_or(0, |i| row[i].1))
    }

    /// Dense `P̂(. | s, a)`; the zero vector for an unvisited pair.
    pub fn phat_row(&self, state: usize, action: usize) -> Result<Vec<T>, EstimationError> {
        let pair = self.check(state, action, 0)?;
        let mut row = vec![T::zero(); self.num_states];
        for (next, p) in self.phat_support(pair) {
            row[next] = p;
        }
        Ok(row)
    }

    /// Nonzero entries of `P̂` for a flat pair index.
    #[inline]
    pub fn phat_support(&self, pair: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let n = self.visit_counts[pair];
        let inv = if n == 0 {
            T::zero()
        } else {
            T::one() / T::lit(n as f64)
        };
        self.transition_counts[pair]
            .iter()
            .map(move |&(next, c)| (next, T::lit(c as f64) * inv))
    }

    /// Raw count row for a flat pair index.
    pub fn count_support(&self, pair: usize) -> &[(usize, u64)] {
        &self.transition_counts[pair]
    }

    /// Empirical mean reward; zero for an unvisited pair.
    pub fn rhat(&self, state: usize, action: usize) -> Result<T, EstimationError> {
        Ok(self.rhat_pair(self.check(state, action, 0)?))
    }

    #[inline]
    pub fn rhat_pair(&self, pair: usize) -> T {
        match self.visit_counts[pair] {
            0 => T::zero(),
            n => self.reward_sums[pair] / T::lit(n as f64),
        }
    }

    /// `sum_s' P̂(s'|s,a) v(s')` for a flat pair index.
    #[inline]
    pub fn expected_next(&self, pair: usize, state_values: &[T]) -> T {
        let row = &self.transition_counts[pair];
        if row.is_empty() {
            return T::zero();
        }
        let weighted: T = row
            .iter()
            .map(|&(next, c)| T::lit(c as f64) * state_values[next])
            .sum();
        weighted / T::lit(self.visit_counts[pair] as f64)
    }

    /// Every state-action pair visited at least once.
    pub fn all_visited(&self) -> bool {
        self.unvisited == 0
    }

    pub fn unvisited_pairs(&self) -> usize {
        self.unvisited
    }

    pub fn to_snapshot(&self) -> ModelSnapshot {
        let ns = self.num_states;
        let mut dense = vec![0u64; self.num_pairs() * ns];
        for (pair, row) in self.transition_counts.iter().enumerate() {
            for &(next, c) in row {
                dense[pair * ns + next] = c;
            }
        }
        ModelSnapshot {
            num_states: ns,
            num_actions: self.num_actions,
            visit_counts: self.visit_counts.clone(),
            transition_counts: dense,
            reward_sums: self.reward_sums.iter().map(|r| r.as_f64()).collect(),
            total_steps: self.total_steps,
        }
    }

    pub fn from_snapshot(snap: &ModelSnapshot) -> Result<Self, EstimationError> {
        let (ns, na) = (snap.num_states, snap.num_actions);
        let pairs = ns * na;
        let bad = |m: &str| Err(EstimationError::InvalidSnapshot(m.to_string()));
        if snap.visit_counts.len() != pairs
            || snap.reward_sums.len() != pairs
            || snap.transition_counts.len() != pairs * ns
        {
            return bad("array lengths do not match dimensions");
        }
        let mut transition_counts = Vec::with_capacity(pairs);
        for (pair, row) in snap.transition_counts.chunks(ns).enumerate() {
            let sparse: Vec<(usize, u64)> = row
                .iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(|(s, c)| (s, *c))
                .collect();
            if sparse.iter().map(|e| e.1).sum::<u64>() != snap.visit_counts[pair] {
                return bad("visit counts disagree with transition counts");
            }
            transition_counts.push(sparse);
        }
        if snap.visit_counts.iter().sum::<u64>() != snap.total_steps {
            return bad("total_steps disagrees with visit counts");
        }
        Ok(Self {
            num_states: ns,
            num_actions: na,
            unvisited: snap.visit_counts.iter().filter(|c| **c == 0).count(),
            visit_counts: snap.visit_counts.clone(),
            transition_counts,
            reward_sums: snap.reward_sums.iter().map(|r| T::lit(*r)).collect(),
            total_steps: snap.total_steps,
        })
    }
}

/// JSON checkpoint of an [`EmpiricalModel`]. `transition_counts` is flat
/// row-major over `(s, a, s')` like the MDP document.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelSnapshot {
    pub num_states: usize,
    pub num_actions: usize,
    pub visit_counts: Vec<u64>,
    pub transition_counts: Vec<u64>,
    pub reward_sums: Vec<f64>,
    pub total_steps: u64,
}
