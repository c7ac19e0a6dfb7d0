//! Finite MDPs, Q-tables, the greedy selector and the Bellman optimality
//! operator.
//!
//! Tables are flat row-major over `(s, a)`; transition tensors are flat
//! row-major over `(s, a, s')`. A sparse support list per `(s, a)` row is
//! derived at construction and used by every operator, so dense storage only
//! matters for serialization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default iteration cap for [`value_iteration`].
pub const VALUE_ITERATION_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid dimensions: {num_states} states, {num_actions} actions")]
    InvalidDimensions { num_states: usize, num_actions: usize },
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("transition row (s={state}, a={action}) sums to {sum}")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },
    #[error("negative probability {value} at (s={state}, a={action}, s'={next_state})")]
    NegativeProbability {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    #[error("discount {0} outside (0, 1)")]
    DiscountOutOfRange(f64),
    #[error("reward {reward} at (s={state}, a={action}) exceeds reward bound {bound}")]
    RewardExceedsBound {
        state: usize,
        action: usize,
        reward: f64,
        bound: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("table size mismatch: expected {expected} entries, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("value iteration did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Ground-truth finite MDP.
#[derive(Clone, Debug)]
pub struct TabularMdp<T> {
    num_states: usize,
    num_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    transition_reward: Option<Vec<T>>,
    discount: T,
    reward_bound: T,
    support: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds an MDP with `(s, a)`-indexed rewards.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        discount: T,
    ) -> Result<Self, MdpError> {
        check_dims(num_states, num_actions)?;
        check_len("reward", reward.len(), num_states * num_actions)?;
        let reward_bound = reward.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        let mdp = Self::assemble(
            num_states,
            num_actions,
            transition,
            reward,
            None,
            discount,
            reward_bound,
        )?;
        Ok(mdp)
    }

    /// Builds an MDP whose rewards depend on the next state. The expected
    /// reward `R(s, a) = sum_s' P(s'|s,a) r(s,a,s')` is derived.
    pub fn from_transition_rewards(
        num_states: usize,
        num_actions: usize,
        transition: Vec<T>,
        transition_reward: Vec<T>,
        discount: T,
    ) -> Result<Self, MdpError> {
        check_dims(num_states, num_actions)?;
        let full = num_states * num_actions * num_states;
        check_len("transition", transition.len(), full)?;
        check_len("transition_reward", transition_reward.len(), full)?;
        let mut reward = vec![T::zero(); num_states * num_actions];
        let mut reward_bound = T::zero();
        for (pair, r) in reward.iter_mut().enumerate() {
            let base = pair * num_states;
            for next in 0..num_states {
                let p = transition[base + next];
                if p > T::zero() {
                    let rr = transition_reward[base + next];
                    *r = *r + p * rr;
                    reward_bound = reward_bound.max(rr.abs());
                }
            }
        }
        Self::assemble(
            num_states,
            num_actions,
            transition,
            reward,
            Some(transition_reward),
            discount,
            reward_bound,
        )
    }

    fn assemble(
        num_states: usize,
        num_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        transition_reward: Option<Vec<T>>,
        discount: T,
        reward_bound: T,
    ) -> Result<Self, MdpError> {
        check_len(
            "transition",
            transition.len(),
            num_states * num_actions * num_states,
        )?;
        let support = transition
            .chunks(num_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| **p > T::zero())
                    .map(|(s, p)| (s, *p))
                    .collect()
            })
            .collect();
        let mdp = Self {
            num_states,
            num_actions,
            transition,
            reward,
            transition_reward,
            discount,
            reward_bound,
            support,
        };
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    /// Replaces the reward bound with a looser one.
    pub fn with_reward_bound(mut self, bound: T) -> Result<Self, MdpError> {
        self.reward_bound = bound;
        validate_mdp(&self)?;
        Ok(self)
    }

    /// Same dynamics and rewards under another discount factor.
    pub fn with_discount(mut self, discount: T) -> Result<Self, MdpError> {
        self.discount = discount;
        validate_mdp(&self)?;
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Result<TabularMdp<U>, MdpError> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        TabularMdp::assemble(
            self.num_states,
            self.num_actions,
            conv(&self.transition),
            conv(&self.reward),
            self.transition_reward.as_deref().map(conv),
            U::lit(self.discount.as_f64()),
            U::lit(self.reward_bound.as_f64()),
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    pub fn reward_bound(&self) -> T {
        self.reward_bound
    }

    #[inline]
    pub fn pair_index(&self, state: usize, action: usize) -> usize {
        state * self.num_actions + action
    }

    /// Expected reward `R(s, a)`.
    pub fn reward(&self, state: usize, action: usize) -> T {
        self.reward[self.pair_index(state, action)]
    }

    pub fn rewards(&self) -> &[T] {
        &self.reward
    }

    /// Reward emitted on the transition `(s, a, s')`.
    pub fn transition_reward(&self, state: usize, action: usize, next_state: usize) -> T {
        match &self.transition_reward {
            Some(r) => r[self.pair_index(state, action) * self.num_states + next_state],
            None => self.reward(state, action),
        }
    }

    pub fn has_transition_rewards(&self) -> bool {
        self.transition_reward.is_some()
    }

    pub fn probability(&self, state: usize, action: usize, next_state: usize) -> T {
        self.transition[self.pair_index(state, action) * self.num_states + next_state]
    }

    /// Dense row `P(. | s, a)`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[T] {
        let base = self.pair_index(state, action) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    /// Nonzero entries of `P(. | s, a)` in increasing next-state order.
    pub fn support(&self, state: usize, action: usize) -> &[(usize, T)] {
        &self.support[self.pair_index(state, action)]
    }

    pub fn support_by_pair(&self, pair: usize) -> &[(usize, T)] {
        &self.support[pair]
    }

    /// A state is absorbing when every action self-loops with probability one.
    pub fn is_absorbing(&self, state: usize) -> bool {
        (0..self.num_actions).all(|a| {
            let sup = self.support(state, a);
            sup.len() == 1 && sup[0].0 == state
        })
    }
}

impl TabularMdp<f64> {
    pub fn to_document(&self) -> MdpDocument {
        MdpDocument {
            num_states: self.num_states,
            num_actions: self.num_actions,
            discount: self.discount,
            reward: self.reward.clone(),
            transition: self.transition.clone(),
            reward_bound: self.reward_bound,
            transition_reward: self.transition_reward.clone(),
        }
    }

    pub fn from_document(doc: MdpDocument) -> Result<Self, MdpError> {
        let MdpDocument {
            num_states,
            num_actions,
            discount,
            reward,
            transition,
            reward_bound,
            transition_reward,
        } = doc;
        let mdp = match transition_reward {
            Some(tr) => {
                let mdp = Self::from_transition_rewards(num_states, num_actions, transition, tr, discount)?;
                check_len("reward", reward.len(), num_states * num_actions)?;
                for (pair, (&given, &derived)) in reward.iter().zip(mdp.reward.iter()).enumerate() {
                    if (given - derived).abs() > 1e-9 * (1.0 + derived.abs()) {
                        return Err(MdpError::RewardExceedsBound {
                            state: pair / num_actions,
                            action: pair % num_actions,
                            reward: given,
                            bound: derived,
                        });
                    }
                }
                mdp
            }
            None => Self::new(num_states, num_actions, transition, reward, discount)?,
        };
        mdp.with_reward_bound(reward_bound)
    }

    pub fn to_json(&self) -> Result<String, MdpError> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// JSON form of a [`TabularMdp`].
///
/// `reward` is flat over `(s, a)` and `transition` flat over `(s, a, s')`,
/// both row-major. `transition_reward` is optional and, when present, has the
/// same layout as `transition`; `reward` must then equal its expectation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub reward: Vec<f64>,
    pub transition: Vec<f64>,
    pub reward_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_reward: Option<Vec<f64>>,
}

fn check_dims(num_states: usize, num_actions: usize) -> Result<(), MdpError> {
    if num_states == 0 || num_actions == 0 {
        return Err(MdpError::InvalidDimensions {
            num_states,
            num_actions,
        });
    }
    Ok(())
}

fn check_len(what: &'static str, found: usize, expected: usize) -> Result<(), MdpError> {
    if found != expected {
        return Err(MdpError::LengthMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Checks every [`TabularMdp`] invariant.
pub fn validate_mdp<T: Scalar>(mdp: &TabularMdp<T>) -> Result<(), MdpError> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    check_dims(ns, na)?;
    check_len("transition", mdp.transition.len(), ns * na * ns)?;
    check_len("reward", mdp.reward.len(), ns * na)?;
    let gamma = mdp.discount;
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(MdpError::DiscountOutOfRange(gamma.as_f64()));
    }
    if !mdp.reward_bound.is_finite() {
        return Err(MdpError::NonFinite("reward_bound"));
    }
    let tol = T::stochastic_tolerance(ns);
    for (pair, row) in mdp.transition.chunks(ns).enumerate() {
        let (s, a) = (pair / na, pair % na);
        let mut sum = T::zero();
        for (next, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                return Err(MdpError::NonFinite("transition"));
            }
            if p < T::zero() {
                return Err(MdpError::NegativeProbability {
                    state: s,
                    action: a,
                    next_state: next,
                    value: p.as_f64(),
                });
            }
            sum = sum + p;
        }
        if (sum - T::one()).abs() > tol {
            return Err(MdpError::RowNotStochastic {
                state: s,
                action: a,
                sum: sum.as_f64(),
            });
        }
        let r = mdp.reward[pair];
        if !r.is_finite() {
            return Err(MdpError::NonFinite("reward"));
        }
        // Expected rewards of transition-reward MDPs can carry rounding.
        if r.abs() > mdp.reward_bound + tol * (T::one() + mdp.reward_bound) {
            return Err(MdpError::RewardExceedsBound {
                state: s,
                action: a,
                reward: r.as_f64(),
                bound: mdp.reward_bound.as_f64(),
            });
        }
        if let Some(tr) = &mdp.transition_reward {
            for next in 0..ns {
                let rr = tr[pair * ns + next];
                if !rr.is_finite() {
                    return Err(MdpError::NonFinite("transition_reward"));
                }
                if row[next] > T::zero() && rr.abs() > mdp.reward_bound {
                    return Err(MdpError::RewardExceedsBound {
                        state: s,
                        action: a,
                        reward: rr.as_f64(),
                        bound: mdp.reward_bound.as_f64(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Dense real vector over state-action pairs, `q(s, a)` at `s * |A| + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<T> {
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, T::zero())
    }

    pub fn filled(num_states: usize, num_actions: usize, value: T) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<T>) -> Result<Self, MdpError> {
        check_dims(num_states, num_actions)?;
        if values.len() != num_states * num_actions {
            return Err(MdpError::SizeMismatch {
                expected: num_states * num_actions,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MdpError::NonFinite("q-table"));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    /// Builds a table from per-state rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, MdpError> {
        let na = rows.first().map_or(0, Vec::len);
        let values: Vec<T> = rows.iter().flatten().copied().collect();
        Self::from_values(rows.len(), na, values)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> T {
        self.values[state * self.num_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: T) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn row(&self, state: usize) -> &[T] {
        let base = state * self.num_actions;
        &self.values[base..base + self.num_actions]
    }

    /// Argmax over actions at `state`, lowest index on ties.
    #[inline]
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    #[inline]
    pub fn state_max(&self, state: usize) -> T {
        self.row(state).iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `max_a q(s, a)` for every state.
    pub fn state_values(&self) -> Vec<T> {
        (0..self.num_states).map(|s| self.state_max(s)).collect()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn policy(&self) -> GreedyPolicy {
        GreedyPolicy {
            actions: (0..self.num_states).map(|s| self.greedy_action(s)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions
    }

    pub fn check_shape(&self, other: &Self) -> Result<(), MdpError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(MdpError::SizeMismatch {
                expected: self.len(),
                found: other.len(),
            })
        }
    }

    pub fn check_mdp<U: Scalar>(&self, mdp: &TabularMdp<U>) -> Result<(), MdpError> {
        if self.num_states == mdp.num_states() && self.num_actions == mdp.num_actions() {
            Ok(())
        } else {
            Err(MdpError::SizeMismatch {
                expected: mdp.num_pairs(),
                found: self.len(),
            })
        }
    }

    /// Entrywise `self - other`.
    pub fn difference(&self, other: &Self) -> Result<Self, MdpError> {
        self.check_shape(other)?;
        Ok(Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a - *b)
                .collect(),
        })
    }

    /// Entrywise `self + other`.
    pub fn sum(&self, other: &Self) -> Result<Self, MdpError> {
        self.check_shape(other)?;
        Ok(Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a + *b)
                .collect(),
        })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|v| *v * factor).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> QTable<U> {
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_document(&self) -> QTableDocument {
        QTableDocument {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_document(doc: &QTableDocument) -> Result<Self, MdpError> {
        Self::from_values(
            doc.num_states,
            doc.num_actions,
            doc.values.iter().map(|v| T::lit(*v)).collect(),
        )
    }
}

/// JSON form of a [`QTable`]; `values` is flat row-major over `(s, a)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct QTableDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub values: Vec<f64>,
}

#[inline]
pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (a, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = a;
        }
    }
    best
}

/// Greedy action per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GreedyPolicy {
    actions: Vec<usize>,
}

impl GreedyPolicy {
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    /// Number of states where the two policies pick different actions.
    pub fn disagreements(&self, other: &GreedyPolicy) -> usize {
        self.actions
            .iter()
            .zip(&other.actions)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// `V(s) = target(s, argmax_a policy_source(s, a))`.
pub fn greedy_select<T: Scalar>(policy_source: &QTable<T>, target: &QTable<T>) -> Result<Vec<T>, MdpError> {
    policy_source.check_shape(target)?;
    Ok((0..target.num_states)
        .map(|s| target.get(s, policy_source.greedy_action(s)))
        .collect())
}

/// `(TQ)(s, a) = R(s, a) + gamma * sum_s' P(s'|s,a) max_a' q(s', a')`.
pub fn bellman_optimality<T: Scalar>(mdp: &TabularMdp<T>, q: &QTable<T>) -> Result<QTable<T>, MdpError> {
    q.check_mdp(mdp)?;
    let v = q.state_values();
    let mut out = QTable::zeros(mdp.num_states, mdp.num_actions);
    bellman_into(mdp, &v, &mut out.values);
    Ok(out)
}

fn bellman_into<T: Scalar>(mdp: &TabularMdp<T>, state_values: &[T], out: &mut [T]) {
    let gamma = mdp.discount;
    for (pair, slot) in out.iter_mut().enumerate() {
        let expected: T = mdp.support[pair]
            .iter()
            .map(|&(next, p)| p * state_values[next])
            .sum();
        *slot = mdp.reward[pair] + gamma * expected;
    }
}

/// `||T q - q||_inf`.
pub fn bellman_residual<T: Scalar>(mdp: &TabularMdp<T>, q: &QTable<T>) -> Result<T, MdpError> {
    let tq = bellman_optimality(mdp, q)?;
    inf_norm_distance(&tq, q)
}

/// Solves for `Q*` to within `tolerance` in sup norm.
///
/// Iterates `Q <- TQ` from zero until `||TQ - Q|| <= tolerance (1 - gamma) / gamma`
/// and returns `TQ`, whose distance to `Q*` is then at most `tolerance`.
pub fn value_iteration<T: Scalar>(mdp: &TabularMdp<T>, tolerance: T) -> Result<(QTable<T>, usize), MdpError> {
    value_iteration_capped(mdp, tolerance, VALUE_ITERATION_CAP)
}

pub fn value_iteration_capped<T: Scalar>(
    mdp: &TabularMdp<T>,
    tolerance: T,
    max_iterations: usize,
) -> Result<(QTable<T>, usize), MdpError> {
    if !(tolerance > T::zero()) {
        return Err(MdpError::InvalidTolerance(tolerance.as_f64()));
    }
    let gamma = mdp.discount;
    let threshold = tolerance * (T::one() - gamma) / gamma;
    let mut q = QTable::zeros(mdp.num_states, mdp.num_actions);
    let mut next = q.clone();
    let mut residual = T::infinity();
    for iteration in 1..=max_iterations {
        let v = q.state_values();
        bellman_into(mdp, &v, &mut next.values);
        residual = q
            .values
            .iter()
            .zip(&next.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        std::mem::swap(&mut q, &mut next);
        if residual <= threshold {
            return Ok((q, iteration));
        }
    }
    Err(MdpError::NonConvergence {
        iterations: max_iterations,
        residual: residual.as_f64(),
    })
}

/// `max |a - b|` over entries.
pub fn inf_norm_distance<T: Scalar>(a: &QTable<T>, b: &QTable<T>) -> Result<T, MdpError> {
    a.check_shape(b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn single_state(reward: f64) -> TabularMdp<f64> {
        TabularMdp::new(1, 1, vec![1.0], vec![reward], 0.9).unwrap()
    }

    /// s0 --a0 (r=0)--> s1, s1 absorbing with reward 1; one action.
    fn chain() -> TabularMdp<f64> {
        TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0], 0.9).unwrap()
    }

    #[test]
    fn identity_single_state_is_valid() {
        assert!(validate_mdp(&single_state(0.0)).is_ok());
    }

    #[test]
    fn substochastic_row_rejected() {
        let err = TabularMdp::new(2, 1, vec![0.5, 0.4, 0.0, 1.0], vec![0.0, 0.0], 0.9).unwrap_err();
        match err {
            MdpError::RowNotStochastic { state, action, sum } => {
                assert_eq!((state, action), (0, 0));
                assert_abs_diff_eq!(sum, 0.9, epsilon = 1e-12);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_probability_rejected() {
        let err = TabularMdp::new(2, 1, vec![1.5, -0.5, 0.0, 1.0], vec![0.0, 0.0], 0.9).unwrap_err();
        assert!(matches!(
            err,
            MdpError::NegativeProbability {
                state: 0,
                action: 0,
                next_state: 1,
                ..
            }
        ));
    }

    #[test]
    fn discount_boundaries_rejected() {
        for g in [1.0, 0.0, 1.5] {
            let err = TabularMdp::new(1, 1, vec![1.0], vec![0.0], g).unwrap_err();
            assert!(matches!(err, MdpError::DiscountOutOfRange(_)));
        }
    }

    #[test]
    fn reward_bound_must_cover_rewards() {
        let err = single_state(1.0).with_reward_bound(0.5).unwrap_err();
        assert!(matches!(err, MdpError::RewardExceedsBound { .. }));
        assert_eq!(single_state(-2.0).reward_bound(), 2.0);
    }

    #[test]
    fn greedy_select_examples() {
        let z = QTable::<f64>::zeros(2, 2);
        assert_eq!(greedy_select(&z, &z).unwrap(), vec![0.0, 0.0]);
        let src = QTable::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(greedy_select(&src, &src).unwrap(), vec![2.0, 3.0]);
        let tgt = QTable::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        assert_eq!(greedy_select(&src, &tgt).unwrap(), vec![6.0, 7.0]);
        let bad = QTable::<f64>::zeros(3, 2);
        assert!(matches!(
            greedy_select(&src, &bad),
            Err(MdpError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn greedy_select_matches_enumeration_on_2x2() {
        // Exhaustive check: every ordering pattern of a 2-action row.
        let vals = [-1.0, 0.0, 1.0];
        for &a in &vals {
            for &b in &vals {
                let src = QTable::from_rows(&[vec![a, b]]).unwrap();
                let tgt = QTable::from_rows(&[vec![10.0, 20.0]]).unwrap();
                let expected = if b > a { 20.0 } else { 10.0 };
                assert_eq!(greedy_select(&src, &tgt).unwrap(), vec![expected]);
            }
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let q = QTable::from_rows(&[vec![1.0, 3.0, 3.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(q.policy().actions(), &[1, 0]);
    }

    #[test]
    fn bellman_single_state() {
        let mdp = single_state(1.0);
        let tq = bellman_optimality(&mdp, &QTable::zeros(1, 1)).unwrap();
        assert_eq!(tq.get(0, 0), 1.0);
        let tq = bellman_optimality(&mdp, &QTable::filled(1, 1, 10.0)).unwrap();
        assert_abs_diff_eq!(tq.get(0, 0), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn bellman_chain_fixed_point() {
        let mdp = chain();
        let q_star = QTable::from_values(2, 1, vec![9.0, 10.0]).unwrap();
        let tq = bellman_optimality(&mdp, &q_star).unwrap();
        assert_abs_diff_eq!(tq.get(0, 0), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tq.get(1, 0), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn value_iteration_examples() {
        let (q, iters) = value_iteration(&single_state(1.0), 1e-10).unwrap();
        assert!(iters > 0);
        assert_abs_diff_eq!(q.get(0, 0), 10.0, epsilon = 1e-10);

        let zero = TabularMdp::new(
            2,
            2,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.3, 0.7],
            vec![0.0; 4],
            0.9,
        )
        .unwrap();
        let (q, _) = value_iteration(&zero, 1e-10).unwrap();
        assert_eq!(q.max_abs(), 0.0);

        // Brute-force oracle: plain iteration far past convergence.
        let mdp = chain();
        let mut brute = QTable::zeros(2, 1);
        for _ in 0..2000 {
            brute = bellman_optimality(&mdp, &brute).unwrap();
        }
        let (q, _) = value_iteration(&mdp, 1e-10).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 9.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.get(1, 0), 10.0, epsilon = 1e-10);
        assert!(inf_norm_distance(&q, &brute).unwrap() <= 1e-10);
    }

    #[test]
    fn value_iteration_rejects_bad_tolerance_and_cap() {
        assert!(matches!(
            value_iteration(&single_state(1.0), 0.0),
            Err(MdpError::InvalidTolerance(_))
        ));
        assert!(matches!(
            value_iteration_capped(&single_state(1.0), 1e-12, 3),
            Err(MdpError::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn inf_norm_examples() {
        let a = QTable::from_values(1, 2, vec![1.0, -3.0]).unwrap();
        let b = QTable::zeros(1, 2);
        assert_eq!(inf_norm_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(inf_norm_distance(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn f32_instantiation_solves_geometric_series() {
        let mdp = single_state(1.0).cast::<f32>().unwrap();
        let (q, _) = value_iteration(&mdp, 1e-3f32).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() <= 1e-3);
    }

    #[test]
    fn json_round_trip_keeps_transition_rewards() {
        let mdp = TabularMdp::from_transition_rewards(
            2,
            1,
            vec![0.5, 0.5, 0.0, 1.0],
            vec![1.0, -1.0, 0.0, 0.0],
            0.9,
        )
        .unwrap();
        assert_eq!(mdp.reward(0, 0), 0.0);
        let back = TabularMdp::from_json(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(back.to_document(), mdp.to_document());
        assert_eq!(back.transition_reward(0, 0, 1), -1.0);
    }

    prop_compose! {
        fn arb_mdp()(ns in 1usize..5, na in 1usize..4, gamma in 0.05f64..0.99)
            (raw in prop::collection::vec(0.01f64..1.0, ns * na * ns),
             reward in prop::collection::vec(-1.0f64..1.0, ns * na),
             ns in Just(ns), na in Just(na), gamma in Just(gamma)) -> TabularMdp<f64> {
            let mut p = raw;
            for row in p.chunks_mut(ns) {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
            TabularMdp::new(ns, na, p, reward, gamma).unwrap()
        }
    }

    fn arb_table(mdp: &TabularMdp<f64>) -> impl Strategy<Value = QTable<f64>> {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        prop::collection::vec(-20.0f64..20.0, ns * na)
            .prop_map(move |v| QTable::from_values(ns, na, v).unwrap())
    }

    proptest! {
        #[test]
        fn bellman_is_gamma_contraction(
            (mdp, q1, q2) in arb_mdp().prop_flat_map(|m| {
                let t1 = arb_table(&m);
                let t2 = arb_table(&m);
                (Just(m), t1, t2)
            })
        ) {
            let d_in = inf_norm_distance(&q1, &q2).unwrap();
            let t1 = bellman_optimality(&mdp, &q1).unwrap();
            let t2 = bellman_optimality(&mdp, &q2).unwrap();
            let d_out = inf_norm_distance(&t1, &t2).unwrap();
            prop_assert!(d_out <= mdp.discount() * d_in + 1e-12);
        }

        #[test]
        fn oracle_is_fixed_point_and_bounded(mdp in arb_mdp()) {
            let tol = 1e-10;
            let (q, _) = value_iteration(&mdp, tol).unwrap();
            prop_assert!(bellman_residual(&mdp, &q).unwrap() <= tol);
            let bound = mdp.reward_bound() / (1.0 - mdp.discount());
            prop_assert!(q.max_abs() <= bound + tol);
        }

        #[test]
        fn triangle_inequality(
            a in prop::collection::vec(-5.0f64..5.0, 6),
            b in prop::collection::vec(-5.0f64..5.0, 6),
            c in prop::collection::vec(-5.0f64..5.0, 6),
        ) {
            let (a, b, c) = (
                QTable::from_values(3, 2, a).unwrap(),
                QTable::from_values(3, 2, b).unwrap(),
                QTable::from_values(3, 2, c).unwrap(),
            );
            let ab = inf_norm_distance(&a, &b).unwrap();
            let bc = inf_norm_distance(&b, &c).unwrap();
            let ac = inf_norm_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab, inf_norm_distance(&b, &a).unwrap());
        }

        #[test]
        fn greedy_selection_scale_invariant(
            v in prop::collection::vec(-5.0f64..5.0, 8),
            c in 0.01f64..100.0,
        ) {
            let q = QTable::from_values(2, 4, v).unwrap();
            prop_assert_eq!(q.policy(), q.scaled(c).policy());
        }
    }
}
