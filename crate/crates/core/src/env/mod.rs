//! Sampling sources: the random-MDP generator, FrozenLake 8x8, Taxi, and the
//! i.i.d. and epsilon-greedy samplers that turn them into transition streams.

mod frozenlake;
mod random;
mod taxi;

pub use frozenlake::{frozenlake8x8, FrozenLake, FROZENLAKE_8X8_MAP};
pub use random::{random_mdp, RandomMdpEnv};
pub use taxi::{taxi, Taxi, TAXI_MAP};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{MdpError, QTable, TabularMdp};
use crate::scalar::Scalar;

/// The one generator family used for every stochastic draw.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Identifier recorded in run metadata next to the seed.
pub const RNG_ID: &str = "chacha8";

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid dimensions: {num_states} states, {num_actions} actions")]
    InvalidDimensions { num_states: usize, num_actions: usize },
    #[error("invalid sampling distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution has {found} entries, expected {expected}")]
    DistributionSize { expected: usize, found: usize },
    #[error("epsilon {0} outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("sampler is in {found} mode, operation needs {expected} mode")]
    ModeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("state {state} or action {action} out of range")]
    IndexOutOfRange { state: usize, action: usize },
    #[error("unknown environment {0:?}")]
    UnknownEnvironment(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// How the sampler picks state-action pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// `(s, a) ~ d`, `s' ~ P(. | s, a)`.
    Iid { distribution: Vec<f64> },
    /// Episodic behavior policy over an [`EpisodicEnv`].
    EpsilonGreedy {
        epsilon: f64,
        #[serde(default)]
        tie_break: TieBreak,
    },
}

/// How the behavior policy resolves equal greedy values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest action index, matching [`QTable::greedy_action`].
    #[default]
    Lowest,
    /// Uniform over the tied actions.
    Random,
}

impl SamplingMode {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingMode::Iid { .. } => "iid",
            SamplingMode::EpsilonGreedy { .. } => "epsilon_greedy",
        }
    }

    pub fn uniform(num_pairs: usize) -> Self {
        SamplingMode::Iid {
            distribution: vec![1.0 / num_pairs as f64; num_pairs],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    #[serde(flatten)]
    pub mode: SamplingMode,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn iid(distribution: Vec<f64>, seed: u64) -> Self {
        Self {
            mode: SamplingMode::Iid { distribution },
            seed,
        }
    }

    pub fn uniform(num_pairs: usize, seed: u64) -> Self {
        Self {
            mode: SamplingMode::uniform(num_pairs),
            seed,
        }
    }

    pub fn epsilon_greedy(epsilon: f64, seed: u64) -> Self {
        Self {
            mode: SamplingMode::EpsilonGreedy {
                epsilon,
                tie_break: TieBreak::Lowest,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match &self.mode {
            SamplingMode::Iid { distribution } => {
                if distribution.is_empty() {
                    return Err(EnvError::InvalidDistribution("empty".into()));
                }
                if let Some(x) = distribution.iter().find(|x| !x.is_finite() || **x < 0.0) {
                    return Err(EnvError::InvalidDistribution(format!("entry {x}")));
                }
                let sum: f64 = distribution.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(EnvError::InvalidDistribution(format!("sums to {sum}")));
                }
                Ok(())
            }
            SamplingMode::EpsilonGreedy { epsilon, .. } => {
                if (0.0..=1.0).contains(epsilon) {
                    Ok(())
                } else {
                    Err(EnvError::InvalidEpsilon(*epsilon))
                }
            }
        }
    }

    /// Smallest sampling mass; `None` outside i.i.d. mode.
    pub fn d_min(&self) -> Option<f64> {
        match &self.mode {
            SamplingMode::Iid { distribution } => {
                Some(distribution.iter().copied().fold(f64::INFINITY, f64::min))
            }
            SamplingMode::EpsilonGreedy { .. } => None,
        }
    }
}

/// One observed `(s, a, s', r)` tuple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
    pub step_index: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// An episodic environment with an exact tabular view of its dynamics.
pub trait EpisodicEnv: Send + Sync {
    fn name(&self) -> &'static str;

    /// Dynamics and expected rewards as a [`TabularMdp`]; terminal states are
    /// absorbing with zero reward.
    fn mdp(&self) -> &TabularMdp<f64>;

    fn reset(&self, rng: &mut SimRng) -> usize;

    fn step(&self, state: usize, action: usize, rng: &mut SimRng) -> StepOutcome;

    fn is_terminal(&self, state: usize) -> bool;

    /// Whether reaching `state` counts as a successful episode.
    fn is_success(&self, state: usize) -> bool;

    /// Support of the reset distribution.
    fn start_states(&self) -> &[usize];

    fn num_states(&self) -> usize {
        self.mdp().num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp().num_actions()
    }

    fn terminal_mask(&self) -> Vec<bool> {
        (0..self.num_states()).map(|s| self.is_terminal(s)).collect()
    }
}

/// Looks up a benchmark environment by its CLI name.
pub fn by_name(name: &str) -> Result<Box<dyn EpisodicEnv>, EnvError> {
    match name {
        "frozenlake8x8" => Ok(Box::new(frozenlake8x8())),
        "taxi" => Ok(Box::new(taxi())),
        other => Err(EnvError::UnknownEnvironment(other.to_string())),
    }
}

/// Draws an index from a sparse distribution given `u` in `[0, 1)`.
pub(crate) fn sample_support(support: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(idx, p) in support {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    support.last().expect("empty support").0
}

/// Stateful transition stream for one [`SamplerSpec`].
///
/// Owns its generator; successive calls advance the seeded stream
/// deterministically.
#[derive(Clone, Debug)]
pub struct Sampler {
    spec: SamplerSpec,
    rng: SimRng,
    step: u64,
    cumulative: Vec<f64>,
}

impl Sampler {
    pub fn new(spec: SamplerSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        let cumulative = match &spec.mode {
            SamplingMode::Iid { distribution } => distribution
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect(),
            SamplingMode::EpsilonGreedy { .. } => Vec::new(),
        };
        Ok(Self {
            rng: seeded_rng(spec.seed),
            spec,
            step: 0,
            cumulative,
        })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    fn draw_pair(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let idx = self.cumulative.partition_point(|c| *c <= u);
        if idx < self.cumulative.len() {
            return idx;
        }
        // u beyond the rounded total: fall back to the last pair with mass.
        let mut last = self.cumulative.len() - 1;
        while last > 0 && self.cumulative[last] == self.cumulative[last - 1] {
            last -= 1;
        }
        last
    }

    /// `(s, a) ~ d`, `s' ~ P(. | s, a)`, reward from the MDP's reward model.
    pub fn iid_sample(&mut self, mdp: &TabularMdp<f64>) -> Result<Transition, EnvError> {
        if !matches!(self.spec.mode, SamplingMode::Iid { .. }) {
            return Err(EnvError::ModeMismatch {
                expected: "iid",
                found: self.spec.mode.name(),
            });
        }
        if self.cumulative.len() != mdp.num_pairs() {
            return Err(EnvError::DistributionSize {
                expected: mdp.num_pairs(),
                found: self.cumulative.len(),
            });
        }
        let pair = self.draw_pair();
        let (state, action) = (pair / mdp.num_actions(), pair % mdp.num_actions());
        let u: f64 = self.rng.random();
        let next_state = sample_support(mdp.support_by_pair(pair), u);
        self.step += 1;
        Ok(Transition {
            state,
            action,
            next_state,
            reward: mdp.transition_reward(state, action, next_state),
            terminal: false,
            step_index: self.step,
        })
    }

    /// One epsilon-greedy step from `current_state`. On a terminal transition
    /// the environment is reset and `current_state` holds the new start.
    pub fn egreedy_sample<T: Scalar>(
        &mut self,
        env: &dyn EpisodicEnv,
        q: &QTable<T>,
        current_state: &mut usize,
    ) -> Result<Transition, EnvError> {
        let (epsilon, tie_break) = match self.spec.mode {
            SamplingMode::EpsilonGreedy { epsilon, tie_break } => (epsilon, tie_break),
            _ => {
                return Err(EnvError::ModeMismatch {
                    expected: "epsilon_greedy",
                    found: self.spec.mode.name(),
                })
            }
        };
        let state = *current_state;
        if state >= env.num_states() {
            return Err(EnvError::IndexOutOfRange { state, action: 0 });
        }
        let explore: f64 = self.rng.random();
        let action = if explore < epsilon {
            self.rng.random_range(0..env.num_actions())
        } else {
            match tie_break {
                TieBreak::Lowest => q.greedy_action(state),
                TieBreak::Random => {
                    let row = q.row(state);
                    let best = q.state_max(state);
                    let ties = row.iter().filter(|v| **v == best).count();
                    let pick = if ties > 1 {
                        self.rng.random_range(0..ties)
                    } else {
                        0
                    };
                    row.iter()
                        .enumerate()
                        .filter(|(_, v)| **v == best)
                        .nth(pick)
                        .map_or(0, |(a, _)| a)
                }
            }
        };
        let out = env.step(state, action, &mut self.rng);
        self.step += 1;
        *current_state = if out.terminal {
            env.reset(&mut self.rng)
        } else {
            out.next_state
        };
        Ok(Transition {
            state,
            action,
            next_state: out.next_state,
            reward: out.reward,
            terminal: out.terminal,
            step_index: self.step,
        })
    }

    /// Starts a new episode (used on truncation).
    pub fn reset_episode(&mut self, env: &dyn EpisodicEnv) -> usize {
        env.reset(&mut self.rng)
    }
}
