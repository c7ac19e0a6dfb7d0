//! Synchronous model-based Q-learning, the model-free Q-learning baseline,
//! and greedy-policy evaluation.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EpisodicEnv, Sampler, SamplerSpec, SamplingMode, Transition, RNG_ID};
use crate::estimation::{EmpiricalModel, EstimationError};
use crate::mdp::{inf_norm_distance, MdpError, QTable, TabularMdp};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("table has {found} entries, model has {expected} pairs")]
    SizeMismatch { expected: usize, found: usize },
    #[error("transition (s={state}, a={action}, s'={next_state}) out of range")]
    IndexOutOfRange {
        state: usize,
        action: usize,
        next_state: usize,
    },
    #[error("iterate bound violated at step {step}: ||Q||_inf = {value} > {bound}")]
    IterateBound { step: u64, value: f64, bound: f64 },
    #[error("at least one evaluation episode is required")]
    NoEpisodes,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Syncmbq,
    Qlearning,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Syncmbq => "syncmbq",
            Algorithm::Qlearning => "qlearning",
        }
    }
}

/// Training length, in environment steps or completed episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Steps(u64),
    Episodes(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub step_size: f64,
    pub discount: f64,
    /// Data-collection length `m`: the first `m` steps only update the model.
    pub warmup_steps: u64,
    pub budget: Budget,
    pub sampler: SamplerSpec,
    pub algorithm: Algorithm,
    pub q_init: f64,
    pub log_stride: u64,
    /// Episode truncation length for episodic sources.
    pub max_episode_len: u64,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::InvalidConfig(m));
        if !(self.step_size > 0.0 && self.step_size < 1.0) {
            return bad(format!("step_size {} outside (0, 1)", self.step_size));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount {} outside (0, 1)", self.discount));
        }
        match self.budget {
            Budget::Steps(0) | Budget::Episodes(0) => return bad("budget must be positive".into()),
            _ => {}
        }
        if self.log_stride == 0 {
            return bad("log_stride must be at least 1".into());
        }
        if self.max_episode_len == 0 {
            return bad("max_episode_len must be at least 1".into());
        }
        if !self.q_init.is_finite() {
            return bad("q_init must be finite".into());
        }
        self.sampler.validate()?;
        Ok(())
    }

    /// FNV-1a of the canonical JSON encoding, recorded in run metadata.
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// What the learner draws transitions from.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    /// i.i.d. sampling from a known MDP.
    Iid(&'a TabularMdp<f64>),
    /// An episodic environment; i.i.d. samplers draw from its tabular view.
    Episodic(&'a dyn EpisodicEnv),
}

impl<'a> Source<'a> {
    pub fn mdp(&self) -> &'a TabularMdp<f64> {
        match self {
            Source::Iid(m) => m,
            Source::Episodic(e) => e.mdp(),
        }
    }
}

/// One logged step of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub inf_error: Option<f64>,
    /// Return of the most recently completed episode, if any.
    pub episode_return: Option<f64>,
    pub all_visited: bool,
    pub q_max_abs: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub end_step: u64,
    pub length: u64,
    pub episode_return: f64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub rng: String,
    pub algorithm: Algorithm,
    pub config_hash: u64,
}

#[derive(Clone, Debug)]
pub struct RunTrace<T> {
    pub records: Vec<TraceRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub final_q: QTable<T>,
    pub model: Option<EmpiricalModel<T>>,
    pub metadata: RunMetadata,
    /// First step after which every state-action pair had been visited.
    pub visitation_step: Option<u64>,
    pub total_steps: u64,
}

/// In-place synchronous update
/// `q <- (1 - alpha) q + alpha (R̂ + gamma P̂ max_a' q)`, every entry at once.
///
/// `terminal` marks states whose bootstrap value is taken as zero; `scratch`
/// is reused for the per-state maxima.
pub fn syncmbq_update<T: Scalar>(
    q: &mut QTable<T>,
    model: &EmpiricalModel<T>,
    alpha: T,
    gamma: T,
    terminal: Option<&[bool]>,
    scratch: &mut Vec<T>,
) -> Result<(), LearnerError> {
    if q.num_states() != model.num_states() || q.num_actions() != model.num_actions() {
        return Err(LearnerError::SizeMismatch {
            expected: model.num_pairs(),
            found: q.len(),
        });
    }
    scratch.clear();
    scratch.extend((0..q.num_states()).map(|s| q.state_max(s)));
    if let Some(mask) = terminal {
        for (v, t) in scratch.iter_mut().zip(mask) {
            if *t {
                *v = T::zero();
            }
        }
    }
    let keep = T::one() - alpha;
    for (pair, entry) in q.values_mut().iter_mut().enumerate() {
        let target = model.rhat_pair(pair) + gamma * model.expected_next(pair, scratch);
        *entry = keep * *entry + alpha * target;
    }
    Ok(())
}

/// `Q_{k+1} = Q_k + alpha (R̂_k + gamma P̂_k Π^{Q_k} Q_k - Q_k)`.
pub fn syncmbq_step<T: Scalar>(
    q: &QTable<T>,
    model: &EmpiricalModel<T>,
    alpha: T,
    gamma: T,
) -> Result<QTable<T>, LearnerError> {
    let mut next = q.clone();
    syncmbq_update(&mut next, model, alpha, gamma, None, &mut Vec::new())?;
    Ok(next)
}

/// Single-sample update of entry `(s, a)`; the bootstrap term is dropped on
/// terminal transitions.
pub fn qlearning_update<T: Scalar>(
    q: &mut QTable<T>,
    t: &Transition,
    alpha: T,
    gamma: T,
) -> Result<(), LearnerError> {
    if t.state >= q.num_states() || t.action >= q.num_actions() || t.next_state >= q.num_states() {
        return Err(LearnerError::IndexOutOfRange {
            state: t.state,
            action: t.action,
            next_state: t.next_state,
        });
    }
    let bootstrap = if t.terminal {
        T::zero()
    } else {
        q.state_max(t.next_state)
    };
    let old = q.get(t.state, t.action);
    let target = T::lit(t.reward) + gamma * bootstrap;
    q.set(t.state, t.action, old + alpha * (target - old));
    Ok(())
}

pub fn qlearning_step<T: Scalar>(
    q: &QTable<T>,
    t: &Transition,
    alpha: T,
    gamma: T,
) -> Result<QTable<T>, LearnerError> {
    let mut next = q.clone();
    qlearning_update(&mut next, t, alpha, gamma)?;
    Ok(next)
}

enum Agent<T> {
    Sync {
        model: EmpiricalModel<T>,
        terminal: Option<Vec<bool>>,
        scratch: Vec<T>,
    },
    Q,
}

/// Runs SyncMBQ regardless of `config.algorithm`.
pub fn run_syncmbq<T: Scalar>(
    source: Source<'_>,
    config: &TrainerConfig,
    oracle: Option<&QTable<T>>,
) -> Result<RunTrace<T>, LearnerError> {
    let mut config = config.clone();
    config.algorithm = Algorithm::Syncmbq;
    train(source, &config, oracle)
}

/// Trains with the configured algorithm and returns the logged trace.
///
/// SyncMBQ records every transition into its model and, once more than
/// `warmup_steps` transitions have been seen, applies the synchronous update.
/// Q-learning ignores the warmup.
pub fn train<T: Scalar>(
    source: Source<'_>,
    config: &TrainerConfig,
    oracle: Option<&QTable<T>>,
) -> Result<RunTrace<T>, LearnerError> {
    config.validate()?;
    let mdp = source.mdp();
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if let Some(o) = oracle {
        o.check_mdp(mdp)?;
    }
    let alpha = T::lit(config.step_size);
    let gamma = T::lit(config.discount);
    let iterate_bound = mdp
        .reward_bound()
        .max(config.q_init.abs() * (1.0 - config.discount))
        / (1.0 - config.discount);
    let check_bound = config.q_init.abs() <= mdp.reward_bound() / (1.0 - config.discount);

    let episodic = match (&source, &config.sampler.mode) {
        (Source::Episodic(env), SamplingMode::EpsilonGreedy { .. }) => Some(*env),
        (Source::Iid(_), SamplingMode::EpsilonGreedy { .. }) => {
            return Err(LearnerError::InvalidConfig(
                "epsilon-greedy sampling needs an episodic environment".into(),
            ))
        }
        _ => None,
    };

    let mut q = QTable::filled(ns, na, T::lit(config.q_init));
    let mut agent = match config.algorithm {
        Algorithm::Syncmbq => Agent::Sync {
            model: EmpiricalModel::new(ns, na),
            terminal: episodic.map(|e| e.terminal_mask()),
            scratch: Vec::with_capacity(ns),
        },
        Algorithm::Qlearning => Agent::Q,
    };
    let mut sampler = Sampler::new(config.sampler.clone())?;
    let mut visits = vec![false; ns * na];
    let mut unvisited = ns * na;
    let mut visitation_step = None;

    let mut records = Vec::new();
    let mut episodes = Vec::new();
    let mut last_return = None;
    let mut state = episodic.map_or(0, |e| sampler.reset_episode(e));
    let (mut ep_len, mut ep_return) = (0u64, 0.0f64);
    let started = Instant::now();
    let mut step = 0u64;

    loop {
        match config.budget {
            Budget::Steps(n) if step >= n => break,
            Budget::Episodes(n) if episodes.len() as u64 >= n => break,
            _ => {}
        }
        let t = match episodic {
            Some(env) => sampler.egreedy_sample(env, &q, &mut state)?,
            None => sampler.iid_sample(mdp)?,
        };
        step += 1;
        let pair = t.state * na + t.action;
        if !visits[pair] {
            visits[pair] = true;
            unvisited -= 1;
            if unvisited == 0 {
                visitation_step = Some(step);
            }
        }

        match &mut agent {
            Agent::Sync {
                model,
                terminal,
                scratch,
            } => {
                model.record_transition(&t)?;
                if model.total_steps() > config.warmup_steps {
                    syncmbq_update(&mut q, model, alpha, gamma, terminal.as_deref(), scratch)?;
                }
            }
            Agent::Q => qlearning_update(&mut q, &t, alpha, gamma)?,
        }

        if let Some(env) = episodic {
            ep_len += 1;
            ep_return += t.reward;
            let truncated = !t.terminal && ep_len >= config.max_episode_len;
            if t.terminal || truncated {
                episodes.push(EpisodeRecord {
                    episode: episodes.len() as u64 + 1,
                    end_step: step,
                    length: ep_len,
                    episode_return: ep_return,
                    success: t.terminal && env.is_success(t.next_state),
                });
                last_return = Some(ep_return);
                if truncated {
                    state = sampler.reset_episode(env);
                }
                ep_len = 0;
                ep_return = 0.0;
            }
        }

        if step.is_multiple_of(config.log_stride) {
            let q_max_abs = q.max_abs().as_f64();
            if check_bound && q_max_abs > iterate_bound * (1.0 + 1e-12) {
                return Err(LearnerError::IterateBound {
                    step,
                    value: q_max_abs,
                    bound: iterate_bound,
                });
            }
            records.push(TraceRecord {
                step,
                inf_error: oracle
                    .map(|o| inf_norm_distance(&q, o).map(|d| d.as_f64()))
                    .transpose()?,
                episode_return: last_return,
                all_visited: unvisited == 0,
                q_max_abs,
                elapsed_secs: started.elapsed().as_secs_f64(),
            });
        }
    }

    Ok(RunTrace {
        records,
        episodes,
        final_q: q,
        model: match agent {
            Agent::Sync { model, .. } => Some(model),
            Agent::Q => None,
        },
        metadata: RunMetadata {
            seed: config.sampler.seed,
            rng: RNG_ID.to_string(),
            algorithm: config.algorithm,
            config_hash: config.fingerprint(),
        },
        visitation_step,
        total_steps: step,
    })
}

/// Fraction of `episodes` greedy rollouts of `q` that end in a success
/// terminal. Rollouts longer than `max_episode_len` count as failures.
pub fn evaluate_greedy<T: Scalar>(
    env: &dyn EpisodicEnv,
    q: &QTable<T>,
    episodes: u64,
    max_episode_len: u64,
    seed: u64,
) -> Result<f64, LearnerError> {
    if episodes == 0 {
        return Err(LearnerError::NoEpisodes);
    }
    q.check_mdp(env.mdp())?;
    let policy = q.policy();
    let mut rng = crate::env::seeded_rng(seed);
    let mut successes = 0u64;
    for _ in 0..episodes {
        let mut s = env.reset(&mut rng);
        for _ in 0..max_episode_len {
            let out = env.step(s, policy.action(s), &mut rng);
            if out.terminal {
                if env.is_success(out.next_state) {
                    successes += 1;
                }
                break;
            }
            s = out.next_state;
        }
    }
    Ok(successes as f64 / episodes as f64)
}
