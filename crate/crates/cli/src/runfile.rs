//! Run files: JSON experiment descriptions.

use std::path::{Path, PathBuf};

use mbq_core::complexity::data_collection_length;
use mbq_core::env::{by_name, random_mdp, RandomMdpEnv, TieBreak};
use mbq_core::{
    Algorithm, Budget, EpisodicEnv, SamplerSpec, SamplingMode, Source, TabularMdp, TrainerConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Seeded random MDP (last state terminal).
    Random {
        num_states: usize,
        num_actions: usize,
        seed: u64,
    },
    #[serde(rename = "frozenlake8x8")]
    FrozenLake8x8,
    Taxi,
    /// An MDP document on disk, resolved relative to the run file.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    /// i.i.d. with uniform mass over all state-action pairs.
    Uniform,
    Iid {
        distribution: Vec<f64>,
    },
    EpsilonGreedy {
        epsilon: f64,
        #[serde(default)]
        tie_break: TieBreak,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    #[serde(default = "default_eval_episodes")]
    pub episodes: u64,
    pub max_episode_len: u64,
}

fn default_eval_episodes() -> u64 {
    2000
}

fn default_discount() -> f64 {
    0.9
}

fn default_delta() -> f64 {
    0.1
}

fn default_one() -> u64 {
    1
}

fn default_window() -> usize {
    1
}

fn default_max_episode_len() -> u64 {
    200
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Evaluation rollouts for seed `s` use generator seed `s + EVAL_SEED_OFFSET`.
pub const EVAL_SEED_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub environment: EnvironmentSpec,
    pub algorithm: Algorithm,
    pub step_size: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// Data-collection length; derived from `delta` and the sampling
    /// distribution when absent and sampling is i.i.d.
    #[serde(default)]
    pub warmup_steps: Option<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub budget: Budget,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub q_init: f64,
    #[serde(default = "default_one")]
    pub log_stride: u64,
    #[serde(default = "default_max_episode_len")]
    pub max_episode_len: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub evaluation: Option<EvaluationSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_window")]
    pub moving_average_window: usize,
    /// Directory that relative `File` paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut run: RunFile = serde_json::from_str(&text)?;
        run.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.moving_average_window == 0 {
            return Err(CliError::Config(
                "moving_average_window must be at least 1".into(),
            ));
        }
        if let Some(e) = &self.evaluation {
            if e.episodes == 0 || e.max_episode_len == 0 {
                return Err(CliError::Config(
                    "evaluation needs positive episodes and max_episode_len".into(),
                ));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Config(format!("delta {} outside (0, 1)", self.delta)));
        }
        Ok(())
    }

    pub fn with_seeds(mut self, seeds: Option<Vec<u64>>) -> Result<Self, CliError> {
        if let Some(s) = seeds {
            self.seeds = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn load_environment(&self) -> Result<Environment, CliError> {
        let exact = |mdp: TabularMdp<f64>| -> Result<Environment, CliError> {
            let mdp = mdp.with_discount(self.discount)?;
            Ok(Environment {
                env: Box::new(RandomMdpEnv::new(mdp.clone())),
                mdp,
                exact: true,
            })
        };
        match &self.environment {
            EnvironmentSpec::Random {
                num_states,
                num_actions,
                seed,
            } => exact(random_mdp(*num_states, *num_actions, *seed)?),
            EnvironmentSpec::File { path } => {
                let path = self.base_dir.join(path);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                exact(TabularMdp::from_json(&text)?)
            }
            EnvironmentSpec::FrozenLake8x8 | EnvironmentSpec::Taxi => {
                let name = match self.environment {
                    EnvironmentSpec::Taxi => "taxi",
                    _ => "frozenlake8x8",
                };
                let env = by_name(name)?;
                let mdp = env.mdp().clone().with_discount(self.discount)?;
                Ok(Environment {
                    env,
                    mdp,
                    exact: false,
                })
            }
        }
    }

    fn sampling_mode(&self, num_pairs: usize) -> SamplingMode {
        match &self.sampling {
            SamplingSpec::Uniform => SamplingMode::uniform(num_pairs),
            SamplingSpec::Iid { distribution } => SamplingMode::Iid {
                distribution: distribution.clone(),
            },
            SamplingSpec::EpsilonGreedy { epsilon, tie_break } => SamplingMode::EpsilonGreedy {
                epsilon: *epsilon,
                tie_break: *tie_break,
            },
        }
    }

    /// Trainer configuration for one seed.
    pub fn trainer_config(&self, num_pairs: usize, seed: u64) -> Result<TrainerConfig, CliError> {
        let sampler = SamplerSpec {
            mode: self.sampling_mode(num_pairs),
            seed,
        };
        sampler.validate()?;
        let warmup_steps = match (self.warmup_steps, self.algorithm, sampler.d_min()) {
            (Some(m), _, _) => m,
            (None, Algorithm::Syncmbq, Some(d_min)) => data_collection_length(d_min, num_pairs, self.delta)?,
            _ => 0,
        };
        let config = TrainerConfig {
            step_size: self.step_size,
            discount: self.discount,
            warmup_steps,
            budget: self.budget,
            sampler,
            algorithm: self.algorithm,
            q_init: self.q_init,
            log_stride: self.log_stride,
            max_episode_len: self.max_episode_len,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        override_dir.map_or_else(|| self.output_dir.clone(), Path::to_path_buf)
    }
}

/// A loaded environment with its tabular ground truth.
pub struct Environment {
    pub env: Box<dyn EpisodicEnv>,
    /// Tabular view with the run's discount.
    pub mdp: TabularMdp<f64>,
    /// Whether the MDP is the i.i.d.-sampling ground truth rather than an
    /// episodic benchmark.
    pub exact: bool,
}

impl Environment {
    pub fn source(&self, sampling: &SamplingSpec) -> Source<'_> {
        match (self.exact, sampling) {
            (true, SamplingSpec::Uniform | SamplingSpec::Iid { .. }) => Source::Iid(&self.mdp),
            _ => Source::Episodic(self.env.as_ref()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "environment": {"name": "random", "num_states": 4, "num_actions": 4, "seed": 0},
            "algorithm": "syncmbq",
            "step_size": 0.1,
            "budget": {"steps": 100},
            "sampling": {"mode": "uniform"},
            "seeds": [1, 2]
        }"#
    }

    #[test]
    fn defaults_fill_in() {
        let run: RunFile = serde_json::from_str(minimal()).unwrap();
        run.validate().unwrap();
        assert_eq!(run.discount, 0.9);
        assert_eq!(run.log_stride, 1);
        assert_eq!(run.moving_average_window, 1);
        let cfg = run.trainer_config(16, 1).unwrap();
        assert_eq!(cfg.warmup_steps, 93);
    }

    #[test]
    fn empty_seeds_rejected() {
        let run: RunFile = serde_json::from_str(minimal()).unwrap();
        assert!(matches!(run.with_seeds(Some(vec![])), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = minimal().replace("\"seeds\"", "\"sedes\"");
        assert!(serde_json::from_str::<RunFile>(&text).is_err());
    }

    #[test]
    fn environment_names() {
        for (json, exact) in [
            (r#"{"name": "taxi"}"#, false),
            (r#"{"name": "frozenlake8x8"}"#, false),
            (
                r#"{"name": "random", "num_states": 3, "num_actions": 2, "seed": 4}"#,
                true,
            ),
        ] {
            let mut run: RunFile = serde_json::from_str(minimal()).unwrap();
            run.environment = serde_json::from_str(json).unwrap();
            assert_eq!(run.load_environment().unwrap().exact, exact);
        }
    }
}
