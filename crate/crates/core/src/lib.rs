//! Synchronous model-based Q-learning on tabular MDPs, with the switched-system
//! diagnostics and sample-complexity bounds used to analyze it.
//!
//! Tabular types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for callers that do not care.

pub mod complexity;
pub mod diagnostics;
pub mod env;
pub mod estimation;
pub mod learner;
pub mod mdp;
pub mod scalar;

pub use complexity::{BoundError, BoundInputs, BoundReport, TailBound};
pub use diagnostics::{ComparisonState, ComparisonTrace, DiagnosticsError};
pub use env::{EnvError, EpisodicEnv, Sampler, SamplerSpec, SamplingMode, TieBreak, Transition};
pub use estimation::{EmpiricalModel, EstimationError};
pub use learner::{Algorithm, Budget, LearnerError, RunTrace, Source, TrainerConfig};
pub use mdp::{GreedyPolicy, MdpError, QTable, TabularMdp};
pub use scalar::Scalar;

pub type QTable64 = QTable<f64>;
pub type QTable32 = QTable<f32>;
pub type TabularMdp64 = TabularMdp<f64>;
pub type TabularMdp32 = TabularMdp<f32>;
pub type EmpiricalModel64 = EmpiricalModel<f64>;
pub type EmpiricalModel32 = EmpiricalModel<f32>;
