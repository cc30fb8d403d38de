//! Desk-scale laboratory for real-time adversarial attacks on streaming
//! time-series classifiers.
//!
//! The crate wires together a from-scratch differentiable numeric core
//! ([`numcore`]), a synthetic labeled corpus ([`dataset`]), a trainable victim
//! classifier behind a query-metered facade ([`target`]), additive
//! segment-based perturbations ([`perturb`]), a differential-evolution expert
//! attacker ([`expert`]), a behavior-cloned streaming attack network
//! ([`generator`]), a causal streaming simulator ([`simulator`]), and an
//! experiment pipeline with metrics and a CLI ([`eval`]).
//!
//! Everything is deterministic given a master seed: randomized routines take
//! explicit seeds derived per stage and per sample (see [`seeds`]), so reruns
//! reproduce artifacts byte for byte.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod expert;
pub mod generator;
pub mod numcore;
pub mod perturb;
pub mod seeds;
pub mod simulator;
pub mod target;

pub use dataset::{ClassSpec, Corpus, CorpusSplit, DatasetSpec, TimeSeriesSample};
pub use error::RtError;
pub use eval::{EvalSet, ExperimentConfig, MetricsReport, RunDir};
pub use expert::{DeConfig, DeResult, DemoSet, Trajectory, VarianceRow};
pub use generator::{EncoderState, GenConfig, GenHyper, GeneratorNet};
pub use perturb::{EmissionSchedule, PerturbConfig};
pub use simulator::{
    decide_emissions, run_attack, AttackOutcome, OutcomeRecord, Policy, Reward, StreamConfig,
};
pub use target::{BlackBox, TargetModel, TrainHyper, TrainReport};
