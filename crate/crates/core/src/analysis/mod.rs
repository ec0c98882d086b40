//! Quantitative tooling: the self-repetition metric, an attention cost
//! model, the long-acceptance batch probability, and acceptance-rate pruning
//! with golden-section tuning of the tree size.

mod cost;
mod selfrep;
mod tune;

use thiserror::Error;

pub use cost::{cost_model, long_seq_probability, CostBreakdown, CostInputs, StageCost};
pub use selfrep::{self_repetition, self_repetition_dataset, SelfRepetitionResult};
pub use tune::{
    clamp_rates, golden_section_max, golden_section_tune, prune_tree, PruneResult, SearchLog,
    TuneResult,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("response is empty")]
    EmptyResponse,
    #[error("{0}")]
    Domain(String),
}
