//! Posterior summaries: poststratified prevalence, HPD intervals,
//! convergence diagnostics, per-participant infection probabilities and the
//! non-response sensitivity sweep.

mod diagnostics;
mod participants;
mod poststrat;
mod sensitivity;
mod summary;

use thiserror::Error;

pub use diagnostics::{ess, ess_single, rhat, ParameterDiagnostics, DEFAULT_ESS_MIN, DEFAULT_RHAT_MAX};
pub use participants::{count_above, participant_infection_probs};
pub use poststrat::{poststratify, CellAggregator, PostStratifier, PrevalenceDraw, UnsampledTractPolicy};
pub use sensitivity::{adjust_cell_prevalence, sensitivity_sweep, sweep_fields, SensitivityEntry, SensitivityGrid};
pub use summary::{
    equal_tailed_interval, hpd_interval, posterior_mean, summarize_prevalence, PrevalenceSummary, RegionSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("no draws to summarize")]
    NoDraws,
    #[error("{n} draws are too few for a {level} interval")]
    InsufficientDraws { n: usize, level: f64 },
    #[error("interval level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("R-hat needs at least two chains")]
    SingleChain,
    #[error("prevalence ratio {0} is negative")]
    NegativeLambda(f64),
    #[error("poststratification table does not match the draws: {0}")]
    TableMismatch(String),
}
