//! History replay with per-bug scoring, timing, and the co-change analysis.

mod cochange;
mod metrics;
mod replay;

use thiserror::Error;

use crate::engine::EngineError;

pub use cochange::{cochange_analysis, co_change_rate, BucketStats, CochangeConfig, CochangeReport};
pub use metrics::{average_precision, first_hit, reciprocal_rank, top_at_k};
pub use replay::{
    build_events, replay, replay_with, timing_report, BugEval, EvalResult, EventPayload, FixLink, HistoryEvent, Mode,
    ReplayConfig, TimingReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("event at timestamp {found} follows one at {last}")]
    CausalityViolation { last: i64, found: i64 },
    #[error("fix link for bug {bug} names unknown commit {sha}")]
    UnknownCommit { bug: String, sha: String },
    #[error("fix link names unknown bug {0}")]
    UnknownBug(String),
    #[error("fix link for bug {0} has an empty goldset")]
    EmptyGoldset(String),
    #[error("need at least two changed classes, found {0}")]
    TooFewClasses(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("writing table: {0}")]
    Table(String),
}
