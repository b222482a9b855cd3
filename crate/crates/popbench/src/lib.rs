//! Time-aware popularity baselines for implicit-feedback recommendation.
//!
//! `popbench` ingests timestamped user-item interaction logs (MovieLens-style
//! CSV), partitions them into training and test sets, and evaluates three
//! non-personalized popularity models under a top-K ranking protocol:
//!
//! * **MostPop** ranks items by their total interaction count in training.
//! * **RecentPop** ranks items by their interaction count in a trailing
//!   window `[t0 - dt, t0)` at query time `t0`.
//! * **DecayPop** ranks items by an exponentially decay-weighted sum of
//!   monthly interaction counts over a fixed lookback horizon.
//!
//! The crate also ships user-activity analyses (cohort selection, log-scaled
//! user grouping, popular-item tendency, per-group accuracy, per-day release
//! and last-interaction curves) and a seeded synthetic corpus generator with
//! controllable popularity drift for property tests.
//!
//! All computations are exact: windowed counts are answered by binary search
//! over per-item sorted timestamp arrays, never by approximate sketches.

pub mod analysis;
pub mod corpus;
pub mod eval;
pub mod index;
pub mod manifest;
pub mod models;
pub mod splits;
pub mod synth;

pub use corpus::{ingest, Corpus, CorpusStats, Format, IngestOptions, IngestReport, Interaction};
pub use eval::{CandidateContext, CandidatePolicy, EvalConfig, EvalRecord, EvalReport};
pub use index::{TemporalIndex, Window};
pub use models::{Decay, ScoredItem, ScorerConfig, ScorerKind};
pub use splits::{EvalInstance, Scheme, Split};

/// Dense user index assigned at ingest. External ids are kept in the corpus
/// vocabulary for reports.
pub type UserId = u32;
/// Dense item index assigned at ingest.
pub type ItemId = u32;
/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: expected columns [{expected}], found [{found}]")]
    Header { expected: String, found: String },
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("leakage guard: {0}")]
    Leakage(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
