//! End-to-end orchestration: dataset ingestion, the inference-backend
//! client with its cache, evaluation runs over all questions, and report
//! emission.

mod backend;
mod cache;
mod ingest;
mod report;
mod run;

pub use backend::{
    open_backend, BackendClient, BackendError, BackendRequest, BackendResponse, FixtureRecord,
    HttpBackend, MockBackend, TokenLogprob,
};
pub use cache::ResponseCache;
pub use ingest::{ingest, AnnotationRecord, Dataset, VideoRecord, DATASET_SCHEMA_VERSION};
pub use report::{emit_report, write_scores_jsonl, ReportFormat, ScoreRecord};
pub use run::{
    normalized_dim_scores, normalized_overall, run_eval, score_offline, ConfigSnapshot,
    DimensionMetrics, EvalConfig, EvalRun, FailureEntry, FailureStage, MetricsBlock,
    OfflineScoreOutcome, QuestionResult, VideoScore, RUN_SCHEMA_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{file}:{line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: duplicate id {id}")]
    DuplicateId {
        file: String,
        line: usize,
        id: String,
    },
    #[error("{file}:{line}: reference to unknown {kind} {id}")]
    DanglingReference {
        file: String,
        line: usize,
        kind: &'static str,
        id: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("backend unreachable for every probe: {0}")]
    FatalBackend(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Score(#[from] crate::scoring::ScoreError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
