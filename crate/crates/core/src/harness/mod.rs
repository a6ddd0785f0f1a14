//! Training with dev-based model selection, the carryover decision rule,
//! precision/recall/F1 evaluation, the naive baseline and the cross-lingual
//! experiment grid.

mod benchmark;
mod eval;
mod grid;
mod metrics;
mod train;

pub use benchmark::{embedding_spaces, language_vocabulary, BenchmarkSettings, SyntheticBenchmark};
pub use eval::{
    decide, evaluate, evaluate_baseline, naive_baseline_predict, ConstantScorer, EvalSet, EvalTurn, GoldScorer,
    Scorer,
};
pub use grid::{
    extend_table, run_experiment_grid, CellResult, CellSpec, CorpusId, EmbeddingMode, ExperimentReport, GridConfig, GridResources,
    Provenance, SeedResult,
};
pub use metrics::{f1_score, prf1, Metrics};
pub use train::{select_best_epoch, train, EpochRecord, TrainOutcome};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::embeddings::EmbeddingError;
use crate::model::ModelError;
use crate::translation::TranslationError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{0}")]
    Input(String),
    #[error("non-finite value at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
