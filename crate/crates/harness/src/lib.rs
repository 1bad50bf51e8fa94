//! Experiment runner and HTTP service for lecture quiz generation.
//!
//! * [`config`]: run configuration files and environment overrides.
//! * [`engine`]: model clients and scoring backends built from a config.
//! * [`run`]: resumable (model × strategy × item) executor and reports.
//! * [`sweep`]: Rule-k window sweep, CSV + SVG, Rule-Best selection.
//! * [`bench`]: paraphrase benchmark of the evaluation metrics.
//! * [`ingest`]: lecture ingestion and keyframe captioning commands.
//! * [`serve`]: JSON API under `/api/v1`.
//! * [`simulate`]: deterministic offline chat model.

pub mod bench;
pub mod config;
pub mod engine;
pub mod ingest;
pub mod plot;
pub mod run;
pub mod serve;
pub mod simulate;
pub mod sweep;

use std::path::PathBuf;

use lectureqg_core::corpus::CorpusError;
use lectureqg_core::ingest::IngestError;
use lectureqg_core::llm::LlmError;
use lectureqg_core::metrics::BenchmarkError;
use thiserror::Error;

pub use config::{ConfigError, RunConfig};
pub use engine::{Engine, Generator};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{what} not found: {}", path.display())]
    Missing { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Usage(String),
    #[error("run is incomplete: {missing} unit result(s) missing, first {}", first.display())]
    Incomplete { missing: usize, first: PathBuf },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by how the command was invoked rather than by its inputs.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Usage(_) | HarnessError::Config(ConfigError::Invalid(_)))
            || matches!(self, HarnessError::Benchmark(BenchmarkError::UnknownScorer(_)))
    }
}

pub(crate) fn write_file(path: &std::path::Path, body: &[u8]) -> Result<(), HarnessError> {
    lectureqg_core::util::write_atomic(path, body).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}
