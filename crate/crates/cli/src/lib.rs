//! Batch pipeline behind the `screenlens` command: extract text from a
//! directory of screenshots, score it against transcriptions, build the
//! search index and query it.

pub mod config;
pub mod evaluate;
pub mod extract;
pub mod search;

use std::path::{Path, PathBuf};

pub use config::{PipelineConfig, Settings};
pub use evaluate::{cmd_evaluate, EvaluationRun, ResultTable};
pub use extract::{cmd_extract, extract_with, ExtractSummary, ItemFailure};
pub use search::{cmd_index, cmd_query, render_hits};

pub const XML_FILE_NAME: &str = "documents.xml";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Doc { context: String, source: screenlens_core::DocError },
    #[error("index: {0}")]
    Index(#[from] screenlens_core::index::IndexError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }
}

/// Process exit status: 0 clean, 1 fatal, 2 finished with per-item failures.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const FATAL: u8 = 1;
    pub const PARTIAL: u8 = 2;
}

/// Write `contents` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| PipelineError::io(path, e))?;
    tmp.persist(path).map_err(|e| PipelineError::io(path, e.error))?;
    Ok(())
}
