//! Data ingestion, splits, evaluation, sweeps, and tuning.

pub mod config;
pub mod data;
pub mod evaluate;
pub mod split;
pub mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::ClassifyError;
use crate::kernelspace::KernelError;
use crate::lmmk::TrainError;

pub use config::{
    KernelMode, MatrixKind, MatrixSpec, RunConfig, SplitSpec, SweepParameter, SweepSpec, TuneSpec,
};
pub use data::{ingest, ingest_query, Dataset, Query, SplitKernels};
pub use evaluate::{
    evaluate_split, run_sweep, run_train, tune, tuning_split, EvalReport, SplitOutcome,
    SweepReport, TrainOutcome, TuneReport,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LMMK_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown label '{0}'")]
    UnknownLabel(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("repetition {index}: {source}")]
    Repetition {
        index: usize,
        source: Box<PipelineError>,
    },
    #[error("every grid point failed; first error: {0}")]
    AllFailed(String),
}

/// Broad cause of a failure, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Solver,
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn in_repetition(self, index: usize) -> Self {
        Self::Repetition {
            index,
            source: Box::new(self),
        }
    }

    /// Fills in the file name of a parse error raised without one.
    pub fn with_path(self, p: &Path) -> Self {
        match self {
            Self::Parse {
                path,
                line,
                column,
                message,
            } if path.as_os_str().is_empty() => Self::Parse {
                path: p.to_path_buf(),
                line,
                column,
                message,
            },
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Config(_) => ErrorKind::Config,
            Self::Repetition { source, .. } => source.kind(),
            Self::Train(e) => match e {
                TrainError::InvalidHyperparams(_) => ErrorKind::Config,
                TrainError::Lp(_)
                | TrainError::LpNotOptimal { .. }
                | TrainError::Uncertified { .. } => ErrorKind::Solver,
                _ => ErrorKind::Data,
            },
            _ => ErrorKind::Data,
        }
    }
}

/// Thread cap from `LMMK_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, PipelineError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(PipelineError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        _ => Ok(None),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
