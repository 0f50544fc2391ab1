//! Resource sampling, run logs and per-run aggregation.

mod aggregate;
mod log;
mod probe;

use thiserror::Error;

pub use self::aggregate::{aggregate, nearest_rank, read_summary, write_summary, RunSummary};
pub use self::log::{read_run_log, LoadedLog, RunLogWriter, RunRecord};
pub use self::probe::{
    load_trace, run_probe, ProbeDescriptor, ProbeHandle, ProbeKind, ProbeOutcome, ResourceSample,
    DEFAULT_SAMPLE_INTERVAL_S,
};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("records from different runs: `{0}` and `{1}`")]
    MixedRuns(String, String),
    #[error("{path}: line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("trace {path}: {message}")]
    Trace { path: String, message: String },
    #[error("probe error: {0}")]
    Probe(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MonitorError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        MonitorError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
