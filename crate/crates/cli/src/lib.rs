//! Batch execution, planning and reporting behind the `cebench` binary.

pub mod manifest;
pub mod plan;
pub mod report;
pub mod runner;

use std::path::{Path, PathBuf};

use cebench_core::config::ConfigError;
use cebench_core::corpus::CorpusError;
use cebench_core::monitor::{read_summary, MonitorError, RunSummary};
use cebench_core::recommender::RecommendError;
use thiserror::Error;

pub use manifest::{ManifestEntry, RunManifest, RunStatus, MANIFEST_FILE};
pub use plan::{cmd_recommend, RecommendArgs, PARETO_FILE, RECOMMENDATION_FILE};
pub use report::{cmd_report, render_svg, report_csv, report_json, ReportFormat, REPORT_COLUMNS};
pub use runner::{load_grid, plan_prompts, run_batch, BatchReport, RunOptions};

/// Suffix of per-run summary files in an output directory.
pub const SUMMARY_SUFFIX: &str = ".summary.json";

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const RUN_FAILURES: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NO_FEASIBLE_PLAN: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no summaries in {}", .0.display())]
    NoSummaries(PathBuf),
    #[error("no feasible plan: {0}")]
    NoFeasiblePlan(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::NoSummaries(_) => exit::USAGE,
            CliError::NoFeasiblePlan(_) => exit::NO_FEASIBLE_PLAN,
            CliError::Io { .. } | CliError::Runtime(_) => exit::RUN_FAILURES,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MonitorError> for CliError {
    fn from(e: MonitorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<RecommendError> for CliError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::NoFeasiblePlans { .. } => CliError::NoFeasiblePlan(e.to_string()),
            RecommendError::NoSummaries => CliError::NoSummaries(PathBuf::new()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Every `*.summary.json` in `dir`, ordered by file name.
pub fn load_summaries(dir: &Path) -> Result<Vec<RunSummary>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(SUMMARY_SUFFIX))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::NoSummaries(dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| read_summary(p).map_err(CliError::from))
        .collect()
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes via a temporary sibling and a rename so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
