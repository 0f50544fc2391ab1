use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MonitorError;
use crate::evaluators::Prediction;

/// One prompt's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub prompt_id: String,
    /// Retrieval + prompt construction + generation, seconds.
    pub latency_end_to_end: f64,
    pub latency_llm: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub response_text: String,
    pub extracted_prediction: Option<Prediction>,
    pub error: Option<String>,
    #[serde(default)]
    pub token_counts_exact: bool,
}

/// Append-only JSONL sink, one flushed line per record.
///
/// Single writer; share it behind a `Mutex` when several producers feed one log.
pub struct RunLogWriter {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl RunLogWriter {
    /// Opens for appending, creating the file if needed.
    pub fn append(path: &Path) -> Result<Self, MonitorError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| MonitorError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
        })
    }

    /// Starts an empty log, discarding any previous file.
    pub fn create(path: &Path) -> Result<Self, MonitorError> {
        if path.exists() {
            fs::remove_file(path).map_err(|e| MonitorError::io(path, e))?;
        }
        Self::append(path)
    }

    pub fn log_record(&mut self, record: &RunRecord) -> Result<(), MonitorError> {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| MonitorError::io(&self.path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLog {
    pub records: Vec<RunRecord>,
    /// Set when an incomplete final line was skipped.
    pub torn_tail: bool,
}

/// Reads a run log. A malformed final line is treated as a torn write and
/// skipped with a warning; malformed lines elsewhere are errors.
pub fn read_run_log(path: &Path) -> Result<LoadedLog, MonitorError> {
    let text = fs::read_to_string(path).map_err(|e| MonitorError::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    let mut torn_tail = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() => {
                ::log::warn!("{}: skipping torn final line {}", path.display(), i + 1);
                torn_tail = true;
            }
            Err(e) => {
                return Err(MonitorError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(LoadedLog { records, torn_tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::NliLabel;

    fn record(i: usize) -> RunRecord {
        RunRecord {
            run_id: "r".into(),
            prompt_id: format!("p{i}"),
            latency_end_to_end: 1.5 + i as f64,
            latency_llm: 1.0 + i as f64,
            tokens_in: 10,
            tokens_out: 2,
            response_text: "score: 4\nbecause".into(),
            extracted_prediction: Some(if i % 2 == 0 {
                Prediction::Score(4)
            } else {
                Prediction::Nli(NliLabel::Neutral)
            }),
            error: None,
            token_counts_exact: true,
        }
    }

    #[test]
    fn three_records_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut log = RunLogWriter::create(&path).unwrap();
        for i in 0..3 {
            log.log_record(&record(i)).unwrap();
        }
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let loaded = read_run_log(&path).unwrap();
        assert_eq!(loaded.records, (0..3).map(record).collect::<Vec<_>>());
        assert!(!loaded.torn_tail);
    }

    #[test]
    fn torn_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut log = RunLogWriter::create(&path).unwrap();
        for i in 0..4 {
            log.log_record(&record(i)).unwrap();
        }
        drop(log);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() - 20]).unwrap();
        let loaded = read_run_log(&path).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert!(loaded.torn_tail);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let good = serde_json::to_string(&record(0)).unwrap();
        fs::write(&path, format!("{good}\n{{oops\n{good}\n")).unwrap();
        assert!(matches!(read_run_log(&path), Err(MonitorError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn field_names_are_snake_case() {
        let value = serde_json::to_value(record(0)).unwrap();
        for key in [
            "run_id",
            "prompt_id",
            "latency_end_to_end",
            "latency_llm",
            "tokens_in",
            "tokens_out",
            "response_text",
            "extracted_prediction",
            "error",
        ] {
            assert!(value.get(key).is_some(), "{key}");
        }
    }
}
