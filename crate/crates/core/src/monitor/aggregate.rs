use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MonitorError, ResourceSample, RunRecord};

/// Per-run aggregate written next to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    /// Bound axis values keyed by axis name.
    pub axes: BTreeMap<String, String>,
    /// Model actually requested from the backend.
    pub model: String,
    pub n_prompts: usize,
    pub n_errors: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Over non-error records; absent when every prompt failed.
    pub mean_latency_s: Option<f64>,
    pub p95_latency_s: Option<f64>,
    pub mean_latency_llm_s: Option<f64>,
    pub peak_gpu_memory: Option<u64>,
    pub peak_host_memory: Option<u64>,
    pub tokens_in_total: u64,
    pub tokens_out_total: u64,
    /// False when any count was approximated.
    pub token_counts_exact: bool,
    pub valid_answer_rate: f64,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn mean_tokens_in(&self) -> f64 {
        self.tokens_in_total as f64 / self.n_prompts.max(1) as f64
    }

    pub fn mean_tokens_out(&self) -> f64 {
        self.tokens_out_total as f64 / self.n_prompts.max(1) as f64
    }
}

/// Nearest-rank percentile (`p` in `(0, 100]`) of an unsorted sample.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Aggregates one run.
///
/// `samples` is `None` when memory is unknown (null or failed probe).
pub fn aggregate(
    records: &[RunRecord],
    samples: Option<&[ResourceSample]>,
    metrics: BTreeMap<String, f64>,
    axes: BTreeMap<String, String>,
    model: &str,
) -> Result<RunSummary, MonitorError> {
    let first = records.first().ok_or(MonitorError::EmptyRecords)?;
    if let Some(other) = records.iter().find(|r| r.run_id != first.run_id) {
        return Err(MonitorError::MixedRuns(first.run_id.clone(), other.run_id.clone()));
    }
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let e2e: Vec<f64> = ok.iter().map(|r| r.latency_end_to_end).collect();
    let llm: Vec<f64> = ok.iter().map(|r| r.latency_llm).collect();
    let valid = records
        .iter()
        .filter(|r| r.extracted_prediction.is_some())
        .count();
    let peak = |f: fn(&ResourceSample) -> u64| samples.and_then(|s| s.iter().map(f).max());

    Ok(RunSummary {
        run_id: first.run_id.clone(),
        axes,
        model: model.to_string(),
        n_prompts: records.len(),
        n_errors: records.len() - ok.len(),
        metrics,
        mean_latency_s: mean(&e2e),
        p95_latency_s: nearest_rank(&e2e, 95.0),
        mean_latency_llm_s: mean(&llm),
        peak_gpu_memory: peak(|s| s.gpu_memory_used),
        peak_host_memory: peak(|s| s.host_memory_used),
        tokens_in_total: records.iter().map(|r| r.tokens_in).sum(),
        tokens_out_total: records.iter().map(|r| r.tokens_out).sum(),
        token_counts_exact: records.iter().all(|r| r.token_counts_exact),
        valid_answer_rate: valid as f64 / records.len() as f64,
    })
}

/// Pretty JSON with a trailing newline; output is byte-stable for equal summaries.
pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), MonitorError> {
    let mut text = serde_json::to_string_pretty(summary).expect("summaries serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| MonitorError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<RunSummary, MonitorError> {
    let text = fs::read_to_string(path).map_err(|e| MonitorError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| MonitorError::Corrupt {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::Prediction;

    fn record(latency: f64, prediction: Option<i64>) -> RunRecord {
        RunRecord {
            run_id: "r".into(),
            prompt_id: "p".into(),
            latency_end_to_end: latency,
            latency_llm: latency / 2.0,
            tokens_in: 100,
            tokens_out: 5,
            response_text: String::new(),
            extracted_prediction: prediction.map(Prediction::Score),
            error: None,
            token_counts_exact: true,
        }
    }

    fn summarize(records: &[RunRecord], samples: Option<&[ResourceSample]>) -> RunSummary {
        aggregate(records, samples, BTreeMap::new(), BTreeMap::new(), "m").unwrap()
    }

    #[test]
    fn mean_latency() {
        let s = summarize(&[record(1.0, None), record(2.0, None), record(3.0, None)], None);
        assert_eq!(s.mean_latency_s, Some(2.0));
        assert_eq!(s.mean_latency_llm_s, Some(1.0));
        assert_eq!(s.peak_gpu_memory, None);
        assert_eq!(s.tokens_in_total, 300);
    }

    #[test]
    fn valid_answer_rate_counts_parseable() {
        let s = summarize(
            &[record(1.0, Some(1)), record(1.0, None), record(1.0, Some(3)), record(1.0, None)],
            None,
        );
        assert_eq!(s.valid_answer_rate, 0.5);
    }

    #[test]
    fn p95_of_twenty_is_nineteenth() {
        let records: Vec<RunRecord> = (1..=20).rev().map(|i| record(i as f64, None)).collect();
        assert_eq!(summarize(&records, None).p95_latency_s, Some(19.0));
    }

    #[test]
    fn errors_are_left_out_of_latency() {
        let mut failed = record(100.0, None);
        failed.error = Some("timeout".into());
        let s = summarize(&[record(1.0, None), failed], None);
        assert_eq!(s.mean_latency_s, Some(1.0));
        assert_eq!(s.n_errors, 1);
        assert_eq!(s.n_prompts, 2);
    }

    #[test]
    fn peak_is_max_of_samples() {
        const GB: u64 = 1 << 30;
        let samples: Vec<ResourceSample> = [10, 42, 30]
            .iter()
            .enumerate()
            .map(|(i, g)| ResourceSample {
                timestamp: i as f64,
                gpu_memory_used: g * GB,
                host_memory_used: 0,
            })
            .collect();
        let s = summarize(&[record(1.0, None)], Some(&samples));
        assert_eq!(s.peak_gpu_memory, Some(42 * GB));
        assert_eq!(s.peak_host_memory, Some(0));
    }

    #[test]
    fn rejects_empty_and_mixed() {
        assert!(matches!(
            aggregate(&[], None, BTreeMap::new(), BTreeMap::new(), "m"),
            Err(MonitorError::EmptyRecords)
        ));
        let mut other = record(1.0, None);
        other.run_id = "q".into();
        assert!(matches!(
            aggregate(&[record(1.0, None), other], None, BTreeMap::new(), BTreeMap::new(), "m"),
            Err(MonitorError::MixedRuns(..))
        ));
    }

    #[test]
    fn nearest_rank_edges() {
        assert_eq!(nearest_rank(&[], 95.0), None);
        assert_eq!(nearest_rank(&[3.0], 95.0), Some(3.0));
        assert_eq!(nearest_rank(&[1.0, 2.0], 50.0), Some(1.0));
    }
}
