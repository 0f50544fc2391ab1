use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{approx_token_count, Backend, BackendDescriptor, BackendError, GenerationResult};

/// One row of a replay fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRecording {
    pub prompt_sha256: String,
    pub response: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out: Option<u64>,
}

impl MockRecording {
    pub fn new(prompt: &str, response: impl Into<String>, latency_ms: u64) -> Self {
        let response = response.into();
        Self {
            prompt_sha256: prompt_sha256(prompt),
            tokens_in: Some(approx_token_count(prompt)),
            tokens_out: Some(approx_token_count(&response)),
            response,
            latency_ms,
        }
    }
}

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Writes recordings as JSONL.
pub fn write_fixture(path: &Path, rows: &[MockRecording]) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(std::io::Error::other)?;
        writeln!(file, "{line}")?;
    }
    file.flush()
}

/// Replays recorded responses keyed by the SHA-256 of the prompt bytes.
#[derive(Debug)]
pub struct MockBackend {
    table: HashMap<String, MockRecording>,
    simulate_latency: bool,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(rows: Vec<MockRecording>, simulate_latency: bool) -> Self {
        let table = rows
            .into_iter()
            .map(|r| (r.prompt_sha256.clone(), r))
            .collect();
        Self {
            table,
            simulate_latency,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path, simulate_latency: bool) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| {
                    BackendError::Fixture(format!("{}:{}: {e}", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(rows, simulate_latency))
    }

    pub fn from_descriptor(descriptor: &BackendDescriptor) -> Result<Self, BackendError> {
        let path = descriptor
            .fixture
            .as_ref()
            .ok_or_else(|| BackendError::Invalid("mock_replay needs `fixture`".into()))?;
        Self::load(path, descriptor.simulate_latency)
    }

    /// Number of `generate` calls so far, hits and misses alike.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn generate(&self, prompt: &str) -> Result<GenerationResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = prompt_sha256(prompt);
        let row = self
            .table
            .get(&key)
            .ok_or(BackendError::FixtureMiss(key))?;
        if self.simulate_latency {
            thread::sleep(Duration::from_millis(row.latency_ms));
        }
        let exact = row.tokens_in.is_some() && row.tokens_out.is_some();
        Ok(GenerationResult {
            text: row.response.clone(),
            tokens_in: row.tokens_in.unwrap_or_else(|| approx_token_count(prompt)),
            tokens_out: row.tokens_out.unwrap_or_else(|| approx_token_count(&row.response)),
            latency: row.latency_ms as f64 / 1000.0,
            token_counts_exact: exact,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn replays_recorded_text_and_latency() {
        let backend = MockBackend::new(vec![MockRecording::new("P1", "score: 7", 120)], false);
        let first = backend.generate("P1").unwrap();
        assert_eq!(first.text, "score: 7");
        assert_eq!(first.latency, 0.120);
        assert_eq!(backend.generate("P1").unwrap(), first);
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn unknown_prompt_is_a_fixture_miss() {
        let backend = MockBackend::new(vec![], false);
        assert!(matches!(backend.generate("nope"), Err(BackendError::FixtureMiss(_))));
    }

    #[test]
    fn simulated_latency_is_slept() {
        let backend = MockBackend::new(vec![MockRecording::new("p", "r", 30)], true);
        let start = Instant::now();
        let result = backend.generate("p").unwrap();
        assert!(start.elapsed().as_secs_f64() + 0.020 >= result.latency);
    }

    #[test]
    fn missing_counts_fall_back_to_approximation() {
        let row = MockRecording {
            tokens_in: None,
            tokens_out: None,
            ..MockRecording::new("abcdefgh", "xyz", 0)
        };
        let result = MockBackend::new(vec![row], false).generate("abcdefgh").unwrap();
        assert_eq!((result.tokens_in, result.tokens_out), (2, 1));
        assert!(!result.token_counts_exact);
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.jsonl");
        write_fixture(&path, &[MockRecording::new("a", "b", 5)]).unwrap();
        let backend = MockBackend::load(&path, false).unwrap();
        assert_eq!(backend.generate("a").unwrap().text, "b");
    }
}
