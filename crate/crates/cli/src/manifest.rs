use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{unix_now, write_atomic, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub run_id: String,
    pub status: RunStatus,
    /// Unix seconds.
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    pub error: Option<String>,
}

/// Batch progress: one entry per expanded run, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the configuration text.
    pub config_hash: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub runs: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn new(config_hash: &str, run_ids: &[String]) -> Self {
        let now = unix_now();
        Self {
            config_hash: config_hash.to_string(),
            created_at: now,
            updated_at: now,
            runs: run_ids
                .iter()
                .map(|id| ManifestEntry {
                    run_id: id.clone(),
                    status: RunStatus::Pending,
                    started_at: None,
                    finished_at: None,
                    error: None,
                })
                .collect(),
        }
    }

    /// Carries statuses over from `previous` for run ids that still exist.
    pub fn resume_from(config_hash: &str, run_ids: &[String], previous: &RunManifest) -> Self {
        if previous.config_hash != config_hash {
            log::warn!("configuration changed since the manifest was written; keeping statuses of matching runs");
        }
        let mut manifest = Self::new(config_hash, run_ids);
        manifest.created_at = previous.created_at;
        for entry in &mut manifest.runs {
            if let Some(old) = previous.runs.iter().find(|o| o.run_id == entry.run_id) {
                *entry = old.clone();
            }
        }
        manifest
    }

    pub fn entry(&self, run_id: &str) -> Option<&ManifestEntry> {
        self.runs.iter().find(|e| e.run_id == run_id)
    }

    pub fn mark_started(&mut self, run_id: &str) {
        if let Some(e) = self.runs.iter_mut().find(|e| e.run_id == run_id) {
            e.status = RunStatus::Pending;
            e.started_at = Some(unix_now());
            e.finished_at = None;
            e.error = None;
        }
        self.updated_at = unix_now();
    }

    pub fn mark_finished(&mut self, run_id: &str, error: Option<String>) {
        if let Some(e) = self.runs.iter_mut().find(|e| e.run_id == run_id) {
            e.status = if error.is_some() {
                RunStatus::Failed
            } else {
                RunStatus::Done
            };
            e.finished_at = Some(unix_now());
            e.error = error;
        }
        self.updated_at = unix_now();
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifests serialize");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn every_run_listed_once() {
        let m = RunManifest::new("h", &ids());
        assert_eq!(m.runs.len(), 2);
        assert!(m.runs.iter().all(|e| e.status == RunStatus::Pending));
    }

    #[test]
    fn resume_keeps_known_statuses() {
        let mut old = RunManifest::new("h", &ids());
        old.mark_finished("a", None);
        old.mark_finished("b", Some("boom".into()));
        let m = RunManifest::resume_from("h", &["a".into(), "c".into()], &old);
        assert_eq!(m.entry("a").unwrap().status, RunStatus::Done);
        assert_eq!(m.entry("c").unwrap().status, RunStatus::Pending);
        assert!(m.entry("b").is_none());
    }

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut m = RunManifest::new("h", &ids());
        m.mark_finished("a", None);
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"status\": \"done\""));
    }
}
