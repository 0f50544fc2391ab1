use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::MonitorError;

pub const DEFAULT_SAMPLE_INTERVAL_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    /// Seconds since the probe started.
    pub timestamp: f64,
    pub gpu_memory_used: u64,
    pub host_memory_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeKind {
    Null,
    /// Replays a recorded JSONL trace.
    TraceReplay { path: PathBuf },
    /// Runs `program` every interval; the first output line holds
    /// `<gpu_used_bytes> [<host_used_bytes>]`.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

fn default_interval() -> f64 {
    DEFAULT_SAMPLE_INTERVAL_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDescriptor {
    #[serde(flatten)]
    pub kind: ProbeKind,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
}

impl Default for ProbeDescriptor {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Null,
            interval_s: DEFAULT_SAMPLE_INTERVAL_S,
        }
    }
}

impl ProbeDescriptor {
    pub fn null() -> Self {
        Self::default()
    }

    pub fn trace(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProbeKind::TraceReplay { path: path.into() },
            ..Self::default()
        }
    }

    pub fn command(program: impl Into<String>, args: Vec<String>, interval_s: f64) -> Self {
        Self {
            kind: ProbeKind::Command {
                program: program.into(),
                args,
            },
            interval_s,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.interval_s > 0.0) {
            return Err("probe interval_s must be positive".into());
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let ProbeKind::TraceReplay { path } = &mut self.kind {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Deserialize)]
struct TraceLine {
    t_offset_s: f64,
    gpu_memory_used_bytes: u64,
    #[serde(default)]
    host_memory_used_bytes: u64,
}

/// Reads a resource trace; offsets must be non-negative and strictly increasing.
pub fn load_trace(path: &Path) -> Result<Vec<ResourceSample>, MonitorError> {
    let text = fs::read_to_string(path).map_err(|e| MonitorError::io(path, e))?;
    let err = |message: String| MonitorError::Trace {
        path: path.display().to_string(),
        message,
    };
    let mut samples: Vec<ResourceSample> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TraceLine =
            serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        if !(row.t_offset_s >= 0.0) {
            return Err(err(format!("line {}: negative offset", i + 1)));
        }
        if let Some(prev) = samples.last() {
            if row.t_offset_s <= prev.timestamp {
                return Err(err(format!("line {}: offsets must increase", i + 1)));
            }
        }
        samples.push(ResourceSample {
            timestamp: row.t_offset_s,
            gpu_memory_used: row.gpu_memory_used_bytes,
            host_memory_used: row.host_memory_used_bytes,
        });
    }
    Ok(samples)
}

fn sample_command(program: &str, args: &[String]) -> Result<(u64, u64), String> {
    let output = Command::new(program)
        .args(args)
        .output()
        .map_err(|e| format!("cannot run `{program}`: {e}"))?;
    if !output.status.success() {
        return Err(format!("`{program}` exited with {}", output.status));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let line = stdout.lines().next().unwrap_or_default();
    let mut fields = line.split_whitespace().map(str::parse::<u64>);
    let gpu = fields
        .next()
        .and_then(Result::ok)
        .ok_or_else(|| format!("`{program}` printed `{line}`, expected used bytes"))?;
    let host = fields.next().and_then(Result::ok).unwrap_or(0);
    Ok((gpu, host))
}

/// Samples gathered by a probe, plus the failure that stopped it early, if any.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeOutcome {
    pub samples: Vec<ResourceSample>,
    pub failure: Option<String>,
    /// False for the null probe.
    pub active: bool,
}

impl ProbeOutcome {
    /// Samples usable for a peak: absent when the probe was null or failed.
    pub fn usable_samples(&self) -> Option<&[ResourceSample]> {
        (self.active && self.failure.is_none()).then_some(self.samples.as_slice())
    }
}

/// A running probe; [`ProbeHandle::stop`] ends sampling and returns what was collected.
pub struct ProbeHandle {
    stop: Option<Sender<()>>,
    worker: Option<JoinHandle<ProbeOutcome>>,
}

impl ProbeHandle {
    pub fn stop(mut self) -> ProbeOutcome {
        self.stop.take();
        match self.worker.take() {
            Some(worker) => worker.join().unwrap_or_else(|_| ProbeOutcome {
                failure: Some("probe thread panicked".into()),
                active: true,
                ..Default::default()
            }),
            None => ProbeOutcome::default(),
        }
    }
}

impl Drop for ProbeHandle {
    fn drop(&mut self) {
        self.stop.take();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

/// Starts sampling in a background thread.
///
/// A replayed trace is always delivered in full: samples not yet reached
/// when the probe stops are appended at their recorded offsets.
pub fn run_probe(descriptor: &ProbeDescriptor) -> Result<ProbeHandle, MonitorError> {
    descriptor.validate().map_err(MonitorError::Probe)?;
    let (tx, rx) = mpsc::channel::<()>();
    let interval = Duration::from_secs_f64(descriptor.interval_s);
    let worker = match &descriptor.kind {
        ProbeKind::Null => None,
        ProbeKind::TraceReplay { path } => {
            let trace = load_trace(path)?;
            Some(thread::spawn(move || {
                let start = Instant::now();
                let mut emitted = Vec::with_capacity(trace.len());
                let mut stopped = false;
                for sample in trace {
                    if !stopped {
                        let due = Duration::from_secs_f64(sample.timestamp);
                        let wait = due.saturating_sub(start.elapsed());
                        stopped = matches!(
                            rx.recv_timeout(wait),
                            Ok(()) | Err(RecvTimeoutError::Disconnected)
                        );
                    }
                    emitted.push(sample);
                }
                ProbeOutcome {
                    samples: emitted,
                    failure: None,
                    active: true,
                }
            }))
        }
        ProbeKind::Command { program, args } => {
            let (program, args) = (program.clone(), args.clone());
            Some(thread::spawn(move || {
                let start = Instant::now();
                let mut outcome = ProbeOutcome {
                    active: true,
                    ..Default::default()
                };
                for tick in 1u32.. {
                    let due = interval * tick;
                    let wait = due.saturating_sub(start.elapsed());
                    match rx.recv_timeout(wait) {
                        Err(RecvTimeoutError::Timeout) => {}
                        _ => break,
                    }
                    match sample_command(&program, &args) {
                        Ok((gpu, host)) => {
                            let timestamp = start.elapsed().as_secs_f64();
                            if outcome.samples.last().is_some_and(|s| s.timestamp >= timestamp) {
                                continue;
                            }
                            outcome.samples.push(ResourceSample {
                                timestamp,
                                gpu_memory_used: gpu,
                                host_memory_used: host,
                            });
                        }
                        Err(message) => {
                            ::log::warn!("resource probe stopped: {message}");
                            outcome.failure = Some(message);
                            break;
                        }
                    }
                }
                outcome
            }))
        }
    };
    Ok(ProbeHandle {
        stop: Some(tx),
        worker,
    })
}
