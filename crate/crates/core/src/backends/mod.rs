//! LLM inference backends and prompt construction.

mod http;
mod mock;
mod prompt;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{api_key_env_var, ModelhubBackend, OpenAiBackend};
pub use mock::{prompt_sha256, write_fixture, MockBackend, MockRecording};
pub use prompt::{
    approx_token_count, build_fewshot_prompt, build_rag_prompt, CONTEXT_JOINER,
};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unrecorded prompt (sha256 {0})")]
    FixtureMiss(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("invalid backend descriptor: {0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ModelhubHttp,
    OpenaiHttp,
    MockReplay,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::ModelhubHttp => "modelhub_http",
            BackendKind::OpenaiHttp => "openai_http",
            BackendKind::MockReplay => "mock_replay",
        }
    }
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// How to reach an inference interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Used to pick the `CEBENCH_API_KEY_<NAME>` variable; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_s: f64,
    /// Header carrying the API key. `Authorization` values get a `Bearer ` prefix.
    #[serde(default)]
    pub auth_header: Option<String>,
    /// Mock replay sleeps for the recorded latency when set.
    #[serde(default = "default_true")]
    pub simulate_latency: bool,
}

impl BackendDescriptor {
    pub fn mock(fixture: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::MockReplay,
            name: None,
            base_url: None,
            fixture: Some(fixture.into()),
            model: String::new(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_s: default_timeout(),
            retries: default_retries(),
            retry_backoff_s: default_backoff(),
            auth_header: None,
            simulate_latency: true,
        }
    }

    pub fn http(kind: BackendKind, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind,
            base_url: Some(base_url.into()),
            fixture: None,
            model: model.into(),
            ..Self::mock("")
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_s > 0.0) {
            return Err(BackendError::Invalid("timeout_s must be positive".into()));
        }
        if !(self.retry_backoff_s >= 0.0) {
            return Err(BackendError::Invalid("retry_backoff_s must be non-negative".into()));
        }
        match self.kind {
            BackendKind::MockReplay if self.fixture.is_none() => Err(BackendError::Invalid(
                "mock_replay needs `fixture`".into(),
            )),
            BackendKind::ModelhubHttp | BackendKind::OpenaiHttp if self.base_url.is_none() => Err(
                BackendError::Invalid(format!("{} needs `base_url`", self.kind.as_str())),
            ),
            _ => Ok(()),
        }
    }

    /// Resolves a relative fixture path against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(f) = &self.fixture {
            if f.is_relative() {
                self.fixture = Some(base.join(f));
            }
        }
    }

    pub fn with_model(&self, model: &str) -> Self {
        Self {
            model: model.to_string(),
            ..self.clone()
        }
    }
}

/// Completion text with measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Seconds from request start to last byte.
    pub latency: f64,
    /// False when counts come from [`approx_token_count`].
    pub token_counts_exact: bool,
}

/// A stateless request issuer.
pub trait Backend: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<GenerationResult, BackendError>;
}

/// Builds the backend a descriptor names.
pub fn connect(descriptor: &BackendDescriptor) -> Result<Box<dyn Backend>, BackendError> {
    descriptor.validate()?;
    Ok(match descriptor.kind {
        BackendKind::MockReplay => Box::new(MockBackend::from_descriptor(descriptor)?),
        BackendKind::ModelhubHttp => Box::new(ModelhubBackend::new(descriptor.clone())),
        BackendKind::OpenaiHttp => Box::new(OpenAiBackend::new(descriptor.clone())),
    })
}

/// One-shot completion; prefer [`connect`] when issuing many prompts.
pub fn generate(
    descriptor: &BackendDescriptor,
    prompt: &str,
) -> Result<GenerationResult, BackendError> {
    connect(descriptor)?.generate(prompt)
}
