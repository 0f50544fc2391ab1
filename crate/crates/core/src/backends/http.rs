use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{approx_token_count, Backend, BackendDescriptor, BackendError, GenerationResult};

/// Environment variable holding the API key for a backend.
pub fn api_key_env_var(descriptor: &BackendDescriptor) -> String {
    let name = descriptor
        .name
        .clone()
        .unwrap_or_else(|| descriptor.kind.as_str().to_string());
    let suffix: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("CEBENCH_API_KEY_{suffix}")
}

fn is_timeout(err: &ureq::Transport) -> bool {
    use std::error::Error;
    let mut source = err.source();
    while let Some(s) = source {
        if let Some(io) = s.downcast_ref::<std::io::Error>() {
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) {
                return true;
            }
        }
        source = s.source();
    }
    err.to_string().contains("timed out")
}

/// Shared POST-with-retries for the HTTP adapters.
struct JsonClient {
    descriptor: BackendDescriptor,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl JsonClient {
    fn new(descriptor: BackendDescriptor) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(descriptor.timeout_s))
            .build();
        let api_key = std::env::var(api_key_env_var(&descriptor)).ok();
        Self {
            descriptor,
            agent,
            api_key,
        }
    }

    fn endpoint(&self, path: &str) -> String {
        let base = self.descriptor.base_url.as_deref().unwrap_or_default();
        format!("{}{}", base.trim_end_matches('/'), path)
    }

    /// Returns the parsed body and the latency of the successful attempt.
    fn post(&self, path: &str, body: &Value) -> Result<(Value, f64), BackendError> {
        let url = self.endpoint(path);
        let attempts = self.descriptor.retries + 1;
        let mut last_err = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(Duration::from_secs_f64(self.descriptor.retry_backoff_s));
            }
            let mut request = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                request = match self.descriptor.auth_header.as_deref() {
                    None | Some("Authorization") => {
                        request.set("Authorization", &format!("Bearer {key}"))
                    }
                    Some(header) => request.set(header, key),
                };
            }
            let start = Instant::now();
            match request.send_json(body) {
                Ok(response) => {
                    let text = response.into_string().map_err(|e| BackendError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    let latency = start.elapsed().as_secs_f64();
                    let value = serde_json::from_str(&text)
                        .map_err(|e| BackendError::BadResponse(e.to_string()))?;
                    return Ok((value, latency));
                }
                Err(ureq::Error::Status(status, response)) => {
                    let body = response.into_string().unwrap_or_default();
                    let err = BackendError::Status { status, body };
                    if status < 500 && status != 429 {
                        return Err(err);
                    }
                    log::warn!("{url}: HTTP {status} on attempt {attempt}/{attempts}");
                    last_err = Some(err);
                }
                Err(ureq::Error::Transport(t)) => {
                    log::warn!("{url}: {t} on attempt {attempt}/{attempts}");
                    last_err = Some(if is_timeout(&t) {
                        BackendError::Timeout { attempts }
                    } else {
                        BackendError::Transport {
                            attempts,
                            message: t.to_string(),
                        }
                    });
                }
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

/// Model-hub style `POST {base}/api/generate`.
pub struct ModelhubBackend {
    client: JsonClient,
}

#[derive(Deserialize)]
struct ModelhubResponse {
    response: String,
    prompt_eval_count: Option<u64>,
    eval_count: Option<u64>,
}

impl ModelhubBackend {
    pub fn new(descriptor: BackendDescriptor) -> Self {
        Self {
            client: JsonClient::new(descriptor),
        }
    }
}

impl Backend for ModelhubBackend {
    fn generate(&self, prompt: &str) -> Result<GenerationResult, BackendError> {
        let d = &self.client.descriptor;
        let body = json!({
            "model": d.model,
            "prompt": prompt,
            "stream": false,
            "options": { "temperature": d.temperature, "num_predict": d.max_tokens },
        });
        let (value, latency) = self.client.post("/api/generate", &body)?;
        let parsed: ModelhubResponse =
            serde_json::from_value(value).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let exact = parsed.prompt_eval_count.is_some() && parsed.eval_count.is_some();
        Ok(GenerationResult {
            tokens_in: parsed
                .prompt_eval_count
                .filter(|_| exact)
                .unwrap_or_else(|| approx_token_count(prompt)),
            tokens_out: parsed
                .eval_count
                .filter(|_| exact)
                .unwrap_or_else(|| approx_token_count(&parsed.response)),
            text: parsed.response,
            latency,
            token_counts_exact: exact,
        })
    }
}

/// OpenAI-compatible `POST {base}/v1/chat/completions`.
pub struct OpenAiBackend {
    client: JsonClient,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiBackend {
    pub fn new(descriptor: BackendDescriptor) -> Self {
        Self {
            client: JsonClient::new(descriptor),
        }
    }
}

impl Backend for OpenAiBackend {
    fn generate(&self, prompt: &str) -> Result<GenerationResult, BackendError> {
        let d = &self.client.descriptor;
        let body = json!({
            "model": d.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": d.temperature,
            "max_tokens": d.max_tokens,
            "stream": false,
        });
        let (value, latency) = self.client.post("/v1/chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::BadResponse("no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        Ok(match parsed.usage {
            Some(usage) => GenerationResult {
                text,
                tokens_in: usage.prompt_tokens,
                tokens_out: usage.completion_tokens,
                latency,
                token_counts_exact: true,
            },
            None => GenerationResult {
                tokens_in: approx_token_count(prompt),
                tokens_out: approx_token_count(&text),
                text,
                latency,
                token_counts_exact: false,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::BackendKind;

    #[test]
    fn env_var_names() {
        let d = BackendDescriptor::http(BackendKind::OpenaiHttp, "http://x", "m");
        assert_eq!(api_key_env_var(&d), "CEBENCH_API_KEY_OPENAI_HTTP");
        let named = BackendDescriptor {
            name: Some("claude-3".into()),
            ..d
        };
        assert_eq!(api_key_env_var(&named), "CEBENCH_API_KEY_CLAUDE_3");
    }
}
