use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, VectorError};
use crate::num::Scalar;

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

fn default_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

fn default_timeout() -> f64 {
    60.0
}

/// Where embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingProvider {
    /// Hashed bag-of-words; deterministic and offline.
    Builtin {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// OpenAI-compatible embeddings endpoint (full URL).
    Http {
        url: String,
        model: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider::Builtin {
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Lowercased alphanumeric runs. Text without any yields the single empty token.
fn tokens(text: &str) -> Vec<String> {
    let toks: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    if toks.is_empty() {
        vec![String::new()]
    } else {
        toks
    }
}

/// Token counts hashed (FNV-1a, 64-bit) into `dim` buckets, then L2-normalized.
pub fn builtin_embedding<S: Scalar>(text: &str, dim: usize) -> EmbeddingVector<S> {
    let mut counts = vec![0.0f64; dim];
    for token in tokens(text) {
        counts[(fnv1a(token.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    counts.into_iter().map(|c| S::of(c / norm)).collect()
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Embeds `texts`, one vector per text, all of the same dimension.
pub fn embed<S: Scalar>(
    texts: &[&str],
    provider: &EmbeddingProvider,
) -> Result<Vec<EmbeddingVector<S>>, VectorError> {
    match provider {
        EmbeddingProvider::Builtin { dim } => {
            if *dim == 0 {
                return Err(VectorError::Provider("builtin dimension must be positive".into()));
            }
            Ok(texts.iter().map(|t| builtin_embedding(t, *dim)).collect())
        }
        EmbeddingProvider::Http {
            url,
            model,
            timeout_s,
        } => {
            if texts.is_empty() {
                return Ok(Vec::new());
            }
            let agent = ureq::AgentBuilder::new()
                .timeout(Duration::from_secs_f64(*timeout_s))
                .build();
            let body = serde_json::json!({ "input": texts, "model": model });
            let response: EmbeddingResponse = agent
                .post(url)
                .send_json(body)
                .map_err(|e| VectorError::Provider(e.to_string()))?
                .into_json()
                .map_err(|e| VectorError::Provider(format!("bad response body: {e}")))?;
            if response.data.len() != texts.len() {
                return Err(VectorError::Provider(format!(
                    "{} embeddings returned for {} inputs",
                    response.data.len(),
                    texts.len()
                )));
            }
            let dim = response.data[0].embedding.len();
            response
                .data
                .into_iter()
                .map(|d| {
                    if d.embedding.len() != dim {
                        return Err(VectorError::DimensionMismatch {
                            expected: dim,
                            actual: d.embedding.len(),
                        });
                    }
                    if d.embedding.iter().any(|x| !x.is_finite()) {
                        return Err(VectorError::NonFinite);
                    }
                    Ok(d.embedding.into_iter().map(S::of).collect())
                })
                .collect()
        }
    }
}
