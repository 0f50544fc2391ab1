//! Chunk embeddings, quantized storage and top-K cosine search.

mod embed;
mod index;
mod pq;
mod snapshot;
mod sq;

use thiserror::Error;

pub use embed::{builtin_embedding, embed, EmbeddingProvider, DEFAULT_EMBEDDING_DIM};
pub use index::{IndexBuildOptions, SearchHit, VectorIndex};
pub use pq::{pq_decode, pq_encode, pq_train, ProductQuantParams, PQ_MAX_ITERATIONS, PQ_TOLERANCE};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC};
pub use sq::{sq_dequantize, sq_quantize, ScalarQuantParams, SQ_BITS, SQ_LEVELS};

/// A dense embedding of dimension `d`.
pub type EmbeddingVector<S> = Vec<S>;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be positive")]
    ZeroK,
    #[error("{0} vectors given for {1} chunks")]
    CountMismatch(usize, usize),
    #[error("need at least {needed} training vectors, got {got}")]
    TooFewTrainingVectors { needed: usize, got: usize },
    #[error("dimension {dim} is not divisible by {subspaces} subspaces")]
    IndivisibleDimension { dim: usize, subspaces: usize },
    #[error("centroids per subspace must be in 1..=256, got {0}")]
    InvalidCentroidCount(usize),
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("snapshot format error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
