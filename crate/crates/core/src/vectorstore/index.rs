use std::cmp::Ordering;

use super::pq::{pq_decode, pq_encode, pq_train, ProductQuantParams};
use super::sq::{sq_dequantize, sq_quantize, ScalarQuantParams};
use super::{EmbeddingVector, VectorError};
use crate::config::QuantizationMode;
use crate::corpus::Chunk;
use crate::num::{cosine, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexBuildOptions {
    pub pq_subspaces: usize,
    /// Upper bound; training uses `min(pq_centroids, vector count)`.
    pub pq_centroids: usize,
    pub seed: u64,
}

impl Default for IndexBuildOptions {
    fn default() -> Self {
        Self {
            pq_subspaces: 8,
            pq_centroids: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage<S> {
    Raw,
    Scalar {
        params: ScalarQuantParams<S>,
        codes: Vec<u8>,
    },
    Product {
        params: ProductQuantParams<S>,
        codes: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit<S> {
    /// Insertion position of the chunk.
    pub position: usize,
    pub chunk_id: String,
    pub score: S,
}

/// Read-only after construction; search takes `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex<S> {
    pub(crate) mode: QuantizationMode,
    pub(crate) dim: usize,
    pub(crate) chunks: Vec<Chunk>,
    pub(crate) storage: Storage<S>,
    /// Stored representation per entry: raw, dequantized or decoded.
    pub(crate) vectors: Vec<EmbeddingVector<S>>,
}

impl<S: Scalar> VectorIndex<S> {
    pub fn build(
        chunks: Vec<Chunk>,
        vectors: Vec<EmbeddingVector<S>>,
        mode: QuantizationMode,
        options: &IndexBuildOptions,
    ) -> Result<Self, VectorError> {
        if chunks.len() != vectors.len() {
            return Err(VectorError::CountMismatch(vectors.len(), chunks.len()));
        }
        let dim = vectors.first().ok_or(VectorError::EmptyIndex)?.len();
        for v in &vectors {
            if v.len() != dim {
                return Err(VectorError::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(VectorError::NonFinite);
            }
        }
        let (storage, stored) = match mode {
            QuantizationMode::No => (Storage::Raw, vectors),
            QuantizationMode::Sq => {
                let params = ScalarQuantParams::fit(&vectors)?;
                let mut codes = Vec::with_capacity(vectors.len() * dim);
                let mut stored = Vec::with_capacity(vectors.len());
                for v in &vectors {
                    let c = sq_quantize(v, &params)?;
                    stored.push(sq_dequantize(&c, &params)?);
                    codes.extend(c);
                }
                (Storage::Scalar { params, codes }, stored)
            }
            QuantizationMode::Pq => {
                let k = options.pq_centroids.min(vectors.len());
                let params = pq_train(&vectors, options.pq_subspaces, k, options.seed)?;
                let mut codes = Vec::with_capacity(vectors.len() * params.subspaces);
                let mut stored = Vec::with_capacity(vectors.len());
                for v in &vectors {
                    let c = pq_encode(v, &params)?;
                    stored.push(pq_decode(&c, &params)?);
                    codes.extend(c);
                }
                (Storage::Product { params, codes }, stored)
            }
        };
        Ok(Self {
            mode,
            dim,
            chunks,
            storage,
            vectors: stored,
        })
    }

    pub fn mode(&self) -> QuantizationMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk(&self, position: usize) -> &Chunk {
        &self.chunks[position]
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    /// The vector search compares against for entry `position`.
    pub fn stored_vector(&self, position: usize) -> &[S] {
        &self.vectors[position]
    }

    pub fn scalar_params(&self) -> Option<&ScalarQuantParams<S>> {
        match &self.storage {
            Storage::Scalar { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn product_params(&self) -> Option<&ProductQuantParams<S>> {
        match &self.storage {
            Storage::Product { params, .. } => Some(params),
            _ => None,
        }
    }

    /// The `min(k, n)` best entries by cosine similarity, descending, ties in insertion order.
    pub fn search_top_k(&self, query: &[S], k: usize) -> Result<Vec<SearchHit<S>>, VectorError> {
        if self.is_empty() {
            return Err(VectorError::EmptyIndex);
        }
        if k == 0 {
            return Err(VectorError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(VectorError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut scored: Vec<(usize, S)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, cosine(query, v)))
            .collect();
        // stable sort keeps insertion order among equal scores
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(position, score)| SearchHit {
                position,
                chunk_id: self.chunks[position].chunk_id.clone(),
                score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(i: usize) -> Chunk {
        Chunk {
            chunk_id: format!("doc#{i}"),
            source_path: "doc".into(),
            start_offset: i * 10,
            text: format!("chunk {i}"),
        }
    }

    fn index(vectors: Vec<Vec<f64>>, mode: QuantizationMode) -> VectorIndex<f64> {
        let chunks = (0..vectors.len()).map(chunk).collect();
        let options = IndexBuildOptions {
            pq_subspaces: 1,
            ..Default::default()
        };
        VectorIndex::build(chunks, vectors, mode, &options).unwrap()
    }

    #[test]
    fn query_finds_itself_first() {
        let idx = index(
            vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]],
            QuantizationMode::No,
        );
        let hits = idx.search_top_k(&[0.6, 0.8], 2).unwrap();
        assert_eq!(hits[0].chunk_id, "doc#1");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn large_k_returns_everything_sorted() {
        let idx = index(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            QuantizationMode::No,
        );
        let hits = idx.search_top_k(&[1.0, 0.2], 10).unwrap();
        let order: Vec<usize> = hits.iter().map(|h| h.position).collect();
        assert_eq!(order, [0, 2, 1]);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let idx = index(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![2.0, 0.0]],
            QuantizationMode::No,
        );
        let order: Vec<usize> = idx
            .search_top_k(&[1.0, 0.0], 4)
            .unwrap()
            .iter()
            .map(|h| h.position)
            .collect();
        assert_eq!(order, [1, 3, 0, 2]);
    }

    #[test]
    fn errors_on_bad_queries() {
        let idx = index(vec![vec![1.0, 0.0]], QuantizationMode::No);
        assert!(matches!(idx.search_top_k(&[1.0], 1), Err(VectorError::DimensionMismatch { .. })));
        assert!(matches!(idx.search_top_k(&[1.0, 0.0], 0), Err(VectorError::ZeroK)));
    }

    #[test]
    fn empty_build_is_rejected() {
        let result: Result<VectorIndex<f64>, _> =
            VectorIndex::build(vec![], vec![], QuantizationMode::No, &IndexBuildOptions::default());
        assert!(matches!(result, Err(VectorError::EmptyIndex)));
    }

    #[test]
    fn pq_with_few_vectors_clamps_centroids() {
        let idx = index(vec![vec![1.0, 0.0], vec![0.0, 1.0]], QuantizationMode::Pq);
        assert_eq!(idx.product_params().unwrap().centroids, 2);
        assert_eq!(idx.stored_vector(1), &[0.0, 1.0]);
    }

    #[test]
    fn sq_index_scores_dequantized_vectors() {
        let idx = index(vec![vec![0.0, 1.0], vec![1.0, 0.5]], QuantizationMode::Sq);
        assert!(idx.scalar_params().is_some());
        let hits = idx.search_top_k(&[0.0, 1.0], 1).unwrap();
        assert_eq!(hits[0].position, 0);
    }
}
