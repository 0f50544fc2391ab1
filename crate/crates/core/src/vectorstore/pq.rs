use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingVector, VectorError};
use crate::num::{squared_distance, Scalar};

/// Lloyd iteration cap per subspace.
pub const PQ_MAX_ITERATIONS: usize = 25;
/// Largest centroid displacement below which training stops early.
pub const PQ_TOLERANCE: f64 = 1e-6;

/// Per-subspace codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantParams<S> {
    pub subspaces: usize,
    pub centroids: usize,
    pub sub_dim: usize,
    /// `subspaces` entries, each `centroids * sub_dim` values row-major.
    pub codebooks: Vec<Vec<S>>,
    pub seed: u64,
}

impl<S: Scalar> ProductQuantParams<S> {
    pub fn dim(&self) -> usize {
        self.subspaces * self.sub_dim
    }

    pub fn centroid(&self, subspace: usize, code: usize) -> &[S] {
        let start = code * self.sub_dim;
        &self.codebooks[subspace][start..start + self.sub_dim]
    }

    fn nearest(&self, subspace: usize, sub: &[S]) -> usize {
        nearest_centroid(&self.codebooks[subspace], self.sub_dim, sub)
    }
}

/// Index of the closest centroid by squared Euclidean distance; ties go to the lowest index.
fn nearest_centroid<S: Scalar>(codebook: &[S], sub_dim: usize, sub: &[S]) -> usize {
    let mut best = 0;
    let mut best_dist = S::infinity();
    for (i, centroid) in codebook.chunks_exact(sub_dim).enumerate() {
        let d = squared_distance(centroid, sub);
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

/// k-means++ seeding: `k` distinct training points, each later pick drawn
/// proportionally to its squared distance from the nearest earlier pick.
fn seed_centroids<S: Scalar>(points: &[&[S]], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[chosen[0]]).as_f64())
        .collect();
    while chosen.len() < k {
        let total: f64 = (0..n)
            .filter(|i| !chosen.contains(i))
            .map(|i| nearest[i])
            .sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for i in (0..n).filter(|i| !chosen.contains(i)) {
                if nearest[i] <= 0.0 {
                    continue;
                }
                pick = Some(i);
                target -= nearest[i];
                if target < 0.0 {
                    break;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            let remaining: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            remaining[rng.gen_range(0..remaining.len())]
        };
        chosen.push(pick);
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, points[pick]).as_f64();
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    chosen
}

fn lloyd<S: Scalar>(points: &[&[S]], k: usize, sub_dim: usize, rng: &mut ChaCha8Rng) -> Vec<S> {
    let mut codebook: Vec<S> = seed_centroids(points, k, rng)
        .into_iter()
        .flat_map(|i| points[i].iter().copied())
        .collect();
    let mut sums = vec![S::zero(); k * sub_dim];
    let mut counts = vec![0usize; k];
    for _ in 0..PQ_MAX_ITERATIONS {
        sums.iter_mut().for_each(|s| *s = S::zero());
        counts.iter_mut().for_each(|c| *c = 0);
        for p in points {
            let c = nearest_centroid(&codebook, sub_dim, p);
            counts[c] += 1;
            for (s, &x) in sums[c * sub_dim..(c + 1) * sub_dim].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut movement = S::zero();
        for c in 0..k {
            // empty clusters keep their centroid
            if counts[c] == 0 {
                continue;
            }
            let n = S::of(counts[c] as f64);
            let range = c * sub_dim..(c + 1) * sub_dim;
            let updated: Vec<S> = sums[range.clone()].iter().map(|&s| s / n).collect();
            movement = movement.max(squared_distance(&codebook[range.clone()], &updated).sqrt());
            codebook[range].copy_from_slice(&updated);
        }
        if movement < S::of(PQ_TOLERANCE) {
            break;
        }
    }
    codebook
}

/// Trains one k-means codebook per subspace.
pub fn pq_train<S: Scalar>(
    vectors: &[EmbeddingVector<S>],
    subspaces: usize,
    centroids: usize,
    seed: u64,
) -> Result<ProductQuantParams<S>, VectorError> {
    if centroids == 0 || centroids > 256 {
        return Err(VectorError::InvalidCentroidCount(centroids));
    }
    if vectors.len() < centroids {
        return Err(VectorError::TooFewTrainingVectors {
            needed: centroids,
            got: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    if subspaces == 0 || dim % subspaces != 0 {
        return Err(VectorError::IndivisibleDimension { dim, subspaces });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(VectorError::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    let sub_dim = dim / subspaces;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codebooks = (0..subspaces)
        .map(|m| {
            let points: Vec<&[S]> = vectors
                .iter()
                .map(|v| &v[m * sub_dim..(m + 1) * sub_dim])
                .collect();
            lloyd(&points, centroids, sub_dim, &mut rng)
        })
        .collect();
    Ok(ProductQuantParams {
        subspaces,
        centroids,
        sub_dim,
        codebooks,
        seed,
    })
}

/// Nearest centroid index per subspace.
pub fn pq_encode<S: Scalar>(
    v: &[S],
    params: &ProductQuantParams<S>,
) -> Result<Vec<u8>, VectorError> {
    if v.len() != params.dim() {
        return Err(VectorError::DimensionMismatch {
            expected: params.dim(),
            actual: v.len(),
        });
    }
    Ok(v.chunks_exact(params.sub_dim)
        .enumerate()
        .map(|(m, sub)| params.nearest(m, sub) as u8)
        .collect())
}

/// Concatenation of the selected centroids.
pub fn pq_decode<S: Scalar>(
    codes: &[u8],
    params: &ProductQuantParams<S>,
) -> Result<EmbeddingVector<S>, VectorError> {
    if codes.len() != params.subspaces {
        return Err(VectorError::DimensionMismatch {
            expected: params.subspaces,
            actual: codes.len(),
        });
    }
    if let Some(&c) = codes.iter().find(|&&c| usize::from(c) >= params.centroids) {
        return Err(VectorError::Snapshot(format!(
            "code {c} out of range for {} centroids",
            params.centroids
        )));
    }
    Ok(codes
        .iter()
        .enumerate()
        .flat_map(|(m, &c)| params.centroid(m, usize::from(c)).iter().copied())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn mse(vectors: &[Vec<f64>], params: &ProductQuantParams<f64>) -> f64 {
        let total: f64 = vectors
            .iter()
            .map(|v| {
                let r = pq_decode(&pq_encode(v, params).unwrap(), params).unwrap();
                squared_distance(v, &r)
            })
            .sum();
        total / (vectors.len() * vectors[0].len()) as f64
    }

    #[test]
    fn k_training_points_reconstruct_exactly() {
        let vectors = random_vectors(4, 6, 1);
        let params = pq_train(&vectors, 3, 4, 9).unwrap();
        for v in &vectors {
            let decoded = pq_decode(&pq_encode(v, &params).unwrap(), &params).unwrap();
            assert_eq!(&decoded, v);
        }
    }

    #[test]
    fn single_centroid_is_the_mean() {
        let vectors = random_vectors(17, 5, 2);
        let params = pq_train(&vectors, 1, 1, 0).unwrap();
        let mut mean = vec![0.0; 5];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= vectors.len() as f64);
        for v in &vectors {
            let decoded = pq_decode(&pq_encode(v, &params).unwrap(), &params).unwrap();
            for (d, m) in decoded.iter().zip(&mean) {
                assert!((d - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn more_centroids_do_not_hurt() {
        let vectors = random_vectors(64, 8, 3);
        let coarse = pq_train(&vectors, 2, 2, 11).unwrap();
        let fine = pq_train(&vectors, 2, 4, 11).unwrap();
        assert!(mse(&vectors, &fine) <= mse(&vectors, &coarse));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let vectors = random_vectors(40, 8, 4);
        assert_eq!(
            pq_train(&vectors, 4, 8, 5).unwrap(),
            pq_train(&vectors, 4, 8, 5).unwrap()
        );
    }

    #[test]
    fn rejects_bad_shapes() {
        let vectors = random_vectors(3, 6, 5);
        assert!(matches!(
            pq_train(&vectors, 4, 2, 0),
            Err(VectorError::IndivisibleDimension { .. })
        ));
        assert!(matches!(
            pq_train(&vectors, 2, 4, 0),
            Err(VectorError::TooFewTrainingVectors { .. })
        ));
        assert!(matches!(
            pq_train(&vectors, 2, 0, 0),
            Err(VectorError::InvalidCentroidCount(0))
        ));
    }

    #[test]
    fn nearest_ties_go_to_lowest_index() {
        let codebook = [1.0, -1.0];
        assert_eq!(nearest_centroid(&codebook, 1, &[0.0f64]), 0);
    }
}
