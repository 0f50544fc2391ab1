use cebench_core::config::QuantizationMode;
use cebench_core::corpus::Chunk;
use cebench_core::vectorstore::{
    builtin_embedding, pq_decode, pq_encode, pq_train, read_snapshot, write_snapshot,
    IndexBuildOptions, VectorIndex,
};
use cebench_core::{VectorIndexF32, VectorIndexF64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chunks(n: usize) -> Vec<Chunk> {
    (0..n)
        .map(|i| Chunk {
            chunk_id: format!("doc#{i}"),
            source_path: "doc".into(),
            start_offset: i * 10,
            text: format!("chunk {i}"),
        })
        .collect()
}

/// Cosine ranking by hand: descending score, ties by position.
fn brute_force(vectors: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    let norm = |v: &[f64]| v.iter().fold(0.0, |acc, x| acc + x * x).sqrt();
    let qn = norm(query);
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot = v.iter().zip(query).fold(0.0, |acc, (a, b)| acc + a * b);
            let denom = norm(v) * qn;
            (i, if denom == 0.0 { 0.0 } else { dot / denom })
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

#[test]
fn fnv_buckets_match_published_hashes() {
    // FNV-1a 64-bit reference values for "a" and "foobar"
    for (token, hash) in [("a", 0xaf63dc4c8601ec8cu64), ("foobar", 0x85944171f73967e8)] {
        for dim in [7usize, 64, 256, 1000] {
            let v: Vec<f64> = builtin_embedding(token, dim);
            let bucket = (hash % dim as u64) as usize;
            assert_eq!(v[bucket], 1.0, "{token} dim {dim}");
            assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        }
    }
}

#[test]
fn embedding_counts_repeated_tokens() {
    // "Foobar, foobar A!" -> foobar twice, a once
    let dim = 1000;
    let v: Vec<f64> = builtin_embedding("Foobar, foobar A!", dim);
    let norm = 5f64.sqrt();
    assert!((v[(0x85944171f73967e8u64 % 1000) as usize] - 2.0 / norm).abs() < 1e-15);
    assert!((v[(0xaf63dc4c8601ec8cu64 % 1000) as usize] - 1.0 / norm).abs() < 1e-15);
}

#[test]
fn top_k_matches_brute_force_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..40 {
        let n = rng.gen_range(1..80);
        let d = rng.gen_range(1..12);
        // small integer grid so exact ties are common
        let mut vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2..=2) as f64).collect())
            .collect();
        if n > 3 {
            vectors[n - 1] = vectors[0].clone();
        }
        let index = VectorIndexF64::build(chunks(n), vectors.clone(), QuantizationMode::No, &IndexBuildOptions::default()).unwrap();
        let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-2..=2) as f64).collect();
        let k = rng.gen_range(1..=n + 2);
        let got: Vec<usize> = index.search_top_k(&query, k).unwrap().iter().map(|h| h.position).collect();
        assert_eq!(got, brute_force(&vectors, &query, k), "trial {trial}");
    }
}

#[test]
fn hits_carry_chunk_ids() {
    let vectors = vec![vec![1.0f32, 0.0], vec![0.0, 1.0], vec![0.7, 0.7]];
    let index = VectorIndexF32::build(chunks(3), vectors, QuantizationMode::No, &IndexBuildOptions::default()).unwrap();
    let hits = index.search_top_k(&[0.0, 1.0], 2).unwrap();
    assert_eq!(hits[0].chunk_id, "doc#1");
    assert_eq!(hits[1].chunk_id, "doc#2");
    assert!(hits[0].score >= hits[1].score);
}

#[test]
fn pq_reconstructs_cluster_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let centers: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    let data: Vec<Vec<f64>> = (0..64).map(|i| centers[i % 4].clone()).collect();
    let params = pq_train(&data, 2, 4, 3).unwrap();
    for v in &data {
        let back = pq_decode(&pq_encode(v, &params).unwrap(), &params).unwrap();
        let mse: f64 = v.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mse <= 1e-6, "mse {mse}");
    }
}

#[test]
fn snapshot_file_round_trip_preserves_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vectors: Vec<Vec<f32>> = (0..40).map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let dir = tempfile::tempdir().unwrap();
    for mode in [QuantizationMode::No, QuantizationMode::Sq, QuantizationMode::Pq] {
        let options = IndexBuildOptions {
            pq_subspaces: 4,
            pq_centroids: 8,
            seed: 0,
        };
        let index = VectorIndex::build(chunks(40), vectors.clone(), mode, &options).unwrap();
        let path = dir.path().join(format!("{}.idx", mode.as_str()));
        write_snapshot(&index, std::fs::File::create(&path).unwrap()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"CEBVIDX1");
        let loaded: VectorIndexF32 = read_snapshot(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(loaded.chunks(), index.chunks());
        for q in vectors.iter().take(5) {
            let a: Vec<usize> = index.search_top_k(q, 5).unwrap().iter().map(|h| h.position).collect();
            let b: Vec<usize> = loaded.search_top_k(q, 5).unwrap().iter().map(|h| h.position).collect();
            assert_eq!(a, b, "{mode:?}");
        }
    }
}
