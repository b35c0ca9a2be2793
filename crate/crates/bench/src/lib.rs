//! Shared fixtures for the criterion benchmarks in `benches/`.

use keyframe_core::neuralcore::Tensor1D;
use keyframe_core::rng::stream;
use keyframe_core::SimilarityMatrix;
use rand::Rng;

/// Similarity matrix with entries uniform in `(0.001, 1)`.
pub fn random_matrix(n_queries: usize, n_frames: usize, seed: u64) -> SimilarityMatrix {
    let mut rng = stream(seed, &[0xbe]);
    let values = (0..n_queries * n_frames).map(|_| rng.random_range(0.001..1.0)).collect();
    SimilarityMatrix::new(n_queries, n_frames, values).expect("entries are in range")
}

pub fn random_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0xbf]);
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

pub fn random_tensor(channels: usize, length: usize, seed: u64) -> Tensor1D {
    let mut rng = stream(seed, &[0xc0]);
    let values = (0..channels * length).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor1D::from_vec(channels, length, values).expect("length matches")
}
