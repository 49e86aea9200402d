//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linkmf::graph::{build_knn, GraphLaplacian};
use linkmf::synth::{generate, SyntheticData, SyntheticSpec};

/// A planted instance sized for benchmarking.
pub fn bench_instance(m: usize) -> SyntheticData {
    generate(&SyntheticSpec {
        m,
        d_true: 8,
        positive_rate: 0.01,
        noise: 0.0,
        sim_noise: 0.05,
        sim_neighbors: 20,
        seed: 99,
    })
    .expect("valid spec")
}

pub fn bench_laplacian(data: &SyntheticData, k: usize) -> GraphLaplacian {
    build_knn(&data.sim_a, k).expect("valid k").laplacian()
}

/// Random factor matrix with entries in [-0.5, 0.5).
pub fn random_factors(m: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, d), |_| rng.random::<f64>() - 0.5)
}

/// Quantized scores and random labels for the metric benchmarks.
pub fn scored_labels(n: usize, positive_rate: f64, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = (0..n)
        .map(|_| (rng.random_range(0..10_000) as f64) / 1e4)
        .collect();
    let mut labels: Vec<bool> = (0..n)
        .map(|_| rng.random::<f64>() < positive_rate)
        .collect();
    labels[0] = true;
    labels[n - 1] = false;
    (scores, labels)
}
