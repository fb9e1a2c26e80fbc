#![allow(dead_code)]

pub mod gir;

use sdm_core::dgp::{generate, generate_coordinates, DgpConfig, Simulation};
use sdm_core::weights::{KnnOptions, WeightMatrix};

/// Batch-means standard error of the mean of a (possibly autocorrelated) chain.
pub fn batch_se(x: &[f64], batches: usize) -> f64 {
    let len = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Simulates a panel and the k-NN weights built from its own coordinates.
pub fn simulate(cfg: &DgpConfig<f64>, k: usize) -> (Simulation<f64>, WeightMatrix<f64>) {
    let w = WeightMatrix::knn(&generate_coordinates(cfg), k, &KnnOptions::default()).unwrap();
    (generate(cfg, &w).unwrap(), w)
}
