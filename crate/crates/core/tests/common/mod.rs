#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use workbench_core::data::{prepare, Column, Dataset, TaskKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniforms(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Named numeric features plus a target column `y`.
pub fn numeric_dataset(features: Vec<(&str, Vec<f64>)>, y: Vec<f64>, task: TaskKind) -> Dataset {
    let mut cols: Vec<Column> = features.into_iter().map(|(n, v)| Column::numeric(n, v)).collect();
    cols.push(Column::numeric("y", y));
    Dataset::new("fixture", cols, "y", task).unwrap()
}

/// `y = intercept + Σ beta_j x_j + noise_sd * ε` with standard normal x,
/// split 80/20.
pub fn linear_dataset(n: usize, beta: &[f64], intercept: f64, noise_sd: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let xs: Vec<Vec<f64>> = beta.iter().map(|_| normals(&mut r, n)).collect();
    let eps = normals(&mut r, n);
    let y: Vec<f64> = (0..n)
        .map(|i| intercept + beta.iter().zip(&xs).map(|(b, x)| b * x[i]).sum::<f64>() + noise_sd * eps[i])
        .collect();
    let names: Vec<String> = (0..beta.len()).map(|j| format!("x{}", j + 1)).collect();
    let feats = names.iter().map(|s| s.as_str()).zip(xs).collect();
    prepare(&numeric_dataset(feats, y, TaskKind::Regression), 0.2, seed).unwrap()
}
