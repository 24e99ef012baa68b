//! Seeded synthetic datasets for the self-checks.

use mondrian_forest::{Dataset, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `n` points uniform on `[0, 1]^dim` with labels drawn uniformly from
/// `0..num_classes`, independent of the features.
pub fn uniform_random_labels(n: usize, dim: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        features.extend((0..dim).map(|_| rng.random::<f64>()));
        labels.push(rng.random_range(0..num_classes));
    }
    Dataset::new(features, labels, dim, num_classes)
}

/// `n` points uniform on `[0, 1]^dim`, labelled by which side of the
/// diagonal hyperplane `sum(x) = dim / 2` they fall on.
pub fn uniform_halfspace(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        labels.push(usize::from(x.iter().sum::<f64>() > 0.5 * dim as f64));
        features.extend(x);
    }
    Dataset::new(features, labels, dim, 2)
}

/// Two-class problem in `dim` dimensions: class means at `-shift` and
/// `+shift` along every axis with unit-variance Gaussian noise, plus a ring
/// of class-1 points around a class-0 core in the first two coordinates so
/// the boundary is not axis aligned.
pub fn two_class(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    assert!(dim >= 2, "two_class needs at least two dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..2usize);
        let mut x: Vec<f64> = (0..dim).map(|_| noise.sample(&mut rng)).collect();
        if y == 1 {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let radius = 2.5 + 0.5 * noise.sample(&mut rng);
            x[0] = radius * angle.cos();
            x[1] = radius * angle.sin();
            for v in &mut x[2..] {
                *v += 0.5;
            }
        } else {
            x[0] *= 0.8;
            x[1] *= 0.8;
            for v in &mut x[2..] {
                *v -= 0.5;
            }
        }
        features.extend(x);
        labels.push(y);
    }
    Dataset::new(features, labels, dim, 2)
}
