//! Seeded Gaussian-blob datasets for tests and the `bench` subcommand.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrixkit::{seeded_rng, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    /// Standard deviation of the class centers around the origin.
    pub spread: f64,
    /// Standard deviation of samples around their center.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n: 2000,
            dim: 32,
            classes: 10,
            spread: 3.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Balanced classes (sizes differ by at most one) in shuffled order.
pub fn gaussian_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.dim == 0 || spec.n < spec.classes {
        return Err(Error::invalid(format!(
            "cannot draw {} samples of dim {} over {} classes",
            spec.n, spec.dim, spec.classes
        )));
    }
    let center_dist = Normal::new(0.0, spec.spread).map_err(|e| Error::invalid(e.to_string()))?;
    let noise_dist = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;

    let mut rng = seeded_rng(spec.seed, 0);
    let mut centers = Matrix::zeros(spec.dim, spec.classes);
    for k in 0..spec.classes {
        for i in 0..spec.dim {
            centers[(i, k)] = center_dist.sample(&mut rng);
        }
    }
    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Matrix::zeros(spec.dim, spec.n);
    for (j, &l) in labels.iter().enumerate() {
        for i in 0..spec.dim {
            features[(i, j)] = centers[(i, l)] + noise_dist.sample(&mut rng);
        }
    }
    Dataset::new(features, labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let spec = BlobSpec {
            n: 103,
            classes: 10,
            dim: 3,
            seed: 4,
            ..Default::default()
        };
        let ds = gaussian_blobs(&spec).unwrap();
        let mut counts = [0; 10];
        for &l in ds.labels() {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10 || c == 11));
        assert_eq!(ds, gaussian_blobs(&spec).unwrap());
    }
}
