//! Gaussian RBF embedding against randomly chosen training anchors.

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrixkit::{ensure_finite, seeded_rng, Matrix};

const ANCHOR_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap {
    anchors: Matrix,
    sigma: f64,
}

impl KernelMap {
    pub fn new(anchors: Matrix, sigma: f64) -> Result<Self> {
        if anchors.ncols() == 0 {
            return Err(Error::invalid("kernel map needs at least one anchor"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("bandwidth {sigma} must be positive")));
        }
        ensure_finite(&anchors, "kernel anchors")?;
        Ok(KernelMap { anchors, sigma })
    }

    /// `m x d`, one anchor per column.
    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.anchors.nrows()
    }
}

/// Picks `d` distinct samples as anchors and sets the bandwidth.
///
/// Without an override, `2 sigma^2` is the mean squared distance over all
/// (sample, anchor) pairs. If that mean is zero (all samples coincide) the
/// bandwidth falls back to 1.
pub fn fit_kernel(
    features: &Matrix,
    d: usize,
    seed: u64,
    sigma_override: Option<f64>,
) -> Result<KernelMap> {
    let n = features.ncols();
    if d == 0 || d > n {
        return Err(Error::invalid(format!(
            "cannot select {d} anchors from {n} samples"
        )));
    }
    ensure_finite(features, "kernel features")?;
    let mut rng = seeded_rng(seed, ANCHOR_STREAM);
    let picked = index::sample(&mut rng, n, d).into_vec();
    let anchors = features.select_columns(&picked);
    let sigma = match sigma_override {
        Some(s) => s,
        None => {
            let total: f64 = (0..n)
                .into_par_iter()
                .map(|j| {
                    let a = features.column(j);
                    anchors
                        .column_iter()
                        .map(|p| squared_distance(a.as_slice(), p.as_slice()))
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
                .iter()
                .sum();
            let mean = total / (n * d) as f64;
            if mean > 0.0 {
                (mean / 2.0).sqrt()
            } else {
                1.0
            }
        }
    };
    KernelMap::new(anchors, sigma)
}

/// `d x n` matrix of `exp(-‖a_j - p_i‖² / 2σ²)`.
pub fn apply_kernel(km: &KernelMap, features: &Matrix) -> Result<Matrix> {
    if features.nrows() != km.input_dim() {
        return Err(Error::shape(
            "apply_kernel",
            format!(
                "features have {} dims, anchors have {}",
                features.nrows(),
                km.input_dim()
            ),
        ));
    }
    let d = km.anchor_count();
    let n = features.ncols();
    let denom = 2.0 * km.sigma * km.sigma;
    let mut out = Matrix::zeros(d, n);
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(j, col)| {
            let a = features.column(j);
            for (i, p) in km.anchors.column_iter().enumerate() {
                col[i] = (-squared_distance(a.as_slice(), p.as_slice()) / denom).exp();
            }
        });
    Ok(out)
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
