#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rslh::dataio::CodeMatrix;
use rslh::matrixkit::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7e57)
}

pub fn gauss(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn signs(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CodeMatrix {
    let m = Matrix::from_fn(rows, cols, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    CodeMatrix::new(m).unwrap()
}

pub fn labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Labels covering every class at least twice.
pub fn covering_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(n >= 2 * classes);
    let mut l: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for i in (1..n).rev() {
        l.swap(i, rng.random_range(0..=i));
    }
    l
}

/// Central difference of `f` along every coordinate of `at`; returns the
/// largest absolute directional derivative.
pub fn max_fd_gradient(at: &Matrix, f: impl Fn(&Matrix) -> f64, eps: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let mut plus = at.clone();
            let mut minus = at.clone();
            plus[(i, j)] += eps;
            minus[(i, j)] -= eps;
            worst = worst.max(((f(&plus) - f(&minus)) / (2.0 * eps)).abs());
        }
    }
    worst
}

pub fn frob_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Per-query `(ap, ap_within_2, precision_at_k)` computed the slow way:
/// position-by-position distances, a comparison sort, and precision at each
/// relevant rank recounted from scratch.
pub fn brute_force_metrics(
    query: &CodeMatrix,
    db: &CodeMatrix,
    query_labels: &[usize],
    db_labels: &[usize],
    k: usize,
) -> Vec<(f64, f64, f64)> {
    let (qm, dm) = (query.as_matrix(), db.as_matrix());
    let l = qm.nrows();
    (0..qm.ncols())
        .map(|i| {
            let mut items: Vec<(usize, usize)> = (0..dm.ncols())
                .map(|j| ((0..l).filter(|&b| qm[(b, i)] != dm[(b, j)]).count(), j))
                .collect();
            items.sort();
            let rel: Vec<bool> = items.iter().map(|&(_, j)| db_labels[j] == query_labels[i]).collect();
            let ap_of = |list: &[bool]| {
                let total = list.iter().filter(|&&r| r).count();
                if total == 0 {
                    return 0.0;
                }
                let mut s = 0.0;
                for p in 0..list.len() {
                    if list[p] {
                        let hits = list[..=p].iter().filter(|&&r| r).count();
                        s += hits as f64 / (p + 1) as f64;
                    }
                }
                s / total as f64
            };
            let within: Vec<bool> = items
                .iter()
                .zip(&rel)
                .filter(|((d, _), _)| *d <= 2)
                .map(|(_, &r)| r)
                .collect();
            let prec = rel[..k].iter().filter(|&&r| r).count() as f64 / k as f64;
            (ap_of(&rel), ap_of(&within), prec)
        })
        .collect()
}
