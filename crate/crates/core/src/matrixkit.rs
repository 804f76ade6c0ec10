//! Dense linear algebra used by every other module.
//!
//! Matrices are [`nalgebra::DMatrix<f64>`] and therefore stored column-major.
//! Nothing outside this module depends on that layout; all contracts are
//! phrased in (rows, cols).

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-10;

/// Thin singular value decomposition `m = u * diag(s) * vt`.
///
/// For an `r x c` input with `k = min(r, c)`, `u` is `r x k`, `s` has `k`
/// entries sorted descending and `vt` is `k x c`. No rank truncation is
/// applied.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vector,
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, sv) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*sv);
        }
        us * &self.vt
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::shape("svd", format!("empty {rows} x {cols} input")));
    }
    ensure_finite(m, "svd input")?;
    let dec = SVD::try_new(m.clone(), true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or(Error::SvdNoConvergence { rows, cols })?;
    let (u, vt) = match (dec.u, dec.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::SvdNoConvergence { rows, cols }),
    };
    let out = Svd {
        u,
        s: dec.singular_values,
        vt,
    };
    ensure_finite(&out.u, "svd")?;
    ensure_finite(&out.vt, "svd")?;
    Ok(out)
}

/// The orthogonal polar factor `U * Vt` of `m`.
///
/// For `m` with at least as many rows as columns this is the matrix with
/// orthonormal columns maximizing `Tr(Zᵀ m)`; for wide `m` it has orthonormal
/// rows and maximizes the same trace.
pub fn orthogonal_polar(m: &Matrix) -> Result<Matrix> {
    let d = svd(m)?;
    Ok(d.u * d.vt)
}

/// Solves `a * x = b` for symmetric positive-definite `a` by Cholesky.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::shape("solve_spd", format!("{} x {} is not square", n, a.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::shape(
            "solve_spd",
            format!("rhs has {} rows, system has {n}", b.nrows()),
        ));
    }
    ensure_finite(a, "solve_spd input")?;
    ensure_finite(b, "solve_spd input")?;
    let scale = a.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let x = chol.solve(b);
    ensure_finite(&x, "solve_spd")?;
    Ok(x)
}

/// An `l x n` matrix with orthonormal rows, drawn from the Haar measure.
pub fn random_orthonormal_rows(l: usize, n: usize, seed: u64) -> Result<Matrix> {
    let mut rng = seeded_rng(seed, 0);
    random_orthonormal_rows_with(l, n, &mut rng)
}

pub(crate) fn random_orthonormal_rows_with(
    l: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if l == 0 || l > n {
        return Err(Error::invalid(format!(
            "cannot draw {l} orthonormal rows of length {n}"
        )));
    }
    let g = gaussian_matrix(n, l, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the column signs so the distribution is Haar and not QR-dependent.
    for j in 0..l {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q.transpose())
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    // Fill row by row so the draw order does not depend on storage layout.
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Deterministic generator for a `(seed, stream)` pair. Distinct streams of
/// the same seed are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Sign with the tie rule `sgn(0) = +1`.
#[inline]
pub fn sgn(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// `‖m m^T - I‖_F`.
pub fn row_orthonormality_error(m: &Matrix) -> f64 {
    let g = m * m.transpose();
    (g - Matrix::identity(m.nrows(), m.nrows())).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        gaussian_matrix(rows, cols, &mut seeded_rng(seed, 99))
    }

    #[test]
    fn svd_identity() {
        let d = svd(&Matrix::identity(3, 3)).unwrap();
        for s in d.s.iter() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_diagonal_is_signed_permutation() {
        let m = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]);
        let d = svd(&m).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-14);
        assert!((d.s[1] - 2.0).abs() < 1e-14);
        for f in [&d.u, &d.vt] {
            for v in f.iter() {
                let a = v.abs();
                assert!(a < 1e-14 || (a - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn svd_reconstructs_random() {
        let m = random(5, 3, 1);
        let d = svd(&m).unwrap();
        assert_eq!(d.u.shape(), (5, 3));
        assert_eq!(d.vt.shape(), (3, 3));
        assert!((d.reconstruct() - &m).norm() < 1e-10);
        assert!(d.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert!(d.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn svd_rejects_empty_and_nan() {
        assert!(svd(&Matrix::zeros(0, 3)).is_err());
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn polar_of_orthonormal_is_itself() {
        let q = random_orthonormal_rows(3, 7, 1).unwrap().transpose();
        assert!((orthogonal_polar(&q).unwrap() - &q).norm() < 1e-12);
        let p = orthogonal_polar(&Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert!((p - Matrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn solve_identity_and_scalar() {
        let b = random(3, 2, 2);
        let x = solve_spd(&Matrix::identity(3, 3), &b).unwrap();
        assert!((x - &b).norm() < 1e-15);
        let x = solve_spd(&(Matrix::identity(3, 3) * 2.0), &Matrix::identity(3, 3)).unwrap();
        assert!((x - Matrix::identity(3, 3) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        let a0 = random(4, 4, 3);
        let a = a0.transpose() * &a0 + Matrix::identity(4, 4);
        let b = random(4, 3, 4);
        let x = solve_spd(&a, &b).unwrap();
        assert!((&a * x - b).norm() < 1e-10);
    }

    #[test]
    fn solve_rejects_indefinite_and_asymmetric() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_spd(&a, &Matrix::identity(2, 2)),
            Err(Error::NotPositiveDefinite)
        ));
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(
            solve_spd(&a, &Matrix::identity(2, 2)),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(matches!(
            solve_spd(&Matrix::identity(2, 2), &Matrix::identity(3, 1)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn orthonormal_rows_square_and_rect() {
        let q = random_orthonormal_rows(2, 2, 11).unwrap();
        assert!(row_orthonormality_error(&q) < 1e-10);
        let q = random_orthonormal_rows(3, 8, 7).unwrap();
        assert_eq!(q.shape(), (3, 8));
        for i in 0..3 {
            assert!((q.row(i).norm() - 1.0).abs() < 1e-10);
        }
        assert_eq!(q, random_orthonormal_rows(3, 8, 7).unwrap());
        assert_ne!(q, random_orthonormal_rows(3, 8, 8).unwrap());
    }

    #[test]
    fn orthonormal_rows_rejects_wide() {
        assert!(random_orthonormal_rows(4, 3, 0).is_err());
        assert!(random_orthonormal_rows(0, 3, 0).is_err());
    }

    #[test]
    fn sgn_tie_is_positive() {
        assert_eq!(sgn(0.0), 1.0);
        assert_eq!(sgn(-0.0), 1.0);
        assert_eq!(sgn(-1e-300), -1.0);
    }
}
