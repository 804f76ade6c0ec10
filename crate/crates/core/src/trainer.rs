//! The alternating closed-form trainer.
//!
//! Minimizes
//!
//! ```text
//! ‖Y - WᵀB‖² + α‖H - WY‖² + β‖H - B‖² + γ‖BᵀHR - G‖² + μ‖B - PᵀX‖² + λ‖P‖²
//! s.t. BBᵀ = I, H ∈ {-1,+1}^{L×n}
//! ```
//!
//! by cycling W, B, H and P updates. `X` is the kernelized training set
//! (`d × n`), `Y` the ±1 label matrix (`c × n`), `R` (`n × d`) a fixed
//! column-orthonormal compression of the pairwise similarity `S` and
//! `G = S R`. Each update is the exact minimizer (or, for H, a majorization
//! step) of the objective in its own block, so the objective never increases.

use log::{debug, warn};

use crate::dataio::{CodeMatrix, Dataset, LabelMatrix};
use crate::error::{Error, Result};
use crate::kernelmap::{apply_kernel, fit_kernel, KernelMap};
use crate::matrixkit::{
    frobenius_sq, gaussian_matrix, orthogonal_polar, random_orthonormal_rows_with,
    row_orthonormality_error, seeded_rng, solve_spd, Matrix,
};

const INIT_B_STREAM: u64 = 2;
const INIT_H_STREAM: u64 = 3;

/// Largest `n` for which [`LabelSimilarity::dense`] will allocate `n × n`.
pub const DENSE_SIMILARITY_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub code_length: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Requested anchor count; the kernel uses `min(anchors, n)`.
    pub anchors: usize,
    pub sigma: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 3.0,
            beta: 1e-2,
            gamma: 1e-5,
            mu: 1e-5,
            lambda: 1e-6,
            code_length: 8,
            max_iters: 30,
            rel_tol: 1e-4,
            anchors: 1000,
            sigma: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu", self.mu),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda = {} must be > 0", self.lambda)));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::invalid(format!("rel_tol = {} must be > 0", self.rel_tol)));
        }
        if self.code_length == 0 {
            return Err(Error::invalid("code length must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if self.anchors == 0 {
            return Err(Error::invalid("anchor count must be >= 1"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma = {s} must be > 0")));
            }
        }
        Ok(())
    }

    /// Ridge actually applied in the P update: the P block of the objective
    /// is `μ‖B - PᵀX‖² + λ‖P‖²`, whose minimizer is a ridge with `λ/μ`.
    pub fn projection_ridge(&self) -> Option<f64> {
        (self.mu > 0.0).then(|| self.lambda / self.mu)
    }
}

/// Linear action of a pairwise similarity matrix `S` (`n × n`).
pub trait SimilarityOperator {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn entry(&self, i: usize, j: usize) -> f64;

    /// `S · m` for an `n × k` matrix `m`.
    fn mul(&self, m: &Matrix) -> Matrix;
}

/// `S_ij = +1` when samples `i` and `j` share a class and `-1` otherwise,
/// applied through per-class column sums so `S` is never stored.
#[derive(Debug, Clone)]
pub struct LabelSimilarity {
    labels: Vec<usize>,
    classes: usize,
    dense_cap: usize,
}

pub fn build_similarity(y: &LabelMatrix) -> LabelSimilarity {
    LabelSimilarity {
        labels: y.labels(),
        classes: y.classes(),
        dense_cap: DENSE_SIMILARITY_CAP,
    }
}

impl LabelSimilarity {
    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    /// Materializes `S`; refused above the dense cap.
    pub fn dense(&self) -> Result<Matrix> {
        let n = self.labels.len();
        if n > self.dense_cap {
            return Err(Error::invalid(format!(
                "refusing to materialize a {n} x {n} similarity (cap {})",
                self.dense_cap
            )));
        }
        Ok(Matrix::from_fn(n, n, |i, j| self.entry(i, j)))
    }
}

impl SimilarityOperator for LabelSimilarity {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if self.labels[i] == self.labels[j] {
            1.0
        } else {
            -1.0
        }
    }

    fn mul(&self, m: &Matrix) -> Matrix {
        let k = m.ncols();
        // Row i of S·m is 2 * (sum of rows in i's class) - (sum of all rows).
        let mut class_sums = Matrix::zeros(self.classes, k);
        for (i, &l) in self.labels.iter().enumerate() {
            for c in 0..k {
                class_sums[(l, c)] += m[(i, c)];
            }
        }
        let total = class_sums.row_sum();
        Matrix::from_fn(self.labels.len(), k, |i, c| {
            2.0 * class_sums[(self.labels[i], c)] - total[c]
        })
    }
}

/// An explicit `S`, for small problems and tests.
#[derive(Debug, Clone)]
pub struct DenseSimilarity(pub Matrix);

impl SimilarityOperator for DenseSimilarity {
    fn len(&self) -> usize {
        self.0.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    fn mul(&self, m: &Matrix) -> Matrix {
        &self.0 * m
    }
}

/// `R = argmax Tr(Rᵀ S Xᵀ)` over column-orthonormal `n × d` matrices.
pub fn compute_r(s: &impl SimilarityOperator, x: &Matrix) -> Result<Matrix> {
    let n = s.len();
    if x.ncols() != n {
        return Err(Error::shape(
            "compute_r",
            format!("X has {} samples, similarity has {n}", x.ncols()),
        ));
    }
    if x.nrows() > n {
        return Err(Error::shape(
            "compute_r",
            format!("{} kernel dims exceed {n} samples", x.nrows()),
        ));
    }
    orthogonal_polar(&s.mul(&x.transpose()))
}

pub fn compute_g(s: &impl SimilarityOperator, r: &Matrix) -> Result<Matrix> {
    if r.nrows() != s.len() {
        return Err(Error::shape(
            "compute_g",
            format!("R has {} rows, similarity has {}", r.nrows(), s.len()),
        ));
    }
    Ok(s.mul(r))
}

/// The precomputed `R` and `G = S R`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySupervision {
    r: Matrix,
    g: Matrix,
    g_norm_sq: f64,
}

impl SimilaritySupervision {
    pub fn new(r: Matrix, g: Matrix) -> Result<Self> {
        if r.shape() != g.shape() {
            return Err(Error::shape(
                "supervision",
                format!("R is {:?}, G is {:?}", r.shape(), g.shape()),
            ));
        }
        let g_norm_sq = frobenius_sq(&g);
        Ok(SimilaritySupervision { r, g, g_norm_sq })
    }

    pub fn from_similarity(s: &impl SimilarityOperator, x: &Matrix) -> Result<Self> {
        let r = compute_r(s, x)?;
        let g = compute_g(s, &r)?;
        Self::new(r, g)
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }
}

/// `W = (BYᵀ + αHYᵀ)(αYYᵀ + I)⁻¹`, the minimizer of
/// `‖Y - WᵀB‖² + α‖H - WY‖²` for row-orthonormal `B`.
pub fn w_step(b: &Matrix, h: &CodeMatrix, y: &Matrix, alpha: f64) -> Result<Matrix> {
    let (c, n) = y.shape();
    if b.ncols() != n || h.len() != n || b.nrows() != h.code_length() {
        return Err(Error::shape(
            "w_step",
            format!(
                "B {:?}, H {:?}, Y {:?}",
                b.shape(),
                h.as_matrix().shape(),
                y.shape()
            ),
        ));
    }
    let yt = y.transpose();
    let rhs = b * &yt + (h.as_matrix() * &yt) * alpha;
    let system = (y * &yt) * alpha + Matrix::identity(c, c);
    // W·A = rhs with A symmetric  <=>  A·Wᵀ = rhsᵀ
    Ok(solve_spd(&system, &rhs.transpose())?.transpose())
}

/// `Q = YᵀWᵀ + βHᵀ + γG RᵀHᵀ + μXᵀP` (`n × L`).
pub fn b_target(
    w: &Matrix,
    h: &CodeMatrix,
    p: &Matrix,
    x: &Matrix,
    sup: &SimilaritySupervision,
    y: &Matrix,
    hyper: &Hyperparams,
) -> Matrix {
    let ht = h.as_matrix().transpose();
    let mut q = y.transpose() * w.transpose();
    q += &ht * hyper.beta;
    if hyper.gamma != 0.0 {
        q += (sup.g() * (sup.r().transpose() * &ht)) * hyper.gamma;
    }
    if hyper.mu != 0.0 {
        q += (x.transpose() * p) * hyper.mu;
    }
    q
}

/// Row-orthonormal `B` maximizing `Tr(Q B)`.
pub fn procrustes_rows(q: &Matrix) -> Result<Matrix> {
    let (n, l) = q.shape();
    if l > n {
        return Err(Error::shape(
            "b_step",
            format!("code length {l} exceeds sample count {n}"),
        ));
    }
    Ok(orthogonal_polar(q)?.transpose())
}

pub fn b_step(
    w: &Matrix,
    h: &CodeMatrix,
    p: &Matrix,
    x: &Matrix,
    sup: &SimilaritySupervision,
    y: &Matrix,
    hyper: &Hyperparams,
) -> Result<Matrix> {
    let n = y.ncols();
    let l = h.code_length();
    if w.shape() != (l, y.nrows())
        || h.len() != n
        || x.ncols() != n
        || p.shape() != (x.nrows(), l)
        || sup.r().shape() != (n, x.nrows())
    {
        return Err(Error::shape(
            "b_step",
            format!(
                "W {:?}, H {:?}, P {:?}, X {:?}, R {:?}, Y {:?}",
                w.shape(),
                h.as_matrix().shape(),
                p.shape(),
                x.shape(),
                sup.r().shape(),
                y.shape()
            ),
        ));
    }
    procrustes_rows(&b_target(w, h, p, x, sup, y, hyper))
}

/// The H block of the objective,
/// `α‖H - WY‖² + β‖H - B‖² + γ‖BᵀHR - G‖²`.
pub fn h_block_objective(
    h: &Matrix,
    w: &Matrix,
    y: &Matrix,
    b: &Matrix,
    sup: &SimilaritySupervision,
    hyper: &Hyperparams,
) -> f64 {
    hyper.alpha * frobenius_sq(&(h - w * y))
        + hyper.beta * frobenius_sq(&(h - b))
        + hyper.gamma * similarity_residual(b, h, sup)
}

/// The matrix whose sign is the H update:
/// `αWY + βB + γBGRᵀ + γ(H₀ - H₀RRᵀ)`.
///
/// The last term majorizes `γ‖HR‖²`, which is constant on {-1,+1} only when
/// `R` is square. It vanishes in that case.
pub fn h_target(
    w: &Matrix,
    y: &Matrix,
    b: &Matrix,
    sup: &SimilaritySupervision,
    hyper: &Hyperparams,
    previous: &CodeMatrix,
) -> Matrix {
    let mut t = (w * y) * hyper.alpha;
    t += b * hyper.beta;
    if hyper.gamma != 0.0 {
        let r = sup.r();
        let h0 = previous.as_matrix();
        let correction = h0 - (h0 * r) * r.transpose();
        t += ((b * sup.g()) * r.transpose() + correction) * hyper.gamma;
    }
    t
}

/// `H = sgn(h_target)` with `sgn(0) = +1`.
///
/// Exact minimizer of the H block when `R` is square orthogonal; otherwise a
/// majorize-minimize step from `previous` that never increases the block.
pub fn h_step(
    w: &Matrix,
    y: &Matrix,
    b: &Matrix,
    sup: &SimilaritySupervision,
    hyper: &Hyperparams,
    previous: &CodeMatrix,
) -> Result<CodeMatrix> {
    let (l, n) = b.shape();
    if w.shape() != (l, y.nrows())
        || y.ncols() != n
        || sup.r().nrows() != n
        || previous.as_matrix().shape() != (l, n)
    {
        return Err(Error::shape(
            "h_step",
            format!(
                "W {:?}, Y {:?}, B {:?}, R {:?}",
                w.shape(),
                y.shape(),
                b.shape(),
                sup.r().shape()
            ),
        ));
    }
    Ok(CodeMatrix::from_signs(&h_target(w, y, b, sup, hyper, previous)))
}

/// `P = (XXᵀ + ridge·I)⁻¹ X Bᵀ`.
pub fn p_step(b: &Matrix, x: &Matrix, ridge: f64) -> Result<Matrix> {
    if b.ncols() != x.ncols() {
        return Err(Error::shape(
            "p_step",
            format!("B {:?}, X {:?}", b.shape(), x.shape()),
        ));
    }
    if ridge.is_nan() || ridge <= 0.0 {
        return Err(Error::invalid(format!("ridge {ridge} must be > 0")));
    }
    ridge_projection(x, b, ridge)
}

/// `(XXᵀ + ridge·I)⁻¹ X Tᵀ` for a `k × n` target `T`.
pub(crate) fn ridge_projection(x: &Matrix, target: &Matrix, ridge: f64) -> Result<Matrix> {
    let d = x.nrows();
    let system = x * x.transpose() + Matrix::identity(d, d) * ridge;
    solve_spd(&system, &(x * target.transpose()))
}

/// `‖BᵀHR - G‖²` without forming the `n × d` product.
fn similarity_residual(b: &Matrix, h: &Matrix, sup: &SimilaritySupervision) -> f64 {
    let hr = h * sup.r();
    let bbt = b * b.transpose();
    let quad = (&bbt * (&hr * hr.transpose())).trace();
    let cross = (b * sup.g()).dot(&hr);
    (quad - 2.0 * cross + sup.g_norm_sq).max(0.0)
}

/// The variable blocks of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub w: Matrix,
    pub b: Matrix,
    pub h: CodeMatrix,
    pub p: Matrix,
}

/// The six weighted terms of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub label_fit: f64,
    pub mutual: f64,
    pub quantization: f64,
    pub similarity: f64,
    pub projection: f64,
    pub ridge: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.label_fit
            + self.mutual
            + self.quantization
            + self.similarity
            + self.projection
            + self.ridge
    }
}

pub fn objective_terms(
    state: &TrainState,
    hyper: &Hyperparams,
    x: &Matrix,
    y: &Matrix,
    sup: &SimilaritySupervision,
) -> ObjectiveTerms {
    let h = state.h.as_matrix();
    ObjectiveTerms {
        label_fit: frobenius_sq(&(y - state.w.transpose() * &state.b)),
        mutual: hyper.alpha * frobenius_sq(&(h - &state.w * y)),
        quantization: hyper.beta * frobenius_sq(&(h - &state.b)),
        similarity: hyper.gamma * similarity_residual(&state.b, h, sup),
        projection: hyper.mu * frobenius_sq(&(&state.b - state.p.transpose() * x)),
        ridge: hyper.lambda * frobenius_sq(&state.p),
    }
}

pub fn objective(
    state: &TrainState,
    hyper: &Hyperparams,
    x: &Matrix,
    y: &Matrix,
    sup: &SimilaritySupervision,
) -> f64 {
    objective_terms(state, hyper, x, y, sup).total()
}

/// A trained model: everything needed to encode new samples plus the
/// training-set variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RslhModel {
    pub w: Matrix,
    pub b: Matrix,
    pub h: CodeMatrix,
    pub p: Matrix,
    pub r: Matrix,
    pub kernel: KernelMap,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub objective_trace: Vec<f64>,
}

impl RslhModel {
    pub fn code_length(&self) -> usize {
        self.h.code_length()
    }

    /// Number of completed sweeps.
    pub fn sweeps(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    pub fn encode(&self, features: &Matrix) -> Result<CodeMatrix> {
        encode(self, features)
    }
}

/// `h(a) = sgn(Pᵀ φ(a))` per sample.
pub fn encode(model: &RslhModel, features: &Matrix) -> Result<CodeMatrix> {
    project_and_sign(&model.kernel, &model.p, features)
}

pub(crate) fn project_and_sign(
    kernel: &KernelMap,
    p: &Matrix,
    features: &Matrix,
) -> Result<CodeMatrix> {
    let x = apply_kernel(kernel, features)?;
    Ok(CodeMatrix::from_signs(&(p.transpose() * x)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    pub objective: f64,
    /// `‖BBᵀ - I‖_F` right after the B update.
    pub b_orthogonality_error: f64,
}

/// Step-wise access to training. [`train`] is `Trainer::new` followed by
/// [`Trainer::run`].
#[derive(Debug, Clone)]
pub struct Trainer {
    hyper: Hyperparams,
    seed: u64,
    kernel: KernelMap,
    x: Matrix,
    y: Matrix,
    sup: SimilaritySupervision,
    state: TrainState,
    trace: Vec<f64>,
}

impl Trainer {
    /// Fits the kernel, builds `R` and `G` and initializes the variables:
    /// `B` random row-orthonormal, `H` signs of a Gaussian draw, `W = 0`,
    /// `P = 0`.
    pub fn new(ds: &Dataset, hyper: &Hyperparams, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let n = ds.len();
        let l = hyper.code_length;
        if l > n {
            return Err(Error::invalid(format!(
                "code length {l} exceeds the {n} training samples"
            )));
        }
        let c = ds.classes();
        if (l as f64) < (c as f64).log2() {
            warn!(
                "code length {l} is below log2({c}) = {:.2}; classes cannot all get distinct codes",
                (c as f64).log2()
            );
        }
        if hyper.mu == 0.0 {
            warn!("mu = 0 decouples P from training; out-of-sample codes will be constant");
        }

        let d = hyper.anchors.min(n);
        let kernel = fit_kernel(ds.features(), d, seed, hyper.sigma)?;
        let x = apply_kernel(&kernel, ds.features())?;
        let labels = ds.label_matrix();
        let sup = SimilaritySupervision::from_similarity(&build_similarity(&labels), &x)?;
        let y = labels.as_matrix().clone();

        let b = random_orthonormal_rows_with(l, n, &mut seeded_rng(seed, INIT_B_STREAM))?;
        let h = CodeMatrix::from_signs(&gaussian_matrix(
            l,
            n,
            &mut seeded_rng(seed, INIT_H_STREAM),
        ));
        let state = TrainState {
            w: Matrix::zeros(l, c),
            b,
            h,
            p: Matrix::zeros(d, l),
        };
        let initial = objective(&state, hyper, &x, &y, &sup);
        Ok(Trainer {
            hyper: hyper.clone(),
            seed,
            kernel,
            x,
            y,
            sup,
            state,
            trace: vec![initial],
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn kernelized(&self) -> &Matrix {
        &self.x
    }

    pub fn label_matrix(&self) -> &Matrix {
        &self.y
    }

    pub fn supervision(&self) -> &SimilaritySupervision {
        &self.sup
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// One W → B → H → P sweep.
    pub fn sweep(&mut self) -> Result<SweepReport> {
        let hyper = &self.hyper;
        let s = &mut self.state;
        s.w = w_step(&s.b, &s.h, &self.y, hyper.alpha)?;
        s.b = b_step(&s.w, &s.h, &s.p, &self.x, &self.sup, &self.y, hyper)?;
        let b_orthogonality_error = row_orthonormality_error(&s.b);
        s.h = h_step(&s.w, &self.y, &s.b, &self.sup, hyper, &s.h)?;
        s.p = match hyper.projection_ridge() {
            Some(ridge) => p_step(&s.b, &self.x, ridge)?,
            None => Matrix::zeros(self.x.nrows(), s.b.nrows()),
        };
        let obj = objective(s, hyper, &self.x, &self.y, &self.sup);
        if !obj.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        self.trace.push(obj);
        Ok(SweepReport {
            objective: obj,
            b_orthogonality_error,
        })
    }

    /// `(previous - current) / max(1, previous)` for the last sweep.
    pub fn last_relative_decrease(&self) -> Option<f64> {
        match self.trace.as_slice() {
            [.., prev, cur] => Some((prev - cur) / prev.abs().max(1.0)),
            _ => None,
        }
    }

    /// Sweeps until the relative decrease drops below `rel_tol` or
    /// `max_iters` sweeps have run.
    pub fn run(mut self) -> Result<RslhModel> {
        for it in 0..self.hyper.max_iters {
            let report = self.sweep()?;
            let rel = self.last_relative_decrease().unwrap_or(f64::INFINITY);
            debug!("sweep {}: objective {:.6e}, rel {:.3e}", it + 1, report.objective, rel);
            if rel < self.hyper.rel_tol {
                break;
            }
        }
        Ok(self.into_model())
    }

    pub fn into_model(self) -> RslhModel {
        RslhModel {
            w: self.state.w,
            b: self.state.b,
            h: self.state.h,
            p: self.state.p,
            r: self.sup.r,
            kernel: self.kernel,
            hyper: self.hyper,
            seed: self.seed,
            objective_trace: self.trace,
        }
    }
}

pub fn train(ds: &Dataset, hyper: &Hyperparams, seed: u64) -> Result<RslhModel> {
    Trainer::new(ds, hyper, seed)?.run()
}
