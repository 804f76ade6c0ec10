//! Bit-selection ensemble over several training runs.
//!
//! `T` runs with different seeds give `T·L` candidate bits for the training
//! set. The candidates are grouped into `L` clusters by normalized spectral
//! clustering on the bit affinity `|⟨hᵢ, hⱼ⟩| / n`, the most balanced bit of
//! each cluster is kept, and a ridge projection from kernel features to the
//! kept bits becomes the out-of-sample encoder.

use std::borrow::Borrow;

use log::{debug, warn};
use nalgebra::SymmetricEigen;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::{CodeMatrix, Dataset};
use crate::error::{Error, Result};
use crate::kernelmap::{apply_kernel, KernelMap};
use crate::matrixkit::{ensure_finite, seeded_rng, Matrix};
use crate::trainer::{project_and_sign, ridge_projection, train, Hyperparams, RslhModel};

pub const DEFAULT_RUNS: usize = 3;
const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITERS: usize = 300;
/// Greedy fallback rejects a candidate this correlated with a kept bit.
const FALLBACK_MAX_AFFINITY: f64 = 0.95;

/// `|Σᵢ hᵢ|` for a ±1 row.
pub fn balance_degree<I>(row: I) -> usize
where
    I: IntoIterator,
    I::Item: Borrow<f64>,
{
    let s: f64 = row.into_iter().map(|v| *v.borrow()).sum();
    s.abs().round() as usize
}

/// The `T·L × n` stack of trained code matrices, run-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BitPool {
    bits: CodeMatrix,
    provenance: Vec<(usize, usize)>,
}

impl BitPool {
    pub fn from_runs<'a>(runs: impl IntoIterator<Item = &'a CodeMatrix>) -> Result<Self> {
        let runs: Vec<&CodeMatrix> = runs.into_iter().collect();
        let first = runs
            .first()
            .ok_or_else(|| Error::invalid("bit pool needs at least one run"))?;
        let (l, n) = (first.code_length(), first.len());
        if runs.iter().any(|r| r.code_length() != l || r.len() != n) {
            return Err(Error::shape("bit pool", "runs differ in shape"));
        }
        let mut m = Matrix::zeros(l * runs.len(), n);
        let mut provenance = Vec::with_capacity(l * runs.len());
        for (t, run) in runs.iter().enumerate() {
            m.rows_mut(t * l, l).copy_from(run.as_matrix());
            provenance.extend((0..l).map(|k| (t, k)));
        }
        Ok(BitPool {
            bits: CodeMatrix::new(m)?,
            provenance,
        })
    }

    pub fn bits(&self) -> &CodeMatrix {
        &self.bits
    }

    /// `(run index, bit index)` for each pool row.
    pub fn provenance(&self) -> &[(usize, usize)] {
        &self.provenance
    }

    pub fn rows(&self) -> usize {
        self.bits.code_length()
    }

    pub fn samples(&self) -> usize {
        self.bits.len()
    }

    pub fn balance_degrees(&self) -> Vec<usize> {
        self.bits
            .as_matrix()
            .row_iter()
            .map(|r| balance_degree(r.iter()))
            .collect()
    }

    /// `A_ij = |⟨rowᵢ, rowⱼ⟩| / n`.
    pub fn affinity(&self) -> Matrix {
        let h = self.bits.as_matrix();
        let n = h.ncols() as f64;
        (h * h.transpose()).map(|v| v.abs() / n)
    }
}

pub fn default_seeds(seed: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|t| seed.wrapping_add(t)).collect()
}

/// Trains one model per seed (in parallel) and stacks their codes in seed
/// order.
pub fn build_pool(
    ds: &Dataset,
    hyper: &Hyperparams,
    seeds: &[u64],
) -> Result<(BitPool, Vec<RslhModel>)> {
    if seeds.is_empty() {
        return Err(Error::invalid("boosting needs at least one run"));
    }
    let models = seeds
        .par_iter()
        .map(|&s| train(ds, hyper, s))
        .collect::<Result<Vec<_>>>()?;
    let pool = BitPool::from_runs(models.iter().map(|m| &m.h))?;
    Ok((pool, models))
}

/// Ng-Jordan-Weiss spectral clustering of the pool rows into `l` clusters.
///
/// Returns one label in `[0, l)` per pool row. Clusters can come back empty
/// when the embedding has fewer than `l` distinct points; [`select_bits`]
/// handles that.
pub fn cluster_bits(pool: &BitPool, l: usize, seed: u64) -> Result<Vec<usize>> {
    let rows = pool.rows();
    if l == 0 || l > rows {
        return Err(Error::invalid(format!(
            "cannot form {l} clusters from {rows} bits"
        )));
    }
    if l == 1 {
        return Ok(vec![0; rows]);
    }
    let a = pool.affinity();
    let inv_sqrt_deg: Vec<f64> = a.row_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    let m = Matrix::from_fn(rows, rows, |i, j| {
        a[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j]
    });
    ensure_finite(&m, "normalized affinity")?;
    let eig = SymmetricEigen::try_new(m, 1e-15, 10_000).ok_or(Error::EigenNoConvergence)?;

    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut embed = Matrix::zeros(rows, l);
    for (c, &k) in order.iter().take(l).enumerate() {
        embed.set_column(c, &eig.eigenvectors.column(k));
    }
    for mut r in embed.row_iter_mut() {
        let norm = r.norm();
        if norm > 0.0 {
            r /= norm;
        }
    }
    Ok(kmeans(&embed, l, seed))
}

/// Best-of-restarts Lloyd iterations with k-means++ seeding.
fn kmeans(points: &Matrix, k: usize, seed: u64) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = seeded_rng(seed, restart as u64);
        let mut centers = kmeans_pp(points, k, &mut rng);
        let mut assign = assign_points(points, &centers);
        for _ in 0..KMEANS_MAX_ITERS {
            update_centers(points, &assign, &mut centers);
            let next = assign_points(points, &centers);
            if next == assign {
                break;
            }
            assign = next;
        }
        let inertia = (0..points.nrows())
            .map(|i| (points.row(i) - centers.row(assign[i])).norm_squared())
            .sum::<f64>();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.expect("at least one restart").1
}

fn kmeans_pp(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.nrows();
    let mut centers = Matrix::zeros(k, points.ncols());
    centers.set_row(0, &points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| (points.row(i) - centers.row(0)).norm_squared())
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Every point already coincides with a center.
            Err(_) => rng.random_range(0..n),
        };
        centers.set_row(c, &points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min((points.row(i) - centers.row(c)).norm_squared());
        }
    }
    centers
}

fn assign_points(points: &Matrix, centers: &Matrix) -> Vec<usize> {
    (0..points.nrows())
        .map(|i| {
            let p = points.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..centers.nrows() {
                let d = (p - centers.row(c)).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn update_centers(points: &Matrix, assign: &[usize], centers: &mut Matrix) {
    let k = centers.nrows();
    let mut sums = Matrix::zeros(k, points.ncols());
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        let mut row = sums.row_mut(c);
        row += points.row(i);
        counts[c] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        // Empty clusters keep their previous center.
        if count > 0 {
            centers.set_row(c, &(sums.row(c) / count as f64));
        }
    }
}

/// The outcome of bit selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Pool row indices, one per cluster in cluster order.
    pub selected: Vec<usize>,
    pub h_final: CodeMatrix,
    /// Set when a cluster was empty and the greedy rule picked the bits.
    pub used_fallback: bool,
}

/// Keeps the lowest-balance-degree row of each cluster (lowest row index on
/// ties).
///
/// If any of the `l` clusters is empty, falls back to a greedy pass over all
/// rows by ascending balance degree, keeping a row only if its affinity to
/// every kept row is below 0.95. If that yields fewer than `l` rows the
/// remainder is filled in the same order regardless of affinity.
pub fn select_bits(pool: &BitPool, assignment: &[usize], l: usize) -> Result<Selection> {
    if assignment.len() != pool.rows() {
        return Err(Error::shape(
            "select_bits",
            format!("{} labels for {} pool rows", assignment.len(), pool.rows()),
        ));
    }
    if l == 0 || l > pool.rows() {
        return Err(Error::invalid(format!(
            "cannot select {l} bits from {} rows",
            pool.rows()
        )));
    }
    if let Some(&bad) = assignment.iter().find(|&&a| a >= l) {
        return Err(Error::invalid(format!("cluster label {bad} >= {l}")));
    }
    let degrees = pool.balance_degrees();
    let mut best: Vec<Option<usize>> = vec![None; l];
    for (row, &c) in assignment.iter().enumerate() {
        let better = match best[c] {
            None => true,
            Some(cur) => degrees[row] < degrees[cur],
        };
        if better {
            best[c] = Some(row);
        }
    }
    let (selected, used_fallback) = match best.into_iter().collect::<Option<Vec<usize>>>() {
        Some(sel) => (sel, false),
        None => {
            warn!("spectral clustering left an empty cluster; using greedy bit selection");
            (greedy_selection(pool, &degrees, l), true)
        }
    };
    Ok(Selection {
        h_final: pool.bits.select_rows(&selected),
        selected,
        used_fallback,
    })
}

fn greedy_selection(pool: &BitPool, degrees: &[usize], l: usize) -> Vec<usize> {
    let affinity = pool.affinity();
    let mut order: Vec<usize> = (0..pool.rows()).collect();
    order.sort_by_key(|&r| (degrees[r], r));
    let mut picked: Vec<usize> = Vec::with_capacity(l);
    for &r in &order {
        if picked.len() == l {
            break;
        }
        if picked.iter().all(|&p| affinity[(r, p)] < FALLBACK_MAX_AFFINITY) {
            picked.push(r);
        }
    }
    for &r in &order {
        if picked.len() == l {
            break;
        }
        if !picked.contains(&r) {
            picked.push(r);
        }
    }
    picked
}

/// Ridge regression `(XXᵀ + λI)⁻¹ X H_finalᵀ` from kernel features to codes.
pub fn fit_extension(h_final: &CodeMatrix, x: &Matrix, lambda: f64) -> Result<Matrix> {
    if h_final.len() != x.ncols() {
        return Err(Error::shape(
            "fit_extension",
            format!("{} codes, {} feature columns", h_final.len(), x.ncols()),
        ));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::invalid(format!("lambda {lambda} must be > 0")));
    }
    ridge_projection(x, h_final.as_matrix(), lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub runs: usize,
    /// One seed per run; `None` means `seed, seed + 1, ...`.
    pub seeds: Option<Vec<u64>>,
    pub seed: u64,
    pub cluster_seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            runs: DEFAULT_RUNS,
            seeds: None,
            seed: 0,
            cluster_seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn run_seeds(&self) -> Result<Vec<u64>> {
        if self.runs == 0 {
            return Err(Error::invalid("boosting needs at least one run"));
        }
        match &self.seeds {
            Some(s) if s.len() != self.runs => Err(Error::invalid(format!(
                "{} seeds given for {} runs",
                s.len(),
                self.runs
            ))),
            Some(s) => Ok(s.clone()),
            None => Ok(default_seeds(self.seed, self.runs)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub selected: Vec<usize>,
    /// `(run, bit)` origin of each selected bit.
    pub origin: Vec<(usize, usize)>,
    pub h_final: CodeMatrix,
    pub p_boost: Matrix,
    /// The kernel map of the first run, which the projection is fit on.
    pub kernel: KernelMap,
    pub hyper: Hyperparams,
    pub run_seeds: Vec<u64>,
    pub cluster_seed: u64,
    pub used_fallback: bool,
}

impl BoostedModel {
    pub fn code_length(&self) -> usize {
        self.h_final.code_length()
    }

    pub fn encode(&self, features: &Matrix) -> Result<CodeMatrix> {
        project_and_sign(&self.kernel, &self.p_boost, features)
    }
}

/// Selection and extension on an already-trained pool.
pub fn boost_from_pool(
    ds: &Dataset,
    pool: &BitPool,
    models: &[RslhModel],
    cluster_seed: u64,
) -> Result<BoostedModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::invalid("boosting needs at least one run"))?;
    let hyper = first.hyper.clone();
    let l = hyper.code_length;
    let assignment = cluster_bits(pool, l, cluster_seed)?;
    let selection = select_bits(pool, &assignment, l)?;
    debug!("selected pool rows {:?}", selection.selected);
    let x = apply_kernel(&first.kernel, ds.features())?;
    let p_boost = fit_extension(&selection.h_final, &x, hyper.lambda)?;
    Ok(BoostedModel {
        origin: selection
            .selected
            .iter()
            .map(|&r| pool.provenance()[r])
            .collect(),
        selected: selection.selected,
        h_final: selection.h_final,
        p_boost,
        kernel: first.kernel.clone(),
        hyper,
        run_seeds: models.iter().map(|m| m.seed).collect(),
        cluster_seed,
        used_fallback: selection.used_fallback,
    })
}

pub fn boost(ds: &Dataset, hyper: &Hyperparams, cfg: &BoostConfig) -> Result<BoostedModel> {
    let seeds = cfg.run_seeds()?;
    let (pool, models) = build_pool(ds, hyper, &seeds)?;
    boost_from_pool(ds, &pool, &models, cfg.cluster_seed)
}
