//! Synthetic comparison of plain training, boosting and a random-rotation
//! baseline on Gaussian blobs.

use std::time::Instant;

use serde::Serialize;

use crate::boosting::{boost_from_pool, build_pool, default_seeds};
use crate::dataio::{split, CodeMatrix, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_codes, EvalReport, RandomRotationBaseline};
use crate::synth::{gaussian_blobs, BlobSpec};
use crate::trainer::Hyperparams;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_db: usize,
    pub n_query: usize,
    pub dim: usize,
    pub classes: usize,
    pub spread: f64,
    pub noise: f64,
    pub hyper: Hyperparams,
    pub runs: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_db: 2000,
            n_query: 200,
            dim: 32,
            classes: 10,
            spread: 3.0,
            noise: 1.0,
            hyper: Hyperparams {
                code_length: 4,
                anchors: 300,
                ..Default::default()
            },
            runs: 3,
            k: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodScore {
    pub map: f64,
    pub map_at_h2: f64,
    pub precision_at_k: f64,
}

impl From<&EvalReport> for MethodScore {
    fn from(r: &EvalReport) -> Self {
        MethodScore {
            map: r.map,
            map_at_h2: r.map_at_h2,
            precision_at_k: r.precision_at_k,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rslh: MethodScore,
    pub boosted: MethodScore,
    pub baseline: MethodScore,
    pub sweeps: usize,
    /// Relative objective change of the last plain-training sweep.
    pub final_relative_change: f64,
    pub pool_mean_balance_degree: f64,
    pub selected_mean_balance_degree: f64,
    pub code_length: usize,
    pub k: usize,
    pub n_queries: usize,
    pub n_database: usize,
    pub seed: u64,
    pub seconds: f64,
}

fn mean_degree(rows: impl Iterator<Item = usize>) -> f64 {
    let v: Vec<usize> = rows.collect();
    v.iter().sum::<usize>() as f64 / v.len() as f64
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_db == 0 || cfg.n_query == 0 {
        return Err(Error::invalid("database and query sets must be non-empty"));
    }
    let start = Instant::now();
    let total = cfg.n_db + cfg.n_query;
    let ds = gaussian_blobs(&BlobSpec {
        n: total,
        dim: cfg.dim,
        classes: cfg.classes,
        spread: cfg.spread,
        noise: cfg.noise,
        seed: cfg.seed,
    })?;
    let (query, db) = split(
        &ds,
        SplitSpec {
            query_fraction: cfg.n_query as f64 / total as f64,
            seed: cfg.seed,
        },
    )?;
    let score = |q: &CodeMatrix, d: &CodeMatrix| evaluate_codes(q, d, query.labels(), db.labels(), cfg.k);

    // The first boosting run uses `cfg.seed`, so it doubles as the plain model.
    let (pool, models) = build_pool(&db, &cfg.hyper, &default_seeds(cfg.seed, cfg.runs))?;
    let model = &models[0];
    let plain = score(
        &model.encode(query.features())?,
        &model.encode(db.features())?,
    )?;

    let boosted_model = boost_from_pool(&db, &pool, &models, cfg.seed)?;
    let boosted = score(
        &boosted_model.encode(query.features())?,
        &boosted_model.encode(db.features())?,
    )?;

    let rr = RandomRotationBaseline::fit(db.features(), cfg.hyper.code_length, cfg.seed)?;
    let baseline = score(&rr.encode(query.features())?, &rr.encode(db.features())?)?;

    let pool_deg = pool.balance_degrees();
    let trace = &model.objective_trace;
    let final_relative_change = match trace.as_slice() {
        [.., prev, cur] => (prev - cur) / prev.abs().max(1.0),
        _ => 0.0,
    };
    Ok(BenchReport {
        rslh: (&plain).into(),
        boosted: (&boosted).into(),
        baseline: (&baseline).into(),
        sweeps: model.sweeps(),
        final_relative_change,
        pool_mean_balance_degree: mean_degree(pool_deg.iter().copied()),
        selected_mean_balance_degree: mean_degree(
            boosted_model.selected.iter().map(|&r| pool_deg[r]),
        ),
        code_length: cfg.hyper.code_length,
        k: cfg.k,
        n_queries: query.len(),
        n_database: db.len(),
        seed: cfg.seed,
        seconds: start.elapsed().as_secs_f64(),
    })
}
