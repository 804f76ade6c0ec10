//! Hamming ranking and retrieval metrics.
//!
//! Codes are packed into `u64` words so distances are XOR plus popcount.
//! Relevance is label equality. The database is ranked by ascending distance
//! with ties broken by database index, and AP is taken over the whole ranking.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::CodeMatrix;
use crate::error::{Error, Result};
use crate::matrixkit::{random_orthonormal_rows, sgn, Matrix, Vector};

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_RADIUS: u32 = 2;

/// Bit-packed codes. Bit `k` of sample `j` is bit `k % 64` of word
/// `j * words + k / 64`; set means `+1`. Padding bits are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    code_length: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

impl PackedCodes {
    pub fn pack(codes: &CodeMatrix) -> Self {
        let l = codes.code_length();
        let wpc = l.div_ceil(64);
        let mut words = vec![0u64; wpc * codes.len()];
        for j in 0..codes.len() {
            for k in 0..l {
                if codes.bit(k, j) {
                    words[j * wpc + k / 64] |= 1 << (k % 64);
                }
            }
        }
        PackedCodes {
            code_length: l,
            words_per_code: wpc,
            words,
        }
    }

    pub fn unpack(&self) -> CodeMatrix {
        CodeMatrix::from_bits(self.code_length, self.len(), |k, j| {
            self.code(j)[k / 64] >> (k % 64) & 1 == 1
        })
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn len(&self) -> usize {
        self.words.len().checked_div(self.words_per_code).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn code(&self, j: usize) -> &[u64] {
        &self.words[j * self.words_per_code..(j + 1) * self.words_per_code]
    }
}

pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "hamming_distance",
            format!("{} words vs {} words", a.len(), b.len()),
        ));
    }
    Ok(packed_distance(a, b))
}

#[inline]
fn packed_distance(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

fn check_same_length(query: &PackedCodes, db: &PackedCodes) -> Result<()> {
    if query.code_length != db.code_length {
        return Err(Error::shape(
            "ranking",
            format!(
                "query codes have {} bits, database codes {}",
                query.code_length, db.code_length
            ),
        ));
    }
    Ok(())
}

/// Database indices with their distances, ascending by `(distance, index)`.
fn ranked_with_distance(query: &[u64], db: &PackedCodes) -> Vec<(usize, u32)> {
    let dist: Vec<u32> = (0..db.len())
        .map(|j| packed_distance(query, db.code(j)))
        .collect();
    // Counting sort: distances are bounded by the code length.
    let mut starts = vec![0usize; db.code_length + 2];
    for &d in &dist {
        starts[d as usize + 1] += 1;
    }
    for b in 1..starts.len() {
        starts[b] += starts[b - 1];
    }
    let mut out = vec![(0usize, 0u32); dist.len()];
    for (j, &d) in dist.iter().enumerate() {
        let slot = &mut starts[d as usize];
        out[*slot] = (j, d);
        *slot += 1;
    }
    out
}

/// Ranks `db` against a single packed query code.
pub fn rank_database(query: &[u64], db: &PackedCodes) -> Result<Vec<usize>> {
    if query.len() != db.words_per_code {
        return Err(Error::shape(
            "rank_database",
            format!("query has {} words, database codes {}", query.len(), db.words_per_code),
        ));
    }
    Ok(ranked_with_distance(query, db)
        .into_iter()
        .map(|(j, _)| j)
        .collect())
}

/// Mean of precision at each relevant position; 0 when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn precision_at(relevance: &[bool], k: usize) -> f64 {
    relevance[..k].iter().filter(|&&r| r).count() as f64 / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ap: f64,
    pub ap_h2: f64,
    pub prec_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub map_at_h2: f64,
    pub precision_at_k: f64,
    pub k: usize,
    pub n_queries: usize,
    pub n_database: usize,
    pub code_length: usize,
    #[serde(skip)]
    pub per_query: Option<Vec<QueryMetrics>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `query_index,ap,ap_h2,prec_k` rows, or `None` without per-query data.
    pub fn per_query_csv(&self) -> Option<String> {
        let rows = self.per_query.as_ref()?;
        let mut out = String::from("query_index,ap,ap_h2,prec_k\n");
        for (i, q) in rows.iter().enumerate() {
            writeln!(out, "{i},{},{},{}", q.ap, q.ap_h2, q.prec_k).expect("string write");
        }
        Some(out)
    }
}

fn check_alignment(
    query: &PackedCodes,
    db: &PackedCodes,
    query_labels: &[usize],
    db_labels: &[usize],
) -> Result<()> {
    check_same_length(query, db)?;
    if query.len() != query_labels.len() || db.len() != db_labels.len() {
        return Err(Error::shape(
            "evaluate",
            format!(
                "{} query codes / {} labels, {} database codes / {} labels",
                query.len(),
                query_labels.len(),
                db.len(),
                db_labels.len()
            ),
        ));
    }
    if db.is_empty() || query.is_empty() {
        return Err(Error::invalid("evaluation needs at least one query and one database item"));
    }
    Ok(())
}

fn query_metrics(
    query: &[u64],
    label: usize,
    db: &PackedCodes,
    db_labels: &[usize],
    k: usize,
    radius: u32,
) -> QueryMetrics {
    let ranked = ranked_with_distance(query, db);
    let relevance: Vec<bool> = ranked.iter().map(|&(j, _)| db_labels[j] == label).collect();
    let within = ranked.partition_point(|&(_, d)| d <= radius);
    QueryMetrics {
        ap: average_precision(&relevance),
        ap_h2: average_precision(&relevance[..within]),
        prec_k: precision_at(&relevance, k),
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Mean AP over queries, restricted to database items within `radius`.
pub fn map_at_radius(
    query: &PackedCodes,
    db: &PackedCodes,
    query_labels: &[usize],
    db_labels: &[usize],
    radius: u32,
) -> Result<f64> {
    check_alignment(query, db, query_labels, db_labels)?;
    let per: Vec<f64> = (0..query.len())
        .into_par_iter()
        .map(|i| query_metrics(query.code(i), query_labels[i], db, db_labels, 1, radius).ap_h2)
        .collect();
    Ok(mean(per.into_iter(), query.len()))
}

/// Full-ranking mAP, mAP within radius 2 and precision@`k`.
pub fn evaluate(
    query: &PackedCodes,
    db: &PackedCodes,
    query_labels: &[usize],
    db_labels: &[usize],
    k: usize,
) -> Result<EvalReport> {
    check_alignment(query, db, query_labels, db_labels)?;
    if k == 0 || k > db.len() {
        return Err(Error::invalid(format!(
            "precision cutoff {k} outside 1..={}",
            db.len()
        )));
    }
    let per: Vec<QueryMetrics> = (0..query.len())
        .into_par_iter()
        .map(|i| query_metrics(query.code(i), query_labels[i], db, db_labels, k, DEFAULT_RADIUS))
        .collect();
    let nq = per.len();
    Ok(EvalReport {
        map: mean(per.iter().map(|q| q.ap), nq),
        map_at_h2: mean(per.iter().map(|q| q.ap_h2), nq),
        precision_at_k: mean(per.iter().map(|q| q.prec_k), nq),
        k,
        n_queries: nq,
        n_database: db.len(),
        code_length: db.code_length,
        per_query: Some(per),
    })
}

pub fn evaluate_codes(
    query: &CodeMatrix,
    db: &CodeMatrix,
    query_labels: &[usize],
    db_labels: &[usize],
    k: usize,
) -> Result<EvalReport> {
    evaluate(
        &PackedCodes::pack(query),
        &PackedCodes::pack(db),
        query_labels,
        db_labels,
        k,
    )
}

/// Sign of a random orthonormal projection of mean-centered features.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomRotationBaseline {
    mean: Vector,
    rotation: Matrix,
}

impl RandomRotationBaseline {
    /// `features` is `dim x n`; the mean is taken over its columns.
    pub fn fit(features: &Matrix, code_length: usize, seed: u64) -> Result<Self> {
        let dim = features.nrows();
        if code_length == 0 || code_length > dim {
            return Err(Error::invalid(format!(
                "code length {code_length} must be in 1..={dim}"
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::invalid("baseline needs at least one sample"));
        }
        Ok(RandomRotationBaseline {
            mean: features.column_mean(),
            rotation: random_orthonormal_rows(code_length, dim, seed)?,
        })
    }

    pub fn encode(&self, features: &Matrix) -> Result<CodeMatrix> {
        if features.nrows() != self.mean.len() {
            return Err(Error::shape(
                "baseline encode",
                format!("features have {} dims, expected {}", features.nrows(), self.mean.len()),
            ));
        }
        let mut centered = features.clone();
        for mut c in centered.column_iter_mut() {
            c -= &self.mean;
        }
        Ok(CodeMatrix::from_signs(&(&self.rotation * centered).map(sgn)))
    }
}

pub fn baseline_random_rotation(
    features: &Matrix,
    code_length: usize,
    seed: u64,
) -> Result<CodeMatrix> {
    RandomRotationBaseline::fit(features, code_length, seed)?.encode(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(cols: &[&[f64]]) -> CodeMatrix {
        let l = cols[0].len();
        CodeMatrix::new(Matrix::from_fn(l, cols.len(), |k, j| cols[j][k])).unwrap()
    }

    #[test]
    fn distance_examples() {
        let p = PackedCodes::pack(&codes(&[
            &[-1., 1., 1., -1.],
            &[1., 1., -1., -1.],
            &[1., -1., -1., 1.],
        ]));
        assert_eq!(hamming_distance(p.code(0), p.code(1)).unwrap(), 2);
        assert_eq!(hamming_distance(p.code(0), p.code(0)).unwrap(), 0);
        assert_eq!(hamming_distance(p.code(0), p.code(2)).unwrap(), 4);
        assert!(hamming_distance(&[0], &[0, 0]).is_err());
    }

    #[test]
    fn pack_roundtrip_across_word_boundary() {
        let c = CodeMatrix::from_bits(70, 3, |k, j| (k * 7 + j) % 3 == 0);
        let p = PackedCodes::pack(&c);
        assert_eq!(p.code(0).len(), 2);
        assert_eq!(p.unpack(), c);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn ranking_ties_and_self() {
        let p = PackedCodes::pack(&codes(&[&[1., 1.], &[-1., 1.], &[1., -1.], &[1., 1.]]));
        assert_eq!(rank_database(p.code(0), &p).unwrap(), vec![0, 3, 1, 2]);
        assert_eq!(rank_database(p.code(1), &p).unwrap(), vec![1, 0, 3, 2]);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true, true]), 1.0);
        assert_eq!(average_precision(&[false, false, false]), 0.0);
        assert!((average_precision(&[true, false, true]) - 0.833333).abs() < 1e-5);
        assert_eq!(average_precision(&[]), 0.0);
    }

    #[test]
    fn radius_empty_and_perfect() {
        let q = PackedCodes::pack(&codes(&[&[1., 1., 1., 1.]]));
        let db = PackedCodes::pack(&codes(&[&[-1., -1., -1., 1.], &[-1., -1., -1., -1.]]));
        assert_eq!(map_at_radius(&q, &db, &[0], &[0, 0], 2).unwrap(), 0.0);
        let db = PackedCodes::pack(&codes(&[
            &[1., 1., 1., 1.],
            &[-1., -1., -1., 1.],
            &[1., 1., 1., 1.],
        ]));
        assert_eq!(map_at_radius(&q, &db, &[0], &[0, 1, 0], 2).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_single_class_is_perfect() {
        let q = codes(&[&[1., -1.], &[-1., -1.]]);
        let db = codes(&[&[1., 1.], &[-1., 1.], &[1., -1.]]);
        let r = evaluate_codes(&q, &db, &[0, 0], &[0, 0, 0], 2).unwrap();
        assert_eq!((r.map, r.precision_at_k), (1.0, 1.0));
        assert!(evaluate_codes(&q, &db, &[0, 0], &[0, 0, 0], 4).is_err());
        assert!(evaluate_codes(&q, &db, &[0, 0], &[0, 0, 0], 0).is_err());
        assert!(evaluate_codes(&q, &db, &[0], &[0, 0, 0], 1).is_err());
    }

    #[test]
    fn report_json_fields_in_order() {
        let q = codes(&[&[1., -1.]]);
        let r = evaluate_codes(&q, &q, &[0], &[0], 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 7);
        assert!(r.to_json().find("\"map\"").unwrap() < r.to_json().find("\"code_length\"").unwrap());
        let csv = r.per_query_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "query_index,ap,ap_h2,prec_k");
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn baseline_is_deterministic_signs() {
        let f = Matrix::from_fn(5, 20, |i, j| ((i * 31 + j * 17) % 11) as f64);
        let a = baseline_random_rotation(&f, 3, 4).unwrap();
        assert_eq!(a, baseline_random_rotation(&f, 3, 4).unwrap());
        assert!(a.as_matrix().iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(baseline_random_rotation(&f, 6, 4).is_err());
    }
}
