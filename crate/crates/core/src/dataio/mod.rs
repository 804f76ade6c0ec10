//! Datasets, label matrices, hash-code matrices, splitting and every on-disk
//! format (features, labels, codes, models).

mod codes;
mod container;
mod features;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrixkit::{seeded_rng, sgn, Matrix};

pub use codes::{load_codes, read_codes, save_codes, write_codes, CODES_MAGIC};
pub use container::{ModelFile, MODEL_MAGIC, MODEL_VERSION};
pub use features::{
    load_features, load_labels, parse_features_csv, parse_labels, read_features_binary,
    save_features, save_labels, write_features_binary, FeatureFormat, FEATURES_MAGIC,
};

/// Raw features (one column per sample) with single-label class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let n = features.ncols();
        if n == 0 {
            return Err(Error::invalid("dataset has no samples"));
        }
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        if labels.len() != n {
            return Err(Error::shape(
                "dataset",
                format!("{} labels for {n} samples", labels.len()),
            ));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        crate::matrixkit::ensure_finite(&features, "dataset features")?;
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    /// Infers the class count as `max(label) + 1`, with a floor of 2.
    pub fn with_inferred_classes(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
        Self::new(features, labels, classes)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn label_matrix(&self) -> LabelMatrix {
        build_label_matrix(&self.labels, self.classes).expect("labels validated on construction")
    }

    /// The sub-dataset holding the given sample indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select_columns(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, self.classes)
    }
}

/// `c x n` matrix over {-1, +1}; `y[(j, i)] = +1` iff sample `i` is in class `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    y: Matrix,
}

impl LabelMatrix {
    pub fn as_matrix(&self) -> &Matrix {
        &self.y
    }

    pub fn classes(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    /// Recovers single-label class ids by per-column argmax (first max wins).
    pub fn labels(&self) -> Vec<usize> {
        self.y
            .column_iter()
            .map(|col| {
                let mut best = 0;
                for (j, v) in col.iter().enumerate() {
                    if *v > col[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn build_label_matrix(labels: &[usize], classes: usize) -> Result<LabelMatrix> {
    let mut y = Matrix::from_element(classes, labels.len(), -1.0);
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        y[(label, i)] = 1.0;
    }
    Ok(LabelMatrix { y })
}

/// `L x n` matrix whose entries are exactly -1 or +1. Column `j` is the code
/// of sample `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    h: Matrix,
}

impl CodeMatrix {
    pub fn new(h: Matrix) -> Result<Self> {
        if h.nrows() == 0 {
            return Err(Error::invalid("code length must be at least 1"));
        }
        if let Some(v) = h.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::invalid(format!("code entry {v} is not +1 or -1")));
        }
        Ok(CodeMatrix { h })
    }

    /// Entrywise sign with `sgn(0) = +1`.
    pub fn from_signs(m: &Matrix) -> Self {
        CodeMatrix { h: m.map(sgn) }
    }

    pub fn from_bits(code_length: usize, n: usize, bit: impl Fn(usize, usize) -> bool) -> Self {
        CodeMatrix {
            h: Matrix::from_fn(code_length, n, |k, j| if bit(k, j) { 1.0 } else { -1.0 }),
        }
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn into_matrix(self) -> Matrix {
        self.h
    }

    pub fn code_length(&self) -> usize {
        self.h.nrows()
    }

    pub fn len(&self) -> usize {
        self.h.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.h.ncols() == 0
    }

    #[inline]
    pub fn bit(&self, k: usize, j: usize) -> bool {
        self.h[(k, j)] > 0.0
    }

    pub fn select_rows(&self, rows: &[usize]) -> CodeMatrix {
        CodeMatrix {
            h: self.h.select_rows(rows),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub query_fraction: f64,
    pub seed: u64,
}

/// Query and database sample indices, each in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub query: Vec<usize>,
    pub database: Vec<usize>,
}

/// Seeded split that keeps every present class represented in the database.
///
/// The query size is `round(fraction * n)` clamped to `[1, n - 1]`. Samples
/// are visited in a seeded random order and moved to the query side unless
/// that would remove the last database sample of their class.
pub fn split_indices(labels: &[usize], spec: SplitSpec) -> Result<SplitIndices> {
    let n = labels.len();
    if !(spec.query_fraction > 0.0 && spec.query_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "query fraction {} not in (0, 1)",
            spec.query_fraction
        )));
    }
    if n < 2 {
        return Err(Error::invalid("need at least 2 samples to split"));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut remaining = vec![0usize; classes];
    for &l in labels {
        remaining[l] += 1;
    }
    if let Some(class) = remaining.iter().position(|&c| c == 1) {
        return Err(Error::SingletonClass { class });
    }
    let target = ((spec.query_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(spec.seed, 0));
    let mut is_query = vec![false; n];
    let mut taken = 0;
    for &i in &order {
        if taken == target {
            break;
        }
        if remaining[labels[i]] > 1 {
            remaining[labels[i]] -= 1;
            is_query[i] = true;
            taken += 1;
        }
    }
    if taken == 0 {
        return Err(Error::invalid("split leaves an empty query set"));
    }
    let (query, database): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_query[i]);
    Ok(SplitIndices { query, database })
}

/// Returns `(query, database)`.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(ds.labels(), spec)?;
    Ok((ds.select(&idx.query)?, ds.select(&idx.database)?))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so a failure never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn label_matrix_definition() {
        let y = build_label_matrix(&[0, 1], 2).unwrap();
        assert_eq!(y.as_matrix(), &Matrix::from_row_slice(2, 2, &[1., -1., -1., 1.]));
        let y = build_label_matrix(&[2], 3).unwrap();
        assert_eq!(y.as_matrix().column(0).as_slice(), &[-1., -1., 1.]);
    }

    #[test]
    fn label_matrix_column_sums_and_argmax() {
        let mut rng = seeded_rng(5, 0);
        let c = 7;
        let labels: Vec<usize> = (0..1000).map(|_| rng.random_range(0..c)).collect();
        let y = build_label_matrix(&labels, c).unwrap();
        for col in y.as_matrix().column_iter() {
            assert_eq!(col.sum(), 2.0 - c as f64);
        }
        assert_eq!(y.labels(), labels);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            build_label_matrix(&[0, 3], 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn dataset_validation() {
        let f = Matrix::zeros(2, 3);
        assert!(Dataset::new(f.clone(), vec![0, 1, 1], 2).is_ok());
        assert!(Dataset::new(f.clone(), vec![0, 1], 2).is_err());
        assert!(Dataset::new(f.clone(), vec![0, 1, 2], 2).is_err());
        assert!(Dataset::new(f.clone(), vec![0, 0, 0], 1).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 0), vec![], 2).is_err());
        assert_eq!(
            Dataset::with_inferred_classes(f, vec![0, 4, 1]).unwrap().classes(),
            5
        );
    }

    #[test]
    fn code_matrix_rejects_non_sign_entries() {
        assert!(CodeMatrix::new(Matrix::from_row_slice(1, 2, &[1.0, 0.0])).is_err());
        assert!(CodeMatrix::new(Matrix::zeros(0, 2)).is_err());
        let c = CodeMatrix::from_signs(&Matrix::from_row_slice(1, 3, &[0.0, -2.0, 3.0]));
        assert_eq!(c.as_matrix().as_slice(), &[1.0, -1.0, 1.0]);
    }

    fn ten_samples() -> Dataset {
        let f = Matrix::from_fn(2, 10, |i, j| (i * 10 + j) as f64);
        Dataset::new(f, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let spec = SplitSpec {
            query_fraction: 0.2,
            seed: 3,
        };
        let idx = split_indices(ten_samples().labels(), spec).unwrap();
        assert_eq!(idx.query.len(), 2);
        assert_eq!(idx.database.len(), 8);
        let mut all: Vec<usize> = idx.query.iter().chain(&idx.database).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(idx, split_indices(ten_samples().labels(), spec).unwrap());
        let (q, db) = split(&ten_samples(), spec).unwrap();
        assert_eq!((q.len(), db.len()), (2, 8));
    }

    #[test]
    fn split_keeps_every_class_in_database() {
        let labels: Vec<usize> = (0..1000).map(|i| i / 100).collect();
        for seed in 0..5 {
            let idx = split_indices(
                &labels,
                SplitSpec {
                    query_fraction: 0.1,
                    seed,
                },
            )
            .unwrap();
            let mut counts = [0usize; 10];
            for &i in &idx.database {
                counts[labels[i]] += 1;
            }
            assert!(counts.iter().all(|&c| c >= 1));
            assert_eq!(idx.query.len(), 100);
        }
    }

    #[test]
    fn split_errors() {
        let spec = |f| SplitSpec {
            query_fraction: f,
            seed: 0,
        };
        assert!(matches!(
            split_indices(&[0, 0, 1, 2, 2], spec(0.2)),
            Err(Error::SingletonClass { class: 1 })
        ));
        assert!(split_indices(&[0, 0, 1, 1], spec(0.0)).is_err());
        assert!(split_indices(&[0, 0, 1, 1], spec(1.0)).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
