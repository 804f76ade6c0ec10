//! Persisting plain and boosted models in the SLHM container.

use std::path::Path;

use crate::boosting::BoostedModel;
use crate::dataio::{CodeMatrix, ModelFile};
use crate::error::{Error, Result};
use crate::kernelmap::KernelMap;
use crate::matrixkit::Matrix;
use crate::trainer::{Hyperparams, RslhModel};

/// Container flag bit set for boosted models.
pub const FLAG_BOOSTED: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum HashModel {
    Plain(RslhModel),
    Boosted(BoostedModel),
}

impl From<RslhModel> for HashModel {
    fn from(m: RslhModel) -> Self {
        HashModel::Plain(m)
    }
}

impl From<BoostedModel> for HashModel {
    fn from(m: BoostedModel) -> Self {
        HashModel::Boosted(m)
    }
}

impl HashModel {
    pub fn is_boosted(&self) -> bool {
        matches!(self, HashModel::Boosted(_))
    }

    pub fn code_length(&self) -> usize {
        match self {
            HashModel::Plain(m) => m.code_length(),
            HashModel::Boosted(m) => m.code_length(),
        }
    }

    pub fn kernel(&self) -> &KernelMap {
        match self {
            HashModel::Plain(m) => &m.kernel,
            HashModel::Boosted(m) => &m.kernel,
        }
    }

    pub fn hyper(&self) -> &Hyperparams {
        match self {
            HashModel::Plain(m) => &m.hyper,
            HashModel::Boosted(m) => &m.hyper,
        }
    }

    /// Feature dimension the model expects.
    pub fn input_dim(&self) -> usize {
        self.kernel().input_dim()
    }

    pub fn encode(&self, features: &Matrix) -> Result<CodeMatrix> {
        match self {
            HashModel::Plain(m) => m.encode(features),
            HashModel::Boosted(m) => m.encode(features),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            HashModel::Plain(m) => {
                let mut f = ModelFile::new(0);
                put_common(&mut f, &m.kernel, &m.hyper);
                f.put("w", m.w.clone());
                f.put("b", m.b.clone());
                f.put("h", m.h.as_matrix().clone());
                f.put("p", m.p.clone());
                f.put("r", m.r.clone());
                put_u64s(&mut f, "seed", &[m.seed]);
                f.put(
                    "objective_trace",
                    Matrix::from_row_slice(1, m.objective_trace.len(), &m.objective_trace),
                );
                f
            }
            HashModel::Boosted(m) => {
                let mut f = ModelFile::new(FLAG_BOOSTED);
                put_common(&mut f, &m.kernel, &m.hyper);
                f.put_indices("selected", &m.selected);
                let (runs, bits): (Vec<usize>, Vec<usize>) = m.origin.iter().copied().unzip();
                f.put_indices("origin_run", &runs);
                f.put_indices("origin_bit", &bits);
                f.put("h_final", m.h_final.as_matrix().clone());
                f.put("p_boost", m.p_boost.clone());
                put_u64s(&mut f, "run_seeds", &m.run_seeds);
                put_u64s(&mut f, "cluster_seed", &[m.cluster_seed]);
                f.put_scalar("used_fallback", f64::from(u8::from(m.used_fallback)));
                f
            }
        }
    }

    pub fn from_file(mut f: ModelFile) -> Result<Self> {
        if f.flags & !FLAG_BOOSTED != 0 {
            return Err(Error::CorruptHeader(format!("unknown model flags {:#x}", f.flags)));
        }
        let kernel = KernelMap::new(f.take("kernel.anchors")?, f.scalar("kernel.sigma")?)?;
        let hyper = get_hyper(&f)?;
        let model = if f.flags & FLAG_BOOSTED != 0 {
            let selected = f.indices("selected")?;
            let origin: Vec<(usize, usize)> = f
                .indices("origin_run")?
                .into_iter()
                .zip(f.indices("origin_bit")?)
                .collect();
            let h_final = CodeMatrix::new(f.take("h_final")?)?;
            let p_boost = f.take("p_boost")?;
            if selected.len() != h_final.code_length()
                || origin.len() != selected.len()
                || p_boost.shape() != (kernel.anchor_count(), h_final.code_length())
            {
                return Err(Error::CorruptHeader("boosted model entries disagree in shape".into()));
            }
            HashModel::Boosted(BoostedModel {
                selected,
                origin,
                h_final,
                p_boost,
                kernel,
                hyper,
                run_seeds: get_u64s(&f, "run_seeds")?,
                cluster_seed: single_u64(&f, "cluster_seed")?,
                used_fallback: f.scalar("used_fallback")? != 0.0,
            })
        } else {
            let h = CodeMatrix::new(f.take("h")?)?;
            let p = f.take("p")?;
            if p.shape() != (kernel.anchor_count(), h.code_length()) {
                return Err(Error::CorruptHeader("projection shape disagrees with kernel".into()));
            }
            HashModel::Plain(RslhModel {
                w: f.take("w")?,
                b: f.take("b")?,
                h,
                p,
                r: f.take("r")?,
                kernel,
                hyper,
                seed: single_u64(&f, "seed")?,
                objective_trace: f.take("objective_trace")?.iter().copied().collect(),
            })
        };
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_file().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_file(ModelFile::from_bytes(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(ModelFile::load(path)?)
    }
}

/// `iteration,objective` rows, starting at iteration 0 (the initial state).
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{v:e}\n"));
    }
    out
}

fn put_common(f: &mut ModelFile, kernel: &KernelMap, hyper: &Hyperparams) {
    f.put("kernel.anchors", kernel.anchors().clone());
    f.put_scalar("kernel.sigma", kernel.sigma());
    f.put(
        "hyper",
        Matrix::from_row_slice(
            1,
            8,
            &[
                hyper.alpha,
                hyper.beta,
                hyper.gamma,
                hyper.mu,
                hyper.lambda,
                hyper.code_length as f64,
                hyper.max_iters as f64,
                hyper.rel_tol,
            ],
        ),
    );
    f.put_scalar("hyper.anchors", hyper.anchors as f64);
    if let Some(s) = hyper.sigma {
        f.put_scalar("hyper.sigma", s);
    }
}

fn get_hyper(f: &ModelFile) -> Result<Hyperparams> {
    let h = f.get("hyper")?;
    if h.len() != 8 {
        return Err(Error::CorruptHeader("hyperparameter entry has wrong size".into()));
    }
    let count = |v: f64| {
        if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
            Ok(v as usize)
        } else {
            Err(Error::CorruptHeader(format!("{v} is not a count")))
        }
    };
    let hyper = Hyperparams {
        alpha: h[0],
        beta: h[1],
        gamma: h[2],
        mu: h[3],
        lambda: h[4],
        code_length: count(h[5])?,
        max_iters: count(h[6])?,
        rel_tol: h[7],
        anchors: f.count("hyper.anchors")?,
        sigma: match f.scalar("hyper.sigma") {
            Ok(s) => Some(s),
            Err(Error::MissingEntry(_)) => None,
            Err(e) => return Err(e),
        },
    };
    hyper
        .validate()
        .map_err(|e| Error::CorruptHeader(format!("stored hyperparameters: {e}")))?;
    Ok(hyper)
}

// u64 values do not fit in f64 exactly, so they are stored as 32-bit halves.
fn put_u64s(f: &mut ModelFile, name: &str, values: &[u64]) {
    f.put(
        name,
        Matrix::from_fn(2, values.len(), |i, j| {
            if i == 0 {
                (values[j] >> 32) as f64
            } else {
                (values[j] & 0xffff_ffff) as f64
            }
        }),
    );
}

fn get_u64s(f: &ModelFile, name: &str) -> Result<Vec<u64>> {
    let m = f.get(name)?;
    if m.nrows() != 2 {
        return Err(Error::CorruptHeader(format!("{name} is not a u64 list")));
    }
    let half = |v: f64| {
        if (0.0..=u32::MAX as f64).contains(&v) && v.fract() == 0.0 {
            Ok(v as u64)
        } else {
            Err(Error::CorruptHeader(format!("{name} holds {v}")))
        }
    };
    (0..m.ncols())
        .map(|j| Ok(half(m[(0, j)])? << 32 | half(m[(1, j)])?))
        .collect()
}

fn single_u64(f: &ModelFile, name: &str) -> Result<u64> {
    match get_u64s(f, name)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::CorruptHeader(format!("{name} is not a single value"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_blobs, BlobSpec};
    use crate::trainer::train;

    fn small_model() -> (RslhModel, Matrix) {
        let ds = gaussian_blobs(&BlobSpec {
            n: 60,
            dim: 5,
            classes: 3,
            ..Default::default()
        })
        .unwrap();
        let hyper = Hyperparams {
            code_length: 3,
            anchors: 20,
            max_iters: 3,
            ..Default::default()
        };
        (train(&ds, &hyper, u64::MAX - 3).unwrap(), ds.features().clone())
    }

    #[test]
    fn plain_roundtrip_is_exact() {
        let (m, feats) = small_model();
        let hm = HashModel::from(m);
        let bytes = hm.to_bytes().unwrap();
        let back = HashModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, hm);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.encode(&feats).unwrap(), hm.encode(&feats).unwrap());
        assert!(!back.is_boosted());
    }

    #[test]
    fn sigma_override_survives() {
        let (mut m, _) = small_model();
        m.hyper.sigma = Some(0.25);
        let hm = HashModel::Plain(m);
        assert_eq!(HashModel::from_bytes(&hm.to_bytes().unwrap()).unwrap(), hm);
    }

    #[test]
    fn rejects_unknown_flags() {
        let (m, _) = small_model();
        let mut f = HashModel::Plain(m).to_file();
        f.flags = 4;
        assert!(HashModel::from_file(f).is_err());
    }

    #[test]
    fn trace_csv_format() {
        let csv = trace_csv(&[10.0, 2.5]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,objective");
        assert_eq!(lines[2], "1,2.5e0");
        assert_eq!(lines[1].split(',').nth(1).unwrap().parse::<f64>().unwrap(), 10.0);
    }
}
