//! Supervised short-length binary hashing.
//!
//! Training alternates closed-form updates of a label regressor `W`, a
//! row-orthonormal real embedding `B`, binary codes `H` and a kernel
//! projection `P`; new samples are encoded as `sgn(Pᵀ φ(a))`. A boosting
//! stage picks balanced, mutually uncorrelated bits out of several runs, and
//! [`eval`] ranks a database by Hamming distance and scores the ranking.
//!
//! ```no_run
//! use rslh::{synth, trainer, eval};
//!
//! let ds = synth::gaussian_blobs(&synth::BlobSpec::default()).unwrap();
//! let hyper = trainer::Hyperparams { code_length: 4, ..Default::default() };
//! let model = trainer::train(&ds, &hyper, 0).unwrap();
//! let codes = model.encode(ds.features()).unwrap();
//! let report = eval::evaluate_codes(&codes, &codes, ds.labels(), ds.labels(), 100).unwrap();
//! println!("{}", report.to_json());
//! ```

pub mod bench;
pub mod boosting;
pub mod cli;

pub mod dataio;
pub mod error;
pub mod eval;
pub mod kernelmap;
pub mod matrixkit;
pub mod model;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use model::HashModel;
