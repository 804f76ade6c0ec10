//! C ABI for `rslh`.
//!
//! Models are opaque [`RslhModel`] handles created by `rslh_model_train`,
//! `rslh_model_boost` or `rslh_model_load` and released with
//! `rslh_model_free`. Every fallible call returns an [`RslhStatus`]; on
//! failure `rslh_last_error_message` describes the error until the next call
//! on the same thread.
//!
//! Feature buffers hold `n` samples of `dim` contiguous doubles. Code
//! buffers are either one `int8_t` (+1 or -1) per bit, sample-major, or
//! packed with `ceil(L / 8)` bytes per sample, bit `k` in byte `k / 8` at
//! position `k % 8`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rslh::boosting::{boost, BoostConfig};
use rslh::dataio::{CodeMatrix, Dataset};
use rslh::eval::evaluate_codes;
use rslh::matrixkit::Matrix;
use rslh::trainer::{train, Hyperparams};
use rslh::{Error, HashModel};

/// Result codes. `RSLH_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RslhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Panic = 6,
}

/// Opaque model handle.
pub struct RslhModel {
    inner: HashModel,
}

/// Training hyperparameters. A `sigma` of zero or less means the bandwidth
/// is estimated from the data.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RslhHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub code_length: u32,
    pub max_iters: u32,
    pub rel_tol: f64,
    pub anchors: u32,
    pub sigma: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RslhEvalReport {
    pub map: f64,
    pub map_at_h2: f64,
    pub precision_at_k: f64,
    pub k: usize,
    pub n_queries: usize,
    pub n_database: usize,
    pub code_length: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> RslhStatus {
    match e {
        Error::Io { .. } => RslhStatus::Io,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::DimensionOverflow { .. }
        | Error::Truncated { .. }
        | Error::TrailingData { .. }
        | Error::CorruptHeader(_)
        | Error::NonNumeric { .. }
        | Error::Parse { .. }
        | Error::MissingEntry(_) => RslhStatus::Format,
        Error::NonFinite(_)
        | Error::NotPositiveDefinite
        | Error::SvdNoConvergence { .. }
        | Error::EigenNoConvergence => RslhStatus::Numerical,
        Error::LabelOutOfRange { .. }
        | Error::SingletonClass { .. }
        | Error::Shape { .. }
        | Error::InvalidArgument(_) => RslhStatus::InvalidArgument,
    }
}

struct Failure(RslhStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RslhStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RslhStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RslhStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RslhStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            RslhStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const RslhModel) -> Result<&'a HashModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| invalid(format!("{a} x {b} overflows")))
}

/// `n` samples of `dim` doubles as a `dim x n` matrix.
unsafe fn features(p: *const f64, n: usize, dim: usize) -> Result<Matrix, Failure> {
    if n == 0 || dim == 0 {
        return Err(invalid("feature buffer must have n > 0 and dim > 0"));
    }
    let data = slice(p, checked_len(n, dim)?, "features")?;
    Ok(Matrix::from_column_slice(dim, n, data))
}

unsafe fn dataset(
    feats: *const f64,
    n: usize,
    dim: usize,
    labels: *const u32,
) -> Result<Dataset, Failure> {
    let x = features(feats, n, dim)?;
    let labels = slice(labels, n, "labels")?
        .iter()
        .map(|&l| l as usize)
        .collect();
    Ok(Dataset::with_inferred_classes(x, labels)?)
}

fn hyperparams(h: &RslhHyperparams) -> Hyperparams {
    Hyperparams {
        alpha: h.alpha,
        beta: h.beta,
        gamma: h.gamma,
        mu: h.mu,
        lambda: h.lambda,
        code_length: h.code_length as usize,
        max_iters: h.max_iters as usize,
        rel_tol: h.rel_tol,
        anchors: h.anchors as usize,
        sigma: (h.sigma > 0.0).then_some(h.sigma),
    }
}

unsafe fn store_model(out: *mut *mut RslhModel, model: HashModel) {
    *out = Box::into_raw(Box::new(RslhModel { inner: model }));
}

/// Default hyperparameters with an 8-bit code and 1000 anchors.
#[no_mangle]
pub extern "C" fn rslh_hyperparams_default() -> RslhHyperparams {
    let d = Hyperparams::default();
    RslhHyperparams {
        alpha: d.alpha,
        beta: d.beta,
        gamma: d.gamma,
        mu: d.mu,
        lambda: d.lambda,
        code_length: d.code_length as u32,
        max_iters: d.max_iters as u32,
        rel_tol: d.rel_tol,
        anchors: d.anchors as u32,
        sigma: 0.0,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rslh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `rslh_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rslh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Trains a plain model. `labels` holds `n` class indices.
///
/// # Safety
/// Buffers must be valid for the given sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_train(
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *const u32,
    hyper: *const RslhHyperparams,
    seed: u64,
    out: *mut *mut RslhModel,
) -> RslhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hyper = hyper.as_ref().ok_or_else(|| null("hyper"))?;
        let ds = dataset(features, n, dim, labels)?;
        let model = train(&ds, &hyperparams(hyper), seed)?;
        store_model(out, HashModel::Plain(model));
        Ok(())
    })
}

/// Trains `runs` models with seeds `seed, seed + 1, ...` and keeps a
/// balanced, uncorrelated subset of their bits.
///
/// # Safety
/// As for [`rslh_model_train`].
#[no_mangle]
pub unsafe extern "C" fn rslh_model_boost(
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *const u32,
    hyper: *const RslhHyperparams,
    runs: u32,
    seed: u64,
    out: *mut *mut RslhModel,
) -> RslhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hyper = hyper.as_ref().ok_or_else(|| null("hyper"))?;
        let ds = dataset(features, n, dim, labels)?;
        let cfg = BoostConfig {
            runs: runs as usize,
            seeds: None,
            seed,
            cluster_seed: seed,
        };
        let model = boost(&ds, &hyperparams(hyper), &cfg)?;
        store_model(out, HashModel::Boosted(model));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_load(path: *const c_char, out: *mut *mut RslhModel) -> RslhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = HashModel::load(&path_arg(path)?)?;
        store_model(out, model);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_save(model: *const RslhModel, path: *const c_char) -> RslhStatus {
    guard(|| {
        let m = model_ref(model)?;
        m.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_free(model: *mut RslhModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Code length L, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_code_length(model: *const RslhModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.code_length())
}

/// Expected feature dimension, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_feature_dim(model: *const RslhModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// 1 for boosted models, 0 for plain models or NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_is_boosted(model: *const RslhModel) -> i32 {
    model.as_ref().map_or(0, |m| i32::from(m.inner.is_boosted()))
}

unsafe fn encode_with(
    model: *const RslhModel,
    feats: *const f64,
    n: usize,
    dim: usize,
) -> Result<CodeMatrix, Failure> {
    let m = model_ref(model)?;
    if dim != m.input_dim() {
        return Err(invalid(format!(
            "features have dimension {dim}, model expects {}",
            m.input_dim()
        )));
    }
    Ok(m.encode(&features(feats, n, dim)?)?)
}

/// Writes `n * L` signs (+1 / -1), sample-major, to `out`.
///
/// # Safety
/// `features` must hold `n * dim` doubles and `out` room for `n * L` bytes.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_encode(
    model: *const RslhModel,
    features: *const f64,
    n: usize,
    dim: usize,
    out: *mut i8,
    out_len: usize,
) -> RslhStatus {
    guard(|| {
        let codes = encode_with(model, features, n, dim)?;
        let l = codes.code_length();
        let need = checked_len(n, l)?;
        if out_len < need {
            return Err(invalid(format!("output holds {out_len} bytes, {need} needed")));
        }
        let out = slice_mut(out, need, "out")?;
        for j in 0..n {
            for k in 0..l {
                out[j * l + k] = if codes.bit(k, j) { 1 } else { -1 };
            }
        }
        Ok(())
    })
}

/// Writes packed codes, `ceil(L / 8)` bytes per sample, to `out`.
///
/// # Safety
/// `features` must hold `n * dim` doubles and `out` room for `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rslh_model_encode_packed(
    model: *const RslhModel,
    features: *const f64,
    n: usize,
    dim: usize,
    out: *mut u8,
    out_len: usize,
) -> RslhStatus {
    guard(|| {
        let codes = encode_with(model, features, n, dim)?;
        let l = codes.code_length();
        let bytes = l.div_ceil(8);
        let need = checked_len(n, bytes)?;
        if out_len < need {
            return Err(invalid(format!("output holds {out_len} bytes, {need} needed")));
        }
        let out = slice_mut(out, need, "out")?;
        out.fill(0);
        for j in 0..n {
            for k in 0..l {
                if codes.bit(k, j) {
                    out[j * bytes + k / 8] |= 1 << (k % 8);
                }
            }
        }
        Ok(())
    })
}

/// Hamming distance between two packed codes of `code_length` bits.
///
/// # Safety
/// `a` and `b` must each hold `ceil(code_length / 8)` bytes.
#[no_mangle]
pub unsafe extern "C" fn rslh_hamming_distance(
    a: *const u8,
    b: *const u8,
    code_length: usize,
    out: *mut u32,
) -> RslhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = code_length.div_ceil(8);
        let a = slice(a, bytes, "a")?;
        let b = slice(b, bytes, "b")?;
        let mut d = 0u32;
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let mut diff = x ^ y;
            // Ignore padding bits in the last byte.
            let valid = code_length - i * 8;
            if valid < 8 {
                diff &= (1u8 << valid) - 1;
            }
            d += diff.count_ones();
        }
        *out = d;
        Ok(())
    })
}

unsafe fn sign_codes(p: *const i8, n: usize, l: usize, what: &str) -> Result<CodeMatrix, Failure> {
    let data = slice(p, checked_len(n, l)?, what)?;
    if let Some(v) = data.iter().find(|&&v| v != 1 && v != -1) {
        return Err(invalid(format!("{what} holds {v}; codes must be +1 or -1")));
    }
    Ok(CodeMatrix::from_bits(l, n, |k, j| data[j * l + k] == 1))
}

/// Ranks the database for every query and fills `out` with mAP, mAP within
/// Hamming radius 2 and precision@`k`. Codes are `int8_t` signs,
/// sample-major.
///
/// # Safety
/// Buffers must be valid for the given sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rslh_evaluate(
    query_codes: *const i8,
    n_query: usize,
    db_codes: *const i8,
    n_db: usize,
    code_length: usize,
    query_labels: *const u32,
    db_labels: *const u32,
    k: usize,
    out: *mut RslhEvalReport,
) -> RslhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if code_length == 0 {
            return Err(invalid("code length must be >= 1"));
        }
        let q = sign_codes(query_codes, n_query, code_length, "query_codes")?;
        let db = sign_codes(db_codes, n_db, code_length, "db_codes")?;
        let ql: Vec<usize> = slice(query_labels, n_query, "query_labels")?
            .iter()
            .map(|&v| v as usize)
            .collect();
        let dl: Vec<usize> = slice(db_labels, n_db, "db_labels")?
            .iter()
            .map(|&v| v as usize)
            .collect();
        let r = evaluate_codes(&q, &db, &ql, &dl, k)?;
        *out = RslhEvalReport {
            map: r.map,
            map_at_h2: r.map_at_h2,
            precision_at_k: r.precision_at_k,
            k: r.k,
            n_queries: r.n_queries,
            n_database: r.n_database,
            code_length: r.code_length,
        };
        Ok(())
    })
}
