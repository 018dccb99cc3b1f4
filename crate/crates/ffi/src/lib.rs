//! C ABI over the `ccrf` library.
//!
//! Precision systems and trained models are opaque handles created by
//! `ccrf_*_assemble` / `ccrf_model_load` and released with the matching
//! `_free`. Every fallible call returns a [`CcrfStatus`]; on failure
//! [`ccrf_last_error_message`] describes the most recent error on the calling
//! thread. Matrices are row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ccrf::crf::{self, PrecisionSystem};
use ccrf::losses::{tukey_psi, tukey_rho};
use ccrf::model::{predict_raw, Model};
use ccrf::Error;
use ndarray::ArrayView2;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcrfStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    InvalidArgument = 3,
    InvalidPrecision = 4,
    Factorization = 5,
    Format = 6,
    Io = 7,
    Panic = 8,
}

/// A factored precision matrix `A0 = I + D - R`.
pub struct CcrfSystem {
    inner: PrecisionSystem,
}

/// A trained unary + pairwise model.
pub struct CcrfModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CcrfStatus {
    match e {
        Error::Shape(_) => CcrfStatus::Shape,
        Error::InvalidArgument(_) | Error::Divergence { .. } => CcrfStatus::InvalidArgument,
        Error::InvalidPrecision(_) => CcrfStatus::InvalidPrecision,
        Error::Factorization { .. } => CcrfStatus::Factorization,
        Error::Format(_) => CcrfStatus::Format,
        Error::Io(_) => CcrfStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CcrfStatus, String)>) -> CcrfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcrfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CcrfStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CcrfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CcrfStatus, String) {
    (CcrfStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to `rows * cols` readable doubles.
unsafe fn matrix<'a>(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<ArrayView2<'a, f64>, (CcrfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows.checked_mul(cols).ok_or((CcrfStatus::Shape, format!("{what} is too large")))?;
    let slice = std::slice::from_raw_parts(p, len);
    Ok(ArrayView2::from_shape((rows, cols), slice).expect("length matches shape"))
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn write_out(out: *mut f64, values: impl Iterator<Item = f64>, len: usize) -> Result<(), (CcrfStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    Ok(())
}

/// Message for the last failed call on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ccrf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Validate the `n x n` affinity matrix `r` and factor its precision matrix.
///
/// # Safety
/// `r` must point to `n * n` doubles and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ccrf_system_assemble(r: *const f64, n: usize, out: *mut *mut CcrfSystem) -> CcrfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let r = matrix(r, n, n, "r")?;
        let inner = crf::assemble(r).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CcrfSystem { inner }));
        Ok(())
    })
}

/// Node count of a system, or 0 for a null handle.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ccrf_system_dim(system: *const CcrfSystem) -> usize {
    system.as_ref().map_or(0, |s| s.inner.n())
}

/// `log det A0`.
///
/// # Safety
/// `system` must be a live handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn ccrf_system_logdet(system: *const CcrfSystem, out: *mut f64) -> CcrfStatus {
    guard(|| {
        let s = system.as_ref().ok_or_else(|| null("system"))?;
        write_out(out, std::iter::once(s.inner.logdet_a0()), 1)
    })
}

/// MAP estimate `Yhat = A0^-1 Z` for an `n x m` unary matrix `z`.
///
/// # Safety
/// `z` and `yhat` must each point to `n * m` doubles.
#[no_mangle]
pub unsafe extern "C" fn ccrf_system_map_infer(system: *const CcrfSystem, z: *const f64, m: usize, yhat: *mut f64) -> CcrfStatus {
    guard(|| {
        let s = system.as_ref().ok_or_else(|| null("system"))?;
        let n = s.inner.n();
        let z = matrix(z, n, m, "z")?;
        let y = crf::map_infer(&s.inner, z).map_err(lib_err)?;
        write_out(yhat, y.iter().copied(), n * m)
    })
}

/// Negative conditional log-likelihood of labels `y` given unaries `z` (both `n x m`).
///
/// # Safety
/// `y` and `z` must each point to `n * m` doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ccrf_system_nll(system: *const CcrfSystem, y: *const f64, z: *const f64, m: usize, out: *mut f64) -> CcrfStatus {
    guard(|| {
        let s = system.as_ref().ok_or_else(|| null("system"))?;
        let n = s.inner.n();
        let y = matrix(y, n, m, "y")?;
        let z = matrix(z, n, m, "z")?;
        let v = crf::nll(&s.inner, z, y).map_err(lib_err)?;
        write_out(out, std::iter::once(v), 1)
    })
}

/// # Safety
/// `system` must be null or a handle from [`ccrf_system_assemble`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccrf_system_free(system: *mut CcrfSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Load a checkpoint written by the `ccrf` tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ccrf_model_load(path: *const c_char, out: *mut *mut CcrfModel) -> CcrfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| (CcrfStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = ccrf::io::load_model(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CcrfModel { inner }));
        Ok(())
    })
}

/// Input feature width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ccrf_model_feature_dim(model: *const CcrfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.feature_dim())
}

/// Label columns per node, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ccrf_model_label_dim(model: *const CcrfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.label_dim())
}

/// Full-model MAP scores for `n` nodes: `features` is `n x feature_dim`,
/// `centroids` is `n x 2` (row, column in [0, 1]), `yhat` receives `n x label_dim`.
///
/// # Safety
/// Buffers must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn ccrf_model_predict(
    model: *const CcrfModel,
    features: *const f64,
    centroids: *const f64,
    n: usize,
    yhat: *mut f64,
) -> CcrfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let f = matrix(features, n, m.inner.feature_dim(), "features")?;
        let c = matrix(centroids, n, 2, "centroids")?;
        let y = predict_raw(&m.inner, f, c).map_err(lib_err)?;
        write_out(yhat, y.iter().copied(), y.len())
    })
}

/// # Safety
/// `model` must be null or a handle from [`ccrf_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccrf_model_free(model: *mut CcrfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tukey biweight value `rho` and derivative `psi` at residual `r`.
///
/// # Safety
/// `rho` and `psi` must be writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ccrf_tukey(r: f64, c: f64, rho: *mut f64, psi: *mut f64) -> CcrfStatus {
    guard(|| {
        if !(c > 0.0) {
            return Err((CcrfStatus::InvalidArgument, "c must be > 0".into()));
        }
        write_out(rho, std::iter::once(tukey_rho(r, c)), 1)?;
        write_out(psi, std::iter::once(tukey_psi(r, c)), 1)
    })
}
