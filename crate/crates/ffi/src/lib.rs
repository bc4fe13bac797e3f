//! C ABI for `rough-em-lab`.
//!
//! Every entry point returns a [`RoughEmStatus`]; on failure the message is
//! kept per thread and can be copied out with [`rough_em_last_error`].
//! Models, moduli and rate reports are opaque heap handles released by their
//! `_free` functions. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rough_em_lab::kolmogorov::constants;
use rough_em_lab::models::{make_catalog_model, CatalogParams, Model};
use rough_em_lab::modulus::{dini_integral, Modulus};
use rough_em_lab::rates::{fit_rate, strong_error, RateReport, RateStudy, Reference};
use rough_em_lab::Error;

/// Status codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoughEmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownModel = 3,
    Domain = 4,
    Divergence = 5,
    GridMismatch = 6,
    NonPositiveError = 7,
    NonContraction = 8,
    MissingMetadata = 9,
    Validation = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

impl From<&Error> for RoughEmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => RoughEmStatus::Domain,
            Error::InvalidParameter(_) | Error::UnknownClass(_) => RoughEmStatus::InvalidArgument,
            Error::UnknownModel(_) => RoughEmStatus::UnknownModel,
            Error::Divergence { .. } => RoughEmStatus::Divergence,
            Error::GridMismatch(_) => RoughEmStatus::GridMismatch,
            Error::NonPositiveError { .. } => RoughEmStatus::NonPositiveError,
            Error::NonContraction { .. } => RoughEmStatus::NonContraction,
            Error::MissingMetadata(_) => RoughEmStatus::MissingMetadata,
            Error::Validation(_) => RoughEmStatus::Validation,
            Error::Config { .. } => RoughEmStatus::Config,
            Error::Io(_) => RoughEmStatus::Io,
        }
    }
}

/// Opaque catalog model.
pub struct RoughEmModel(Model);

/// Opaque modulus of continuity.
pub struct RoughEmModulus(Modulus);

/// Opaque result of a strong-error study.
pub struct RoughEmRateReport(RateReport);

/// Explicit constants of a bounded model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RoughEmConstants {
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub upsilon: f64,
    pub lambda_min: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard<F>(f: F) -> RoughEmStatus
where
    F: FnOnce() -> Result<(), (RoughEmStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RoughEmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RoughEmStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RoughEmStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (RoughEmStatus, String) {
    (RoughEmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RoughEmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (RoughEmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (RoughEmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (RoughEmStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rough_em_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rough_em_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Build a catalog model. `params` holds `key = value` lines (or is null
/// for the defaults).
///
/// # Safety
/// `name` and `params` must be null or valid C strings; `model` must be a
/// valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rough_em_model_new(name: *const c_char, params: *const c_char, model: *mut *mut RoughEmModel) -> RoughEmStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let name = c_str(name, "name")?;
        let mut p = CatalogParams::default();
        if !params.is_null() {
            for line in c_str(params, "params")?.lines() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| (RoughEmStatus::InvalidArgument, format!("expected 'key = value', got '{line}'")))?;
                p.set(k.trim(), v.trim()).map_err(lib)?;
            }
        }
        let m = make_catalog_model(name, &p).map_err(lib)?;
        *slot = Box::into_raw(Box::new(RoughEmModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`rough_em_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rough_em_model_free(model: *mut RoughEmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the model state (`2n` for degenerate models).
///
/// # Safety
/// `model` must be a live handle and `dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rough_em_model_state_dim(model: *const RoughEmModel, dim: *mut usize) -> RoughEmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out(dim, "dim")? = m.0.state_dim();
        Ok(())
    })
}

/// Constants of a bounded non-degenerate model.
///
/// # Safety
/// `model` must be a live handle and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rough_em_constants(model: *const RoughEmModel, result: *mut RoughEmConstants) -> RoughEmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let r = out(result, "result")?;
        let c = constants(m.0.as_standard().map_err(lib)?).map_err(lib)?;
        *r = RoughEmConstants { lambda: c.lambda, lambda_tilde: c.lambda_tilde, upsilon: c.upsilon, lambda_min: c.lambda_min };
        Ok(())
    })
}

/// `phi(r) = r^beta`.
///
/// # Safety
/// `modulus` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rough_em_modulus_power(beta: f64, modulus: *mut *mut RoughEmModulus) -> RoughEmStatus {
    guard(|| {
        let slot = out(modulus, "modulus")?;
        *slot = Box::into_raw(Box::new(RoughEmModulus(Modulus::power(beta).map_err(lib)?)));
        Ok(())
    })
}

/// `phi(r) = log(c + 1/r)^(-p)`, `phi(0) = 0`.
///
/// # Safety
/// `modulus` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rough_em_modulus_log_power(c: f64, p: f64, modulus: *mut *mut RoughEmModulus) -> RoughEmStatus {
    guard(|| {
        let slot = out(modulus, "modulus")?;
        *slot = Box::into_raw(Box::new(RoughEmModulus(Modulus::log_power(c, p).map_err(lib)?)));
        Ok(())
    })
}

/// # Safety
/// `modulus` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rough_em_modulus_eval(modulus: *const RoughEmModulus, r: f64, value: *mut f64) -> RoughEmStatus {
    guard(|| {
        let m = modulus.as_ref().ok_or_else(|| null("modulus"))?;
        *out(value, "value")? = m.0.eval(r).map_err(lib)?;
        Ok(())
    })
}

/// `∫_{lower_cut}^1 phi(s)/s ds`.
///
/// # Safety
/// `modulus` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rough_em_modulus_dini_integral(
    modulus: *const RoughEmModulus,
    lower_cut: f64,
    points: usize,
    value: *mut f64,
) -> RoughEmStatus {
    guard(|| {
        let m = modulus.as_ref().ok_or_else(|| null("modulus"))?;
        *out(value, "value")? = dini_integral(&m.0, lower_cut, points).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `modulus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rough_em_modulus_free(modulus: *mut RoughEmModulus) {
    if !modulus.is_null() {
        drop(Box::from_raw(modulus));
    }
}

/// Run a coupled strong-error study. `threads == 0` uses the default pool;
/// `exact_reference != 0` compares against the model's exact simulator.
///
/// # Safety
/// `levels` must point to `n_levels` values, `x0` to `x0_len` values, and
/// `report` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rough_em_strong_error(
    model: *const RoughEmModel,
    levels: *const u32,
    n_levels: usize,
    reference_level: u32,
    n_paths: usize,
    seed: u64,
    x0: *const f64,
    x0_len: usize,
    exact_reference: i32,
    threads: usize,
    report: *mut *mut RoughEmRateReport,
) -> RoughEmStatus {
    guard(|| {
        let slot = out(report, "report")?;
        *slot = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let study = RateStudy {
            levels: slice(levels, n_levels, "levels")?.to_vec(),
            reference_level,
            n_paths,
            seed,
            x0: slice(x0, x0_len, "x0")?.to_vec(),
            reference: if exact_reference != 0 { Reference::Exact } else { Reference::Euler },
            threads: if threads == 0 { None } else { Some(threads) },
        };
        let r = strong_error(&m.0, &study).map_err(lib)?;
        *slot = Box::into_raw(Box::new(RoughEmRateReport(r)));
        Ok(())
    })
}

/// Number of levels in a report.
///
/// # Safety
/// `report` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rough_em_report_len(report: *const RoughEmRateReport, len: *mut usize) -> RoughEmStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        *out(len, "len")? = r.0.levels.len();
        Ok(())
    })
}

/// Step size, mean squared sup error and its standard error of level `index`.
///
/// # Safety
/// `report` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rough_em_report_level(
    report: *const RoughEmRateReport,
    index: usize,
    delta: *mut f64,
    error: *mut f64,
    stderr: *mut f64,
) -> RoughEmStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        if index >= r.levels.len() {
            return Err((RoughEmStatus::InvalidArgument, format!("index {index} out of range (len {})", r.levels.len())));
        }
        *out(delta, "delta")? = r.deltas[index];
        *out(error, "error")? = r.errors[index];
        *out(stderr, "stderr")? = r.stderrs[index];
        Ok(())
    })
}

/// Fitted log-log slope and R² of a report. Fails with
/// `NonPositiveError` when some level has zero error.
///
/// # Safety
/// `report` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rough_em_report_fit(report: *const RoughEmRateReport, slope: *mut f64, r_squared: *mut f64) -> RoughEmStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let f = fit_rate(&r.deltas, &r.errors).map_err(lib)?;
        *out(slope, "slope")? = f.slope;
        *out(r_squared, "r_squared")? = f.r_squared;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rough_em_report_free(report: *mut RoughEmRateReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Least-squares fit of `log errors` on `log deltas`.
///
/// # Safety
/// `deltas` and `errors` must point to `n` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn rough_em_fit_rate(
    deltas: *const f64,
    errors: *const f64,
    n: usize,
    slope: *mut f64,
    intercept: *mut f64,
    r_squared: *mut f64,
) -> RoughEmStatus {
    guard(|| {
        let f = fit_rate(slice(deltas, n, "deltas")?, slice(errors, n, "errors")?).map_err(lib)?;
        *out(slope, "slope")? = f.slope;
        *out(intercept, "intercept")? = f.intercept;
        *out(r_squared, "r_squared")? = f.r_squared;
        Ok(())
    })
}
