//! C ABI over `mellin-deconv`.
//!
//! Every fallible function returns an [`MdStatus`]; on failure the message is
//! kept per thread and can be copied out with [`md_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use mellin_deconv::estimators::{bandwidth_smooth, bandwidth_zero, estimate, EstimatorConfig, Target};
use mellin_deconv::kernels::{build_kernel, KernelFamily};
use mellin_deconv::mellin::{mellin_analytic, ErrorModel};
use mellin_deconv::Error;
use num_complex::Complex64;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdStatus {
    MdOk = 0,
    MdNullPointer = 1,
    /// A string argument was not valid UTF-8 or did not parse.
    MdInvalidArgument = 2,
    MdStripViolation = 3,
    MdNonConvergence = 4,
    MdPoleError = 5,
    MdIllConditioned = 6,
    MdGridResolution = 7,
    MdDivergentIntegrand = 8,
    MdNotIdentifiable = 9,
    MdEmptySample = 10,
    MdDomainError = 11,
    MdDegenerateDesign = 12,
    MdInvalidParameter = 13,
    /// An internal panic was caught at the boundary.
    MdPanic = 14,
}

impl From<&Error> for MdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::StripViolation { .. } => MdStatus::MdStripViolation,
            Error::NonConvergence { .. } => MdStatus::MdNonConvergence,
            Error::PoleError(_) => MdStatus::MdPoleError,
            Error::IllConditioned(_) => MdStatus::MdIllConditioned,
            Error::GridResolution { .. } => MdStatus::MdGridResolution,
            Error::DivergentIntegrand(_) => MdStatus::MdDivergentIntegrand,
            Error::NotIdentifiable(_) => MdStatus::MdNotIdentifiable,
            Error::EmptySample => MdStatus::MdEmptySample,
            Error::DomainError(_) => MdStatus::MdDomainError,
            Error::DegenerateDesign(_) => MdStatus::MdDegenerateDesign,
            Error::InvalidParameter(_) => MdStatus::MdInvalidParameter,
        }
    }
}

/// A parsed error density.
pub struct MdErrorModel {
    model: ErrorModel,
}

/// An estimator with a fixed target, kernel, line and bandwidth.
pub struct MdEstimator {
    config: EstimatorConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Status(MdStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Status(MdStatus::from(&e), format!("{}: {e}", e.name()))
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(MdStatus::MdNullPointer, format!("null pointer: {what}"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> MdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MdStatus::MdOk
        }
        Ok(Err(Fail::Status(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            MdStatus::MdPanic
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail::Status(MdStatus::MdInvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn md_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns its full length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn md_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a model such as `uniform:1`, `beta:1,2` or `gamma:2,1`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn md_error_model_parse(spec: *const c_char, out_model: *mut *mut MdErrorModel) -> MdStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let model: ErrorModel = text(spec, "spec")?.parse()?;
        *slot = Box::into_raw(Box::new(MdErrorModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from [`md_error_model_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn md_error_model_free(model: *mut MdErrorModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Closed-form Mellin transform at `re + i·im`.
///
/// # Safety
/// `model` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn md_mellin_eval(model: *const MdErrorModel, re: f64, im: f64, out_re: *mut f64, out_im: *mut f64) -> MdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (r, i) = (out(out_re, "out_re")?, out(out_im, "out_im")?);
        let v = mellin_analytic(&m.model, Complex64::new(re, im))?;
        (*r, *i) = (v.re, v.im);
        Ok(())
    })
}

unsafe fn new_estimator(
    model: *const MdErrorModel,
    kernel: *const c_char,
    target: Target,
    s: f64,
    h: f64,
    out_est: *mut *mut MdEstimator,
) -> MdStatus {
    guard(|| {
        let slot = out(out_est, "out_estimator")?;
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let family: KernelFamily = text(kernel, "kernel")?.parse()?;
        let config = EstimatorConfig::build(target, &m.model, Arc::new(build_kernel(family)?), s, h)?;
        *slot = Box::into_raw(Box::new(MdEstimator { config }));
        Ok(())
    })
}

/// Estimator of `f_X(x0)`; `kernel` uses the CLI grammar (`gaussian:2`).
///
/// # Safety
/// `model` must be a live handle, `kernel` NUL-terminated, `out_est` writable.
#[no_mangle]
pub unsafe extern "C" fn md_estimator_new_point(
    model: *const MdErrorModel,
    kernel: *const c_char,
    x0: f64,
    s: f64,
    h: f64,
    out_est: *mut *mut MdEstimator,
) -> MdStatus {
    new_estimator(model, kernel, Target::AtPoint(x0), s, h, out_est)
}

/// Estimator of `f_X(0)`; `kernel` is typically `exponential:2`.
///
/// # Safety
/// As for [`md_estimator_new_point`].
#[no_mangle]
pub unsafe extern "C" fn md_estimator_new_zero(
    model: *const MdErrorModel,
    kernel: *const c_char,
    s: f64,
    h: f64,
    out_est: *mut *mut MdEstimator,
) -> MdStatus {
    new_estimator(model, kernel, Target::AtZero, s, h, out_est)
}

/// # Safety
/// `est` must be null or come from an `md_estimator_new_*` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn md_estimator_free(est: *mut MdEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Evaluates the estimator on `n` observations. `out_warnings` (may be null)
/// receives the number of warnings raised.
///
/// # Safety
/// `sample` must point to `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn md_estimate(est: *const MdEstimator, sample: *const f64, n: usize, out_value: *mut f64, out_warnings: *mut u32) -> MdStatus {
    guard(|| {
        let e = est.as_ref().ok_or_else(|| null("estimator"))?;
        let slot = out(out_value, "out_value")?;
        let data: &[f64] = if n == 0 {
            &[]
        } else if sample.is_null() {
            return Err(null("sample"));
        } else {
            std::slice::from_raw_parts(sample, n)
        };
        let r = estimate(data, &e.config)?;
        *slot = r.value;
        if let Some(w) = out_warnings.as_mut() {
            *w = r.warnings.len() as u32;
        }
        Ok(())
    })
}

/// Bandwidth for smooth errors at a point.
///
/// # Safety
/// `out_h` must be writable.
#[no_mangle]
pub unsafe extern "C" fn md_bandwidth_smooth(a: f64, beta: f64, gamma: f64, x0: f64, n: f64, out_h: *mut f64) -> MdStatus {
    guard(|| {
        let slot = out(out_h, "out_h")?;
        *slot = bandwidth_smooth(a, beta, gamma, x0, n)?;
        Ok(())
    })
}

/// Bandwidth and line for the estimator at the origin.
///
/// # Safety
/// `out_h` and `out_s` must be writable.
#[no_mangle]
pub unsafe extern "C" fn md_bandwidth_zero(a: f64, beta: f64, m: f64, p: f64, q: f64, n: f64, out_h: *mut f64, out_s: *mut f64) -> MdStatus {
    guard(|| {
        let (h, s) = (out(out_h, "out_h")?, out(out_s, "out_s")?);
        let t = bandwidth_zero(a, beta, m, p, q, n)?;
        (*h, *s) = (t.h, t.s);
        Ok(())
    })
}
