//! C ABI for the bootstrap/expansion library. Handles are opaque pointers,
//! every call returns a status code, and the most recent error message is
//! retrievable per thread via [`eb_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use edgeboot::bootstrap::{bootstrap_distribution, SampleSet};
use edgeboot::harness::{self, statistic_from_name, ExperimentConfig, RunOutcome};
use edgeboot::regions::Ball;
use edgeboot::Error;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Status codes returned by every API call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbStatus {
    EbOk = 0,
    EbInvalidArgument = 1,
    EbIoError = 2,
    EbConfigError = 3,
    EbComputeError = 4,
    EbPanic = 5,
}

fn status_of(err: &Error) -> EbStatus {
    match err {
        Error::Config(_) => EbStatus::EbConfigError,
        Error::Io(_) => EbStatus::EbIoError,
        _ => EbStatus::EbComputeError,
    }
}

/// Opaque sample-set handle.
pub struct EbSampleSet {
    inner: SampleSet,
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, EbStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(EbStatus::EbInvalidArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        EbStatus::EbInvalidArgument
    })
}

fn guard<F: FnOnce() -> EbStatus>(f: F) -> EbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            EbStatus::EbPanic
        }
    }
}

/// Copy the most recent error message for this thread into `buf` (always
/// NUL-terminated when `cap > 0`) and return the full message length.
#[no_mangle]
pub unsafe extern "C" fn eb_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn build_sample_set(text: &str, out: *mut *mut EbSampleSet) -> EbStatus {
    if out.is_null() {
        set_error("null output pointer");
        return EbStatus::EbInvalidArgument;
    }
    match SampleSet::from_csv(text) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(EbSampleSet { inner })) };
            EbStatus::EbOk
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Parse a sample set from CSV text (`sample_id,x1,..,xd` header).
#[no_mangle]
pub unsafe extern "C" fn eb_sample_set_from_csv_text(
    text: *const c_char,
    out: *mut *mut EbSampleSet,
) -> EbStatus {
    guard(|| {
        let text = match cstr(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        build_sample_set(text, out)
    })
}

/// Read a sample set from a CSV file.
#[no_mangle]
pub unsafe extern "C" fn eb_sample_set_from_csv_file(
    path: *const c_char,
    out: *mut *mut EbSampleSet,
) -> EbStatus {
    guard(|| {
        let path = match cstr(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match std::fs::read_to_string(Path::new(path)) {
            Ok(text) => build_sample_set(&text, out),
            Err(e) => {
                set_error(e.to_string());
                EbStatus::EbIoError
            }
        }
    })
}

/// Release a sample-set handle. Passing NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn eb_sample_set_free(handle: *mut EbSampleSet) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Report the shape of a sample set.
#[no_mangle]
pub unsafe extern "C" fn eb_sample_set_info(
    handle: *const EbSampleSet,
    k: *mut usize,
    d: *mut usize,
    n_total: *mut usize,
) -> EbStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            set_error("null handle");
            return EbStatus::EbInvalidArgument;
        };
        if !k.is_null() {
            *k = h.inner.k();
        }
        if !d.is_null() {
            *d = h.inner.d();
        }
        if !n_total.is_null() {
            *n_total = h.inner.n_total();
        }
        EbStatus::EbOk
    })
}

fn opt_param(param: f64) -> Option<f64> {
    if param.is_nan() {
        None
    } else {
        Some(param)
    }
}

/// Monte Carlo bootstrap estimate of `P(T* <= threshold | sample)` for a
/// scalar catalog statistic, with standard error. Pass NaN for `param` to
/// use the statistic's default parameter.
#[no_mangle]
pub unsafe extern "C" fn eb_bootstrap_probability(
    handle: *const EbSampleSet,
    statistic: *const c_char,
    param: f64,
    reps: u64,
    seed: u64,
    threshold: f64,
    out_p: *mut f64,
    out_se: *mut f64,
) -> EbStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            set_error("null handle");
            return EbStatus::EbInvalidArgument;
        };
        let name = match cstr(statistic) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out_p.is_null() {
            set_error("null output pointer");
            return EbStatus::EbInvalidArgument;
        }
        let run = || -> Result<(f64, f64), Error> {
            let stat = statistic_from_name(name, h.inner.d(), opt_param(param))?;
            let dist = bootstrap_distribution(stat.as_ref(), &h.inner, reps as usize, seed)?;
            dist.prob_region(&Ball::half_line(threshold))
        };
        match run() {
            Ok((p, se)) => {
                *out_p = p;
                if !out_se.is_null() {
                    *out_se = se;
                }
                EbStatus::EbOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Expansion estimate of the same probability at expansion order `nu`,
/// evaluated by deterministic quadrature.
#[no_mangle]
pub unsafe extern "C" fn eb_expansion_probability(
    handle: *const EbSampleSet,
    statistic: *const c_char,
    param: f64,
    nu: u32,
    threshold: f64,
    out_p: *mut f64,
) -> EbStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            set_error("null handle");
            return EbStatus::EbInvalidArgument;
        };
        let name = match cstr(statistic) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out_p.is_null() {
            set_error("null output pointer");
            return EbStatus::EbInvalidArgument;
        }
        let run = || -> Result<f64, Error> {
            let stat = statistic_from_name(name, h.inner.d(), opt_param(param))?;
            let (expansion, sigma) =
                harness::expansion_from_sample(stat.as_ref(), &h.inner, nu as usize)?;
            expansion.probability_quadrature(
                &Ball::half_line(threshold / sigma),
                h.inner.n_total() as u64,
                nu as usize,
            )
        };
        match run() {
            Ok(p) => {
                *out_p = p.clamp(0.0, 1.0);
                EbStatus::EbOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Run a full experiment from a config file. `out_exit_code` receives the
/// CLI exit convention: 0 success, 2 config error, 3 oracle failure,
/// 4 threshold failure.
#[no_mangle]
pub unsafe extern "C" fn eb_run_experiment(
    config_path: *const c_char,
    out_exit_code: *mut i32,
) -> EbStatus {
    guard(|| {
        let path = match cstr(config_path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out_exit_code.is_null() {
            set_error("null output pointer");
            return EbStatus::EbInvalidArgument;
        }
        let run = || -> Result<RunOutcome, Error> {
            let cfg = ExperimentConfig::from_file(Path::new(path))?;
            harness::run(&cfg)
        };
        match run() {
            Ok(RunOutcome::Success) => {
                *out_exit_code = 0;
                EbStatus::EbOk
            }
            Ok(RunOutcome::OracleFailed) => {
                *out_exit_code = 3;
                set_error("oracle suite failed");
                EbStatus::EbOk
            }
            Ok(RunOutcome::ThresholdFailed(msg)) => {
                *out_exit_code = 4;
                set_error(msg);
                EbStatus::EbOk
            }
            Err(e) => {
                *out_exit_code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}
