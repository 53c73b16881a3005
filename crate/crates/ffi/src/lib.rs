//! C interface: build a distillation instance, solve it, read the report.
//!
//! Every function returns a [`CipmErrorCode`]; on failure a message is
//! available from [`cipm_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use condensed_ipm::distillation::{build_distillation, DistillationModel, DistillationParams};
use condensed_ipm::ipm::{solve, SolveReport, SolveStatus, SolverOptions};
use condensed_ipm::kkt::StrategyKind;

/// Opaque compiled model.
pub struct CipmModel {
    inner: DistillationModel,
}

/// Opaque solve report.
pub struct CipmReport {
    inner: SolveReport,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipmErrorCode {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Build = 3,
    BufferTooSmall = 4,
    Serialize = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipmStrategy {
    Augmented = 0,
    Lifted = 1,
    Hykkt = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipmSolveStatus {
    Optimal = 0,
    MaxIter = 1,
    RestorationFailure = 2,
    StrategyFailure = 3,
    EvaluationFailure = 4,
}

/// Solver settings; obtain defaults from [`cipm_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CipmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub strategy: CipmStrategy,
    pub tau_relax: f64,
    pub gamma: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CipmTimers {
    pub init_s: f64,
    pub ad_s: f64,
    pub linsolve_s: f64,
    pub total_s: f64,
}

impl From<CipmStrategy> for StrategyKind {
    fn from(s: CipmStrategy) -> Self {
        match s {
            CipmStrategy::Augmented => StrategyKind::Augmented,
            CipmStrategy::Lifted => StrategyKind::Lifted,
            CipmStrategy::Hykkt => StrategyKind::Hykkt,
        }
    }
}

impl From<StrategyKind> for CipmStrategy {
    fn from(s: StrategyKind) -> Self {
        match s {
            StrategyKind::Augmented => CipmStrategy::Augmented,
            StrategyKind::Lifted => CipmStrategy::Lifted,
            StrategyKind::Hykkt => CipmStrategy::Hykkt,
        }
    }
}

impl From<SolveStatus> for CipmSolveStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => CipmSolveStatus::Optimal,
            SolveStatus::MaxIter => CipmSolveStatus::MaxIter,
            SolveStatus::RestorationFailure => CipmSolveStatus::RestorationFailure,
            SolveStatus::StrategyFailure => CipmSolveStatus::StrategyFailure,
            SolveStatus::EvaluationFailure => CipmSolveStatus::EvaluationFailure,
        }
    }
}

impl From<&SolverOptions> for CipmOptions {
    fn from(o: &SolverOptions) -> Self {
        Self { tol: o.tol, max_iter: o.max_iter, strategy: o.strategy.into(), tau_relax: o.tau_relax, gamma: o.gamma }
    }
}

impl From<&CipmOptions> for SolverOptions {
    fn from(o: &CipmOptions) -> Self {
        SolverOptions {
            tol: o.tol,
            max_iter: o.max_iter,
            strategy: o.strategy.into(),
            tau_relax: o.tau_relax,
            gamma: o.gamma,
            ..SolverOptions::default()
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), (CipmErrorCode, String)>) -> CipmErrorCode {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CipmErrorCode::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            CipmErrorCode::Panic
        }
    }
}

fn null(what: &str) -> (CipmErrorCode, String) {
    (CipmErrorCode::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cipm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Writes the default solver settings into `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `CipmOptions`.
#[no_mangle]
pub unsafe extern "C" fn cipm_options_default(out: *mut CipmOptions) -> CipmErrorCode {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = CipmOptions::from(&SolverOptions::default());
        Ok(())
    })
}

/// Builds the distillation instance with `n_steps` intervals. `params_toml`
/// may be null (defaults) or a TOML document overriding parameters.
///
/// # Safety
/// `params_toml` must be null or a NUL-terminated string; `out` must point
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cipm_distillation_new(
    n_steps: usize,
    params_toml: *const c_char,
    out: *mut *mut CipmModel,
) -> CipmErrorCode {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let params = if params_toml.is_null() {
            DistillationParams::default()
        } else {
            let text = unsafe { CStr::from_ptr(params_toml) }
                .to_str()
                .map_err(|e| (CipmErrorCode::InvalidArgument, format!("parameters are not UTF-8: {e}")))?;
            DistillationParams::from_toml_str(text).map_err(|e| (CipmErrorCode::InvalidArgument, e.to_string()))?
        };
        let inner = build_distillation(n_steps, params).map_err(|e| (CipmErrorCode::Build, e.to_string()))?;
        *out = Box::into_raw(Box::new(CipmModel { inner }));
        Ok(())
    })
}

/// Number of variables, equality rows and inequality rows.
///
/// # Safety
/// `model` must come from [`cipm_distillation_new`]; the outputs must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_model_dimensions(
    model: *const CipmModel,
    n: *mut usize,
    m_e: *mut usize,
    m_i: *mut usize,
) -> CipmErrorCode {
    guard(|| {
        let m = &unsafe { model.as_ref() }.ok_or_else(|| null("model"))?.inner.model;
        for (p, v) in [(n, m.n()), (m_e, m.m_e()), (m_i, m.m_i())] {
            if let Some(p) = unsafe { p.as_mut() } {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or come from [`cipm_distillation_new`] and not have
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn cipm_model_free(model: *mut CipmModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Solves the model. A report is produced for every termination status;
/// the error code only signals invalid arguments.
///
/// # Safety
/// `model` must be a live model handle, `options` null (defaults) or a
/// valid pointer, `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cipm_solve(
    model: *const CipmModel,
    options: *const CipmOptions,
    out: *mut *mut CipmReport,
) -> CipmErrorCode {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let model = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let opts = match unsafe { options.as_ref() } {
            Some(o) => SolverOptions::from(o),
            None => SolverOptions::default(),
        };
        opts.validate().map_err(|e| (CipmErrorCode::InvalidArgument, e))?;
        let inner = solve(&model.inner.model, &opts);
        *out = Box::into_raw(Box::new(CipmReport { inner }));
        Ok(())
    })
}

fn report<'a>(r: *const CipmReport) -> Result<&'a SolveReport, (CipmErrorCode, String)> {
    unsafe { r.as_ref() }.map(|r| &r.inner).ok_or_else(|| null("report"))
}

/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_status(r: *const CipmReport, out: *mut CipmSolveStatus) -> CipmErrorCode {
    guard(|| {
        let v = report(r)?.status.into();
        *unsafe { out.as_mut() }.ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_iterations(r: *const CipmReport, out: *mut usize) -> CipmErrorCode {
    guard(|| {
        let v = report(r)?.iterations;
        *unsafe { out.as_mut() }.ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_objective(r: *const CipmReport, out: *mut f64) -> CipmErrorCode {
    guard(|| {
        let v = report(r)?.objective;
        *unsafe { out.as_mut() }.ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Final unscaled KKT residual.
///
/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_residual(r: *const CipmReport, out: *mut f64) -> CipmErrorCode {
    guard(|| {
        let v = report(r)?.residual.unscaled;
        *unsafe { out.as_mut() }.ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_timers(r: *const CipmReport, out: *mut CipmTimers) -> CipmErrorCode {
    guard(|| {
        let t = report(r)?.timers;
        *unsafe { out.as_mut() }.ok_or_else(|| null("out"))? =
            CipmTimers { init_s: t.init_s, ad_s: t.ad_s, linsolve_s: t.linsolve_s, total_s: t.total_s };
        Ok(())
    })
}

/// Copies the final primal point into `x`, which must hold at least `len`
/// values; `len` must be at least the number of variables.
///
/// # Safety
/// `r` must be a live report handle and `x` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_solution(r: *const CipmReport, x: *mut f64, len: usize) -> CipmErrorCode {
    guard(|| {
        let rep = report(r)?;
        let sol = rep.solution.as_ref().ok_or_else(|| (CipmErrorCode::InvalidArgument, "report has no solution".into()))?;
        if x.is_null() {
            return Err(null("x"));
        }
        if len < sol.x.len() {
            return Err((CipmErrorCode::BufferTooSmall, format!("buffer holds {len} values, solution has {}", sol.x.len())));
        }
        unsafe { std::slice::from_raw_parts_mut(x, sol.x.len()) }.copy_from_slice(&sol.x);
        Ok(())
    })
}

/// Serializes the report as JSON. Release the string with
/// [`cipm_string_free`].
///
/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_to_json(r: *const CipmReport, out: *mut *mut c_char) -> CipmErrorCode {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let text = serde_json::to_string(report(r)?).map_err(|e| (CipmErrorCode::Serialize, e.to_string()))?;
        *out = CString::new(text).map_err(|e| (CipmErrorCode::Serialize, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a report; null is ignored.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn cipm_report_free(r: *mut CipmReport) {
    if !r.is_null() {
        drop(unsafe { Box::from_raw(r) });
    }
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from [`cipm_report_to_json`].
#[no_mangle]
pub unsafe extern "C" fn cipm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
