//! C ABI over the `hybridproj` solver.
//!
//! Problems and reports are opaque heap handles released with their `_free`
//! functions. Every fallible call returns an [`HpStatus`]; on failure the
//! message is available from [`hp_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybridproj::cli::{self, RunConfig, Setup, Summary};
use hybridproj::geometry::Vector;
use hybridproj::problems::known_solution_set;
use hybridproj::solver::{Mode, Report, Solver, StopReason, StopRule};
use hybridproj::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    InvalidModel = 4,
    ConvergenceFailure = 5,
    Infeasible = 6,
    Unsupported = 7,
    DeterminismViolation = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpStopReason {
    Reference = 0,
    Residual = 1,
    Budget = 2,
    TimeBudget = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpMode {
    Algorithm1 = 1,
    Algorithm2 = 2,
}

/// A configured problem: family, schedule, solver options and start point.
pub struct HpProblem {
    name: &'static str,
    setup: Setup,
}

/// Result of [`hp_solve`].
pub struct HpReport {
    report: Report,
    summary: Summary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> HpStatus {
    match e.root() {
        Error::InvalidArgument(_) => HpStatus::InvalidArgument,
        Error::InvalidConfig(_) => HpStatus::InvalidConfig,
        Error::InvalidModel(_) => HpStatus::InvalidModel,
        Error::ConvergenceFailure { .. } => HpStatus::ConvergenceFailure,
        Error::Infeasible { .. } => HpStatus::Infeasible,
        Error::Unsupported(_) => HpStatus::Unsupported,
        Error::Determinism(_) => HpStatus::DeterminismViolation,
        Error::Io { .. } => HpStatus::Io,
        Error::AtIteration { .. } => unreachable!("root strips iteration wrappers"),
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HpStatus, String)>) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HpStatus::Panic
        }
    }
}

fn fail(e: Error) -> (HpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HpStatus, String) {
    (HpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn problem_mut<'a>(p: *mut HpProblem) -> Result<&'a mut HpProblem, (HpStatus, String)> {
    p.as_mut().ok_or_else(|| null("problem"))
}

unsafe fn report_ref<'a>(p: *const HpReport) -> Option<&'a HpReport> {
    p.as_ref()
}

fn from_config(cfg: &RunConfig) -> Result<HpProblem, (HpStatus, String)> {
    let setup = cfg.build(None).map_err(fail)?;
    Ok(HpProblem { name: cfg.problem.name(), setup })
}

/// Last error message on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn hp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The benchmark family with `n_ops` bifunctions and `n_maps` maps, its
/// default schedule, `x0 = 1`, `algorithm2` mode and a 1000-iteration budget.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_section4(n_ops: usize, n_maps: usize, out: *mut *mut HpProblem) -> HpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = format!(r#"{{"problem": {{"preset": "section4", "n_ops": {n_ops}, "n_maps": {n_maps}}}}}"#);
        let cfg = RunConfig::from_json(&json).map_err(fail)?;
        *out = Box::into_raw(Box::new(from_config(&cfg)?));
        Ok(())
    })
}

/// Builds a problem from a run-config JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_from_json(json: *const c_char, out: *mut *mut HpProblem) -> HpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::from_json(str_arg(json, "json")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(from_config(&cfg)?));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_free(problem: *mut HpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_dim(problem: *const HpProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.setup.family.dim())
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_set_workers(problem: *mut HpProblem, workers: usize) -> HpStatus {
    guard(|| {
        let p = problem_mut(problem)?;
        if workers == 0 {
            return Err((HpStatus::InvalidArgument, "workers must be >= 1".into()));
        }
        p.setup.solver.workers = workers;
        Ok(())
    })
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_set_max_iter(problem: *mut HpProblem, max_iter: usize) -> HpStatus {
    guard(|| {
        problem_mut(problem)?.setup.solver.max_iter = max_iter;
        Ok(())
    })
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_set_mode(problem: *mut HpProblem, mode: HpMode) -> HpStatus {
    guard(|| {
        problem_mut(problem)?.setup.solver.mode = match mode {
            HpMode::Algorithm1 => Mode::Algorithm1,
            HpMode::Algorithm2 => Mode::Algorithm2,
        };
        Ok(())
    })
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_set_record_history(problem: *mut HpProblem, on: bool) -> HpStatus {
    guard(|| {
        problem_mut(problem)?.setup.solver.record_history = on;
        Ok(())
    })
}

/// Replaces the starting point.
///
/// # Safety
/// `problem` must be a live handle; `x0` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_set_x0(problem: *mut HpProblem, x0: *const f64, len: usize) -> HpStatus {
    guard(|| {
        let p = problem_mut(problem)?;
        if x0.is_null() {
            return Err(null("x0"));
        }
        let v = Vector::new(std::slice::from_raw_parts(x0, len).to_vec()).map_err(fail)?;
        v.ensure_dim(p.setup.family.dim(), "x0").map_err(fail)?;
        p.setup.x0 = v;
        Ok(())
    })
}

/// Stop once `||x_n - P_F(x0)|| <= tol` (needs a family with a known solution set).
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_stop_at_solution(problem: *mut HpProblem, tol: f64) -> HpStatus {
    guard(|| {
        let p = problem_mut(problem)?;
        let reference = known_solution_set(&p.setup.family).map_err(fail)?.project(&p.setup.x0);
        p.setup.solver.stop = StopRule::ToReference { reference, tol };
        Ok(())
    })
}

/// Stop once all residual maxima are `<= tol`.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_problem_stop_at_residual(problem: *mut HpProblem, tol: f64) -> HpStatus {
    guard(|| {
        problem_mut(problem)?.setup.solver.stop = StopRule::Residual { tol };
        Ok(())
    })
}

/// Runs the solver.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_solve(problem: *const HpProblem, out: *mut *mut HpReport) -> HpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = &p.setup;
        let report = Solver::new(&s.family, &s.schedule, &s.solver).and_then(|sv| sv.solve(&s.x0)).map_err(fail)?;
        let reference = match &s.solver.stop {
            StopRule::ToReference { reference, .. } => Some(reference),
            _ => None,
        };
        let summary = Summary::new(p.name, s.solver.mode, &s.x0, reference, &report);
        *out = Box::into_raw(Box::new(HpReport { report, summary }));
        Ok(())
    })
}

/// Runs a config document end to end (artifacts go to its output dir, if any).
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_run_json(json: *const c_char, out: *mut *mut HpReport) -> HpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::from_json(str_arg(json, "json")?).map_err(fail)?;
        let outcome = cli::run(&cfg, None, None).map_err(|f| fail(f.error))?;
        *out = Box::into_raw(Box::new(HpReport { report: outcome.report, summary: outcome.summary }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`hp_solve`] or [`hp_run_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_report_free(report: *mut HpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_report_dim(report: *const HpReport) -> usize {
    report_ref(report).map_or(0, |r| r.report.x.dim())
}

/// Copies the final iterate into `out` (`len` must equal the dimension).
///
/// # Safety
/// `report` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hp_report_x(report: *const HpReport, out: *mut f64, len: usize) -> HpStatus {
    guard(|| {
        let r = report_ref(report).ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = r.report.x.as_slice();
        if len != x.len() {
            return Err((HpStatus::InvalidArgument, format!("buffer length {len}, dimension {}", x.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(x);
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_report_iterations(report: *const HpReport) -> usize {
    report_ref(report).map_or(0, |r| r.report.iterations)
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_report_stop_reason(report: *const HpReport) -> HpStopReason {
    match report_ref(report).map(|r| r.report.stop) {
        Some(StopReason::Reference) => HpStopReason::Reference,
        Some(StopReason::Residual) => HpStopReason::Residual,
        Some(StopReason::TimeBudget) => HpStopReason::TimeBudget,
        Some(StopReason::Budget) | None => HpStopReason::Budget,
    }
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_report_wall_time_ms(report: *const HpReport) -> f64 {
    report_ref(report).map_or(0.0, |r| r.report.wall_time.as_secs_f64() * 1e3)
}

/// Number of recorded history rows.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_report_history_len(report: *const HpReport) -> usize {
    report_ref(report).map_or(0, |r| r.report.history.len())
}

/// `||x_{k+1}||` and the residual maxima `(y, z, S)` of history row `k`.
///
/// # Safety
/// `report` must be a live handle; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hp_report_history_row(report: *const HpReport, k: usize, out: *mut f64) -> HpStatus {
    guard(|| {
        let r = report_ref(report).ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let step = r.report.history.get(k).ok_or_else(|| {
            (HpStatus::InvalidArgument, format!("row {k} out of range ({} rows)", r.report.history.len()))
        })?;
        let row = [step.x_next.norm(), step.residuals.y, step.residuals.z, step.residuals.s];
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&row);
        Ok(())
    })
}

/// Run summary as a JSON string; release it with [`hp_string_free`].
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_report_summary_json(report: *const HpReport) -> *mut c_char {
    match report_ref(report) {
        Some(r) => CString::new(r.summary.to_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
