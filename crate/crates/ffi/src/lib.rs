//! C ABI over `reliable-fw`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new` function and released by the matching `*_free`. Fallible calls
//! return an [`RfwStatus`]; the message for the most recent failure on the
//! calling thread is available from [`rfw_last_error`].

use nalgebra::{DMatrix, DVector};
use reliable_fw::harness::ExperimentSpec;
use reliable_fw::oracles::{self, Problem, Quadratic};
use reliable_fw::solver::{self, RunOutput};
use reliable_fw::{Error, Polytope};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    InvalidPolytope = 4,
    InfeasibleStart = 5,
    UnknownName = 6,
    Config = 7,
    Numerical = 8,
    Vicinity = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// A problem instance: objective, hidden polytope and start point.
pub struct RfwProblem(Problem);

/// Solver settings.
pub struct RfwConfig(ExperimentSpec);

/// The result of one run.
pub struct RfwRun(RunOutput);

/// Scalar summary of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RfwRunStats {
    pub horizon: usize,
    pub iterations: usize,
    /// Index of the returned iterate.
    pub t0: usize,
    pub sfo_count: u64,
    /// Feasibility-oracle calls. May exceed 2^64, hence a double.
    pub nfo_count: f64,
    pub f_out: f64,
    /// Smallest true constraint residual over all iterates.
    pub min_true_residual: f64,
    pub safe: bool,
    pub guard_trips: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RfwStatus {
    match e {
        Error::Dimension { .. } => RfwStatus::Dimension,
        Error::InvalidPolytope(_) | Error::EmptyPolytope | Error::Unbounded => RfwStatus::InvalidPolytope,
        Error::InvalidArgument(_) => RfwStatus::InvalidArgument,
        Error::InfeasibleStart(_) => RfwStatus::InfeasibleStart,
        Error::Unknown { .. } => RfwStatus::UnknownName,
        Error::Config(_) => RfwStatus::Config,
        Error::VicinityViolation { .. } => RfwStatus::Vicinity,
        Error::Io(_) | Error::Json(_) => RfwStatus::Io,
        Error::AtIteration { source, .. } => status_of(source),
        Error::CapExceeded { .. } | Error::Degenerate(_) | Error::Uninitialized => RfwStatus::Numerical,
        Error::StaleToken(_) | Error::TokenMismatch(..) => RfwStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), (RfwStatus, String)>) -> RfwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RfwStatus::Panic
        }
    }
}

fn lift(e: Error) -> (RfwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RfwStatus, String) {
    (RfwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RfwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RfwStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (RfwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_vec(v: &DVector<f64>, out: *mut f64, len: usize) -> Result<(), (RfwStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < v.len() {
        return Err((RfwStatus::BufferTooSmall, format!("buffer holds {len}, need {}", v.len())));
    }
    std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(v.as_slice());
    Ok(())
}

/// Message for the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rfw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn rfw_status_message(status: RfwStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RfwStatus::Ok => c"ok",
        RfwStatus::NullPointer => c"null pointer",
        RfwStatus::InvalidArgument => c"invalid argument",
        RfwStatus::Dimension => c"dimension mismatch",
        RfwStatus::InvalidPolytope => c"invalid polytope",
        RfwStatus::InfeasibleStart => c"start point not strictly feasible",
        RfwStatus::UnknownName => c"unknown name",
        RfwStatus::Config => c"configuration error",
        RfwStatus::Numerical => c"numerical failure",
        RfwStatus::Vicinity => c"query outside the allowed vicinity",
        RfwStatus::Io => c"i/o error",
        RfwStatus::BufferTooSmall => c"buffer too small",
        RfwStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

#[no_mangle]
pub extern "C" fn rfw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in problem by id (`cutting-machine`, `quad-box`, `quad-polytope`,
/// `trig-polytope`, ...). `d`, `m` and `seed` only affect synthetic kinds.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rfw_problem_new(
    id: *const c_char,
    d: usize,
    m: usize,
    seed: u64,
    out: *mut *mut RfwProblem,
) -> RfwStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let id = read_str(id, "id")?;
        let p = oracles::problem(id, d, m, seed).map_err(lift)?;
        *out = Box::into_raw(Box::new(RfwProblem(p)));
        Ok(())
    })
}

/// Quadratic `‖x − center‖²` over `{x : A x ≤ b}`. `a` is row-major `m × d`.
///
/// # Safety
/// `a` must hold `m*d` doubles, `b` `m`, `center` and `x0` `d` each.
#[no_mangle]
pub unsafe extern "C" fn rfw_problem_quadratic(
    a: *const f64,
    b: *const f64,
    m: usize,
    d: usize,
    center: *const f64,
    x0: *const f64,
    out: *mut *mut RfwProblem,
) -> RfwStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if m == 0 || d == 0 {
            return Err((RfwStatus::InvalidArgument, "m and d must be positive".into()));
        }
        let a = DMatrix::from_row_slice(m, d, read_slice(a, m * d, "a")?);
        let b = DVector::from_column_slice(read_slice(b, m, "b")?);
        let center = DVector::from_column_slice(read_slice(center, d, "center")?);
        let x0 = DVector::from_column_slice(read_slice(x0, d, "x0")?);
        let polytope = Polytope::new(a, b).map_err(lift)?;
        let objective = Quadratic::new(center, &polytope).map_err(lift)?;
        let p = Problem {
            id: "quadratic".into(),
            objective: Arc::new(objective),
            polytope,
            x0,
            optimum: None,
        };
        *out = Box::into_raw(Box::new(RfwProblem(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from a problem constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn rfw_problem_dim(p: *const RfwProblem) -> usize {
    p.as_ref().map_or(0, |p| p.0.polytope.d())
}

/// # Safety
/// `p` must come from a problem constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn rfw_problem_constraints(p: *const RfwProblem) -> usize {
    p.as_ref().map_or(0, |p| p.0.polytope.m())
}

/// # Safety
/// `p` must come from a problem constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfw_problem_free(p: *mut RfwProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Default settings.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rfw_config_new(out: *mut *mut RfwConfig) -> RfwStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(RfwConfig(ExperimentSpec::default())));
        Ok(())
    })
}

const EXPERIMENT_ONLY: [&str; 8] = ["problem", "dim", "d", "m", "problem_seed", "trials", "out", "plots"];

/// Sets one solver option, e.g. `("variant", "convex-deterministic")` or
/// `("horizon", "200")`. Keys match the command-line experiment files.
///
/// # Safety
/// `c` must come from [`rfw_config_new`]; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rfw_config_set(c: *mut RfwConfig, key: *const c_char, value: *const c_char) -> RfwStatus {
    guarded(|| {
        let c = c.as_mut().ok_or_else(|| null("config"))?;
        let key = read_str(key, "key")?;
        let value = read_str(value, "value")?;
        if EXPERIMENT_ONLY.contains(&key.trim().replace('-', "_").as_str()) {
            return Err((RfwStatus::Config, format!("{key:?} is not a solver option")));
        }
        let mut next = c.0.clone();
        next.set(key, value).map_err(lift)?;
        c.0 = next;
        Ok(())
    })
}

/// # Safety
/// `c` must come from [`rfw_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfw_config_free(c: *mut RfwConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Runs the solver. On success `*out` owns the result.
///
/// # Safety
/// `p` and `c` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rfw_run(p: *const RfwProblem, c: *const RfwConfig, out: *mut *mut RfwRun) -> RfwStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        let c = c.as_ref().ok_or_else(|| null("config"))?;
        let run = solver::reliable_fw(&c.0.config, &p.0).map_err(lift)?;
        *out = Box::into_raw(Box::new(RfwRun(run)));
        Ok(())
    })
}

/// # Safety
/// `r` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rfw_run_stats(r: *const RfwRun, out: *mut RfwRunStats) -> RfwStatus {
    guarded(|| {
        let r = &r.as_ref().ok_or_else(|| null("run"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rows = &r.trace.rows;
        *out = RfwRunStats {
            horizon: r.calibration.horizon,
            iterations: rows.len(),
            t0: r.t0,
            sfo_count: r.sfo_count,
            nfo_count: r.nfo_count as f64,
            f_out: rows.get(r.t0).map_or(f64::NAN, |row| row.f),
            min_true_residual: rows.iter().map(|row| row.min_true_residual).fold(f64::INFINITY, f64::min),
            safe: r.safe(),
            guard_trips: r.guard_trips,
        };
        Ok(())
    })
}

/// Copies the returned point into `buf`, which holds `len` doubles.
///
/// # Safety
/// `r` must be a live run handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn rfw_run_x_out(r: *const RfwRun, buf: *mut f64, len: usize) -> RfwStatus {
    guarded(|| {
        let r = &r.as_ref().ok_or_else(|| null("run"))?.0;
        write_vec(&r.x_out, buf, len)
    })
}

/// Copies iterate `t` into `buf`.
///
/// # Safety
/// `r` must be a live run handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn rfw_run_iterate(r: *const RfwRun, t: usize, buf: *mut f64, len: usize) -> RfwStatus {
    guarded(|| {
        let r = &r.as_ref().ok_or_else(|| null("run"))?.0;
        let row = r
            .trace
            .rows
            .get(t)
            .ok_or_else(|| (RfwStatus::InvalidArgument, format!("iteration {t} out of range")))?;
        write_vec(&row.x, buf, len)
    })
}

/// Writes the per-iteration trace as CSV.
///
/// # Safety
/// `r` must be a live run handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rfw_run_write_trace(r: *const RfwRun, path: *const c_char) -> RfwStatus {
    guarded(|| {
        let r = &r.as_ref().ok_or_else(|| null("run"))?.0;
        let path = read_str(path, "path")?;
        let f = std::fs::File::create(path).map_err(|e| lift(e.into()))?;
        r.trace
            .write_csv(std::io::BufWriter::new(f))
            .map_err(|e| lift(e.into()))
    })
}

/// # Safety
/// `r` must come from [`rfw_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfw_run_free(r: *mut RfwRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
