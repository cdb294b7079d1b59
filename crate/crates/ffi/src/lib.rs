//! C ABI over the solver. Every function returns a [`FracpmeStatus`]; on
//! failure [`fracpme_last_error`] describes the cause. Histories are opaque
//! handles released with [`fracpme_history_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use fracpme::fracops::{frac_laplacian, mittag_leffler};
use fracpme::grid::integrate;
use fracpme::{stepper, Error, Field, Grid, History, Params};

/// Status codes shared by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FracpmeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonConvergence = 3,
    SolverFailure = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Problem constants; the Newton settings take their defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FracpmeParams {
    pub gamma: f64,
    pub s: f64,
    pub m: f64,
    pub a: f64,
    pub t_final: f64,
    pub k: usize,
}

/// Completed trajectory.
pub struct FracpmeHistory {
    inner: History,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &Error) -> FracpmeStatus {
    match e {
        _ if e.is_nonconvergence() => FracpmeStatus::NonConvergence,
        Error::StepFailed { .. } | Error::NonFinite { .. } => FracpmeStatus::SolverFailure,
        Error::OutOfRange(_) | Error::StepIndex { .. } => FracpmeStatus::OutOfRange,
        _ => FracpmeStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body`, converting errors and panics into a status and a message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FracpmeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FracpmeStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            FracpmeStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            FracpmeStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn field_from(grid: &Grid, values: &[f64]) -> Result<Field, Failure> {
    Ok(Field::new(grid, values.to_vec())?)
}

/// Message of the last failure on this thread. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fracpme_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Solves `k` implicit steps on a periodic grid of `n^dim` nodes.
///
/// `initial` holds `n^dim` values in row-major order. `forcing` is null for an
/// unforced run, or holds `k * n^dim` values for steps `1..=k`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` receives a handle to
/// release with `fracpme_history_free`.
#[no_mangle]
pub unsafe extern "C" fn fracpme_solve(
    params: *const FracpmeParams,
    dim: usize,
    n: usize,
    length: f64,
    initial: *const f64,
    initial_len: usize,
    forcing: *const f64,
    forcing_len: usize,
    out: *mut *mut FracpmeHistory,
) -> FracpmeStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let p = params.as_ref().ok_or(Failure::Null("params"))?;
        let params = Params::new(p.gamma, p.s, p.m, p.a, p.t_final, p.k)?;
        let grid = Grid::new(dim, n, length)?;
        let w0 = field_from(&grid, slice(initial, initial_len, "initial")?)?;
        let forcing = if forcing.is_null() {
            None
        } else {
            let values = slice(forcing, forcing_len, "forcing")?;
            if forcing_len != params.k * grid.len() {
                return Err(Error::FieldLength { expected: params.k * grid.len(), got: forcing_len }.into());
            }
            Some(values.chunks(grid.len()).map(|c| field_from(&grid, c)).collect::<Result<Vec<_>, _>>()?)
        };
        let history = stepper::solve(&params, &w0, forcing)?;
        *out = Box::into_raw(Box::new(FracpmeHistory { inner: history }));
        Ok(())
    })
}

/// # Safety
/// `history` must be null or a handle from `fracpme_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fracpme_history_free(history: *mut FracpmeHistory) {
    if !history.is_null() {
        drop(Box::from_raw(history));
    }
}

/// Number of stored states, `k + 1`; zero for a null handle.
///
/// # Safety
/// `history` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fracpme_history_len(history: *const FracpmeHistory) -> usize {
    history.as_ref().map_or(0, |h| h.inner.len())
}

/// Values per state, `n^dim`; zero for a null handle.
///
/// # Safety
/// `history` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fracpme_history_field_len(history: *const FracpmeHistory) -> usize {
    history.as_ref().map_or(0, |h| h.inner.grid().len())
}

/// Copies state `j` into `out`, which must hold `n^dim` values.
///
/// # Safety
/// `history` must be a live handle and `out` valid for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn fracpme_history_copy_step(
    history: *const FracpmeHistory,
    j: usize,
    out: *mut f64,
    out_len: usize,
) -> FracpmeStatus {
    guard(|| {
        let h = &history.as_ref().ok_or(Failure::Null("history"))?.inner;
        let dst = slice_mut(out, out_len, "out")?;
        if j >= h.len() {
            return Err(Error::StepIndex { j, k: h.len() - 1 }.into());
        }
        let src = h.field(j).values();
        if dst.len() != src.len() {
            return Err(Error::FieldLength { expected: src.len(), got: dst.len() }.into());
        }
        dst.copy_from_slice(src);
        Ok(())
    })
}

/// Time and mass of state `j`.
///
/// # Safety
/// `history` must be a live handle; `time` and `mass` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn fracpme_history_mass(
    history: *const FracpmeHistory,
    j: usize,
    time: *mut f64,
    mass: *mut f64,
) -> FracpmeStatus {
    guard(|| {
        let h = &history.as_ref().ok_or(Failure::Null("history"))?.inner;
        let t = time.as_mut().ok_or(Failure::Null("time"))?;
        let m = mass.as_mut().ok_or(Failure::Null("mass"))?;
        if j >= h.len() {
            return Err(Error::StepIndex { j, k: h.len() - 1 }.into());
        }
        *t = h.time(j);
        *m = integrate(h.field(j));
        Ok(())
    })
}

/// `E_gamma(z)` for `0 < gamma <= 1`, `z <= 0`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fracpme_mittag_leffler(gamma: f64, z: f64, out: *mut f64) -> FracpmeStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = mittag_leffler(gamma, z)?;
        Ok(())
    })
}

/// Spectral `(-Delta)^s` of `input` on the periodic grid, `0 < s <= 1`.
///
/// # Safety
/// `input` and `output` must each be valid for `len` values and may not overlap.
#[no_mangle]
pub unsafe extern "C" fn fracpme_frac_laplacian(
    dim: usize,
    n: usize,
    length: f64,
    s: f64,
    input: *const f64,
    output: *mut f64,
    len: usize,
) -> FracpmeStatus {
    guard(|| {
        let grid = Grid::new(dim, n, length)?;
        let f = field_from(&grid, slice(input, len, "input")?)?;
        let dst = slice_mut(output, len, "output")?;
        dst.copy_from_slice(frac_laplacian(&f, s)?.values());
        Ok(())
    })
}
