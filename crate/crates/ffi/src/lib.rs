//! C ABI over `tiltbound`.
//!
//! Every function returns a [`TbStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and can be read with
//! [`tb_last_error_message`]. Panics are caught at the boundary and reported
//! as `TB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tiltbound::cgf_engine::{cgf_second_derivative, LogMgf};
use tiltbound::convexity_lab::{classify_family_lc, LcClass};
use tiltbound::gls_spaces::{bphi_norm, tail_bound, GeneratingFunctionSpec, NormEstimate};
use tiltbound::legendre::{conjugate, ConvexGridFunction, Extension};
use tiltbound::rv_models::RandomSource;
use tiltbound::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    /// An argument lies outside a Kramer window.
    Domain = 1,
    Invalid = 2,
    Dimension = 3,
    NotConvex = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    NullPointer = 8,
    Panic = 9,
}

impl From<&Error> for TbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => TbStatus::Domain,
            Error::Invalid(_) => TbStatus::Invalid,
            Error::Dimension { .. } => TbStatus::Dimension,
            Error::NotConvex { .. } => TbStatus::NotConvex,
            Error::Numerical(_) => TbStatus::Numerical,
            Error::Io(_) => TbStatus::Io,
            Error::Parse(_) => TbStatus::Parse,
        }
    }
}

/// Opaque handle to a scalar random source.
pub struct TbSource {
    inner: RandomSource,
}

/// Extension flag for [`tb_conjugate`]: affine continuation with the
/// boundary slope.
pub const TB_EXTEND_AFFINE: i32 = 0;
/// Extension flag for [`tb_conjugate`]: `+inf` outside the grid.
pub const TB_EXTEND_INFINITE: i32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TbStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = TbStatus::from(&e);
            set_last_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            TbStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            TbStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a source from its JSON description, e.g.
/// `{"kind":"gaussian","sigma":1.0}`. Free with [`tb_source_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_source` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_source_from_json(json: *const c_char, out_source: *mut *mut TbSource) -> TbStatus {
    guard(|| {
        let slot = out(out_source, "out_source")?;
        *slot = ptr::null_mut();
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Error::Parse(format!("json is not UTF-8: {e}")))?;
        let inner = RandomSource::from_json(text, None)?;
        *slot = Box::into_raw(Box::new(TbSource { inner }));
        Ok(())
    })
}

/// Releases a source. NULL is accepted.
///
/// # Safety
/// `source` must come from [`tb_source_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tb_source_free(source: *mut TbSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// Half-width of the Kramer window; `+inf` when the MGF is finite everywhere.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tb_source_window(source: *const TbSource, out_lambda0: *mut f64) -> TbStatus {
    guard(|| {
        let s = non_null(source, "source")?;
        let w = s.inner.kramer_window();
        *out(out_lambda0, "out_lambda0")? = if w.finite { w.lambda0 } else { f64::INFINITY };
        Ok(())
    })
}

/// `ln E exp(λX)` with the default method for the source.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tb_log_mgf(source: *const TbSource, lambda: f64, out_value: *mut f64) -> TbStatus {
    guard(|| {
        let s = non_null(source, "source")?;
        let v = LogMgf::auto(&s.inner)?.eval(lambda)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Second derivative of the log-MGF, i.e. the variance of the tilted law.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tb_cgf_second_derivative(
    source: *const TbSource,
    lambda: f64,
    out_value: *mut f64,
) -> TbStatus {
    guard(|| {
        let s = non_null(source, "source")?;
        let v = cgf_second_derivative(&s.inner, lambda)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Norm of the source in the space generated by `φ(λ) = λ²/2`, estimated
/// over the `n` points of `grid`. Infinite norms are reported as `+inf`.
///
/// # Safety
/// `grid` must point to `n` doubles; `out_norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_bphi_norm_phi2(
    source: *const TbSource,
    grid: *const f64,
    n: usize,
    out_norm: *mut f64,
) -> TbStatus {
    guard(|| {
        let s = non_null(source, "source")?;
        let g = slice(grid, n, "grid")?;
        let est = bphi_norm(&s.inner, &GeneratingFunctionSpec::phi2(), g)?;
        *out(out_norm, "out_norm")? = est.value;
        Ok(())
    })
}

/// `exp(-φ*(x/ρ))` for `φ(λ) = λ²/2` and norm `rho`.
///
/// # Safety
/// `out_bound` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_tail_bound_phi2(rho: f64, x: f64, out_bound: *mut f64) -> TbStatus {
    guard(|| {
        let norm = NormEstimate {
            value: rho,
            argsup: None,
            boundary_flag: false,
            monotone_hull: false,
            grid_points: 0,
            grid_min: 0.0,
            grid_max: 0.0,
        };
        let b = tail_bound(&GeneratingFunctionSpec::phi2(), &norm, x)?;
        *out(out_bound, "out_bound")? = b;
        Ok(())
    })
}

/// Writes 1 when the family `φ(λ) = λ^m ln^γ λ` (large λ) is LC, else 0.
///
/// # Safety
/// `out_is_lc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_classify_family_lc(m: f64, gamma: f64, out_is_lc: *mut i32) -> TbStatus {
    guard(|| {
        if !(m.is_finite() && gamma.is_finite()) {
            return Err(Error::Invalid("m and gamma must be finite".into()).into());
        }
        *out(out_is_lc, "out_is_lc")? = i32::from(classify_family_lc(m, gamma) == LcClass::Lc);
        Ok(())
    })
}

fn extension(flag: i32) -> Result<Extension, Failure> {
    match flag {
        TB_EXTEND_AFFINE => Ok(Extension::AffineWithBoundarySlope),
        TB_EXTEND_INFINITE => Ok(Extension::PlusInfinityOutside),
        other => Err(Error::Invalid(format!("unknown extension flag {other}")).into()),
    }
}

/// Legendre conjugate of the piecewise-linear function through
/// `(grid[i], values[i])`, evaluated at `out_grid`. Entries may be `+inf`.
/// `extension` is `TB_EXTEND_AFFINE` or `TB_EXTEND_INFINITE` and applies on
/// both sides. Non-convex input is replaced by its convex hull.
///
/// # Safety
/// `grid` and `values` must point to `n` doubles, `out_grid` and `out_values`
/// to `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn tb_conjugate(
    grid: *const f64,
    values: *const f64,
    n: usize,
    extension_flag: i32,
    out_grid: *const f64,
    m: usize,
    out_values: *mut f64,
) -> TbStatus {
    guard(|| {
        let g = slice(grid, n, "grid")?;
        let v = slice(values, n, "values")?;
        let xs = slice(out_grid, m, "out_grid")?;
        if m > 0 && out_values.is_null() {
            return Err(Failure::Null("out_values"));
        }
        let ext = extension(extension_flag)?;
        let f = ConvexGridFunction::new(g.to_vec(), v.to_vec())?.with_extensions(ext, ext);
        let c = conjugate(&f, xs)?;
        if m > 0 {
            std::slice::from_raw_parts_mut(out_values, m).copy_from_slice(&c.values);
        }
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
