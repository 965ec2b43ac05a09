//! C ABI over `qvlasov`.
//!
//! Objects are opaque handles created by `*_new`/`*_load`-style calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`QvStatus`]; on failure `qv_last_error_message` describes the error
//! for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qvlasov::forcefield::{load_force_field, sample_analytic, AnalyticForce, ForceField};
use qvlasov::grid::PhaseSpaceGrid;
use qvlasov::hamiltonian::{assemble, hmax_bound, verify_oracles};
use qvlasov::initcond::{compute_c, maxwell_demo};
use qvlasov::propagator::{evolve, Backend, DistributionState};
use qvlasov::qae::{qae_estimate, QaeConfig, Scheme};
use qvlasov::resources::{theorem1_queries, ResourceParams};
use qvlasov::spectrum::SpectrumResult;
use qvlasov::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Io = 4,
    Format = 5,
    Convergence = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QvBackend {
    Dense = 0,
    Krylov = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QvScheme {
    SamplingMle = 0,
    Iterative = 1,
}

/// Inputs of the query-count formulas.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QvResourceParams {
    pub dim: usize,
    pub ngr: usize,
    pub nt: usize,
    pub tmax: f64,
    pub box_length: f64,
    pub vmax: f64,
    pub fmax: f64,
    pub eps: f64,
    pub delta: f64,
    pub c: f64,
}

pub struct QvGrid {
    inner: PhaseSpaceGrid,
}

pub struct QvForceField {
    inner: ForceField,
}

pub struct QvState {
    inner: DistributionState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(QvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) | Error::Quadrature(_) | Error::Verification(_) | Error::Eigen(_) => QvStatus::Domain,
            Error::Config(_) => QvStatus::InvalidArgument,
            Error::Format { .. } => QvStatus::Format,
            Error::Io(_) => QvStatus::Io,
            Error::NoConvergence { .. } => QvStatus::Convergence,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(QvStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QvStatus::Ok,
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
            set_last_error(format!("panic: {msg}"));
            QvStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut T, name: &str, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

fn check_len(got: usize, want: usize, name: &str) -> Result<(), Failure> {
    if got != want {
        return Err(Failure(QvStatus::InvalidArgument, format!("{name} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn qv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qv_grid_new(dim: usize, ngr: usize, box_length: f64, vmax: f64, out: *mut *mut QvGrid) -> QvStatus {
    guard(|| {
        let g = PhaseSpaceGrid::new(dim, ngr, box_length, vmax)?;
        put(out, "out", Box::into_raw(Box::new(QvGrid { inner: g })))
    })
}

/// # Safety
/// `grid` must be null or a handle from `qv_grid_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qv_grid_free(grid: *mut QvGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Total number of phase-space grid points `n_gr^(2d)`.
///
/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_grid_len(grid: *const QvGrid, out: *mut usize) -> QvStatus {
    guard(|| put(out, "out", get(grid, "grid")?.inner.len()))
}

/// # Safety
/// `multi` must point to `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_grid_flatten(grid: *const QvGrid, multi: *const usize, n: usize, out: *mut usize) -> QvStatus {
    guard(|| {
        let g = &get(grid, "grid")?.inner;
        let m = slice(multi, n, "multi")?;
        put(out, "out", g.flatten(m)?)
    })
}

/// Writes the `2d` axis indices of `flat` into `out[0..n]`.
///
/// # Safety
/// `out` must point to `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn qv_grid_unflatten(grid: *const QvGrid, flat: usize, out: *mut usize, n: usize) -> QvStatus {
    guard(|| {
        let g = &get(grid, "grid")?.inner;
        let dst = slice_mut(out, n, "out")?;
        check_len(n, g.n_axes(), "out")?;
        dst.copy_from_slice(&g.unflatten(flat)?);
        Ok(())
    })
}

/// `F = A sin(K x)` along the first axis, repeated over `nt` slices.
///
/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_force_analytic(
    grid: *const QvGrid,
    amplitude: f64,
    wavenumber: f64,
    nt: usize,
    out: *mut *mut QvForceField,
) -> QvStatus {
    guard(|| {
        let g = &get(grid, "grid")?.inner;
        let ff = sample_analytic(&AnalyticForce::new(amplitude, wavenumber), g, nt)?;
        put(out, "out", Box::into_raw(Box::new(QvForceField { inner: ff })))
    })
}

/// Loads a single-realization VQFF1 file.
///
/// # Safety
/// `path` must be a nul-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn qv_force_load(grid: *const QvGrid, path: *const c_char, out: *mut *mut QvForceField) -> QvStatus {
    guard(|| {
        let g = &get(grid, "grid")?.inner;
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(QvStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ff = load_force_field(Path::new(p), g)?;
        put(out, "out", Box::into_raw(Box::new(QvForceField { inner: ff })))
    })
}

/// # Safety
/// `ff` must be null or a live force-field handle.
#[no_mangle]
pub unsafe extern "C" fn qv_force_free(ff: *mut QvForceField) {
    if !ff.is_null() {
        drop(Box::from_raw(ff));
    }
}

/// # Safety
/// `ff` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_force_fmax(ff: *const QvForceField, out: *mut f64) -> QvStatus {
    guard(|| put(out, "out", get(ff, "ff")?.inner.fmax()))
}

/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_state_maxwell(grid: *const QvGrid, sigma_v: f64, out: *mut *mut QvState) -> QvStatus {
    guard(|| {
        let s = maxwell_demo(&get(grid, "grid")?.inner, sigma_v)?;
        put(out, "out", Box::into_raw(Box::new(QvState { inner: s })))
    })
}

/// # Safety
/// `values` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn qv_state_from_real(values: *const f64, n: usize, out: *mut *mut QvState) -> QvStatus {
    guard(|| {
        let s = DistributionState::from_real(slice(values, n, "values")?.to_vec())?;
        put(out, "out", Box::into_raw(Box::new(QvState { inner: s })))
    })
}

/// # Safety
/// `state` must be null or a live state handle.
#[no_mangle]
pub unsafe extern "C" fn qv_state_free(state: *mut QvState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_state_len(state: *const QvState, out: *mut usize) -> QvStatus {
    guard(|| put(out, "out", get(state, "state")?.inner.len()))
}

/// Copies the real parts into `out[0..n]`; `n` must equal the state length.
///
/// # Safety
/// `out` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qv_state_copy_real(state: *const QvState, out: *mut f64, n: usize) -> QvStatus {
    guard(|| {
        let s = &get(state, "state")?.inner;
        check_len(n, s.len(), "out")?;
        let dst = slice_mut(out, n, "out")?;
        for (d, v) in dst.iter_mut().zip(s.values()) {
            *d = v.re;
        }
        Ok(())
    })
}

/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_state_norm(state: *const QvState, out: *mut f64) -> QvStatus {
    guard(|| put(out, "out", get(state, "state")?.inner.norm()))
}

/// Evolves `state` to `tmax` over all slices of `ff` into a new handle.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_evolve(
    state: *const QvState,
    grid: *const QvGrid,
    ff: *const QvForceField,
    tmax: f64,
    backend: QvBackend,
    tol: f64,
    out: *mut *mut QvState,
) -> QvStatus {
    guard(|| {
        let s = &get(state, "state")?.inner;
        let g = &get(grid, "grid")?.inner;
        let f = &get(ff, "ff")?.inner;
        let backend = match backend {
            QvBackend::Dense => Backend::Dense,
            QvBackend::Krylov => Backend::Krylov,
        };
        let (s, _) = evolve(s, g, f, tmax, f.nt(), backend, tol)?;
        put(out, "out", Box::into_raw(Box::new(QvState { inner: s })))
    })
}

/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_compute_c(state: *const QvState, out: *mut f64) -> QvStatus {
    guard(|| put(out, "out", compute_c(&get(state, "state")?.inner)?))
}

/// Writes `|δ̃_k|²` for every spatial mode into `out[0..n]`, `n = n_gr^d`.
///
/// # Safety
/// `out` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qv_power_spectrum(state: *const QvState, grid: *const QvGrid, out: *mut f64, n: usize) -> QvStatus {
    guard(|| {
        let g = &get(grid, "grid")?.inner;
        let spec = SpectrumResult::analyze(&get(state, "state")?.inner, g)?;
        check_len(n, spec.power.len(), "out")?;
        slice_mut(out, n, "out")?.copy_from_slice(&spec.power);
        Ok(())
    })
}

/// Counts oracle mismatches over every time slice of `ff`.
///
/// # Safety
/// Handles must be live; `mismatches` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_verify_oracles(grid: *const QvGrid, ff: *const QvForceField, mismatches: *mut usize) -> QvStatus {
    guard(|| {
        let g = &get(grid, "grid")?.inner;
        let f = &get(ff, "ff")?.inner;
        let mut total = 0;
        for i_t in 0..f.nt() {
            total += verify_oracles(&assemble(g, f, i_t)?, f)?.mismatch_count();
        }
        put(mismatches, "mismatches", total)
    })
}

/// `max{V/L, F_max/(2V)} · n_gr/2`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_hmax_bound(grid: *const QvGrid, ff: *const QvForceField, out: *mut f64) -> QvStatus {
    guard(|| put(out, "out", hmax_bound(&get(grid, "grid")?.inner, &get(ff, "ff")?.inner)))
}

/// Emulated amplitude estimation of `a`.
///
/// # Safety
/// `estimate` and `oracle_calls` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_qae_estimate(
    a: f64,
    eps: f64,
    delta: f64,
    seed: u64,
    scheme: QvScheme,
    estimate: *mut f64,
    oracle_calls: *mut u64,
) -> QvStatus {
    guard(|| {
        let scheme = match scheme {
            QvScheme::SamplingMle => Scheme::SamplingMle,
            QvScheme::Iterative => Scheme::Iterative,
        };
        let r = qae_estimate(a, &QaeConfig::new(eps, delta, seed, scheme)?)?;
        put(estimate, "estimate", r.estimate)?;
        put(oracle_calls, "oracle_calls", r.oracle_calls)
    })
}

/// Unit-constant query count for one evolved-state preparation.
///
/// # Safety
/// `params` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_theorem1_queries(params: *const QvResourceParams, out: *mut f64) -> QvStatus {
    guard(|| {
        let p = get(params, "params")?;
        let rp = ResourceParams {
            dim: p.dim,
            ngr: p.ngr,
            nt: p.nt,
            tmax: p.tmax,
            box_length: p.box_length,
            vmax: p.vmax,
            fmax: p.fmax,
            eps: p.eps,
            delta: p.delta,
            c: p.c,
            niv: 1,
        };
        put(out, "out", theorem1_queries(&rp)?)
    })
}
