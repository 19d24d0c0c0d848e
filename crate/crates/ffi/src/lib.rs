//! C ABI over `sysid-core`.
//!
//! Every entry point returns a [`SysidStatus`]. Objects cross the boundary as
//! opaque handles that the caller releases with the matching `*_free`
//! function. Matrices are dense row-major `double` arrays; sequences are
//! row-major with one row per grid interval. After a non-OK status,
//! [`sysid_last_error_message`] describes the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use sysid_core::io::report_json;
use sysid_core::{
    fit, make_control, simulate_sde, ControlKind, Dataset, FitOptions, FitReport, ModelSpec,
    SpecDocument, SysidError, TimeGrid,
};

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SysidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    Singular = 5,
    DescentViolation = 6,
    Parse = 7,
    Panic = 8,
}

/// Validated model and time grid.
pub struct SysidSpec {
    spec: ModelSpec,
    grid: TimeGrid,
}

/// Control and observation record on the grid of a spec.
pub struct SysidDataset {
    dataset: Dataset,
}

/// Result of [`sysid_fit`].
pub struct SysidReport {
    report: FitReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(SysidStatus, String);

impl From<SysidError> for Failure {
    fn from(err: SysidError) -> Self {
        let status = match &err {
            SysidError::DimensionMismatch { .. } => SysidStatus::DimensionMismatch,
            SysidError::NotSpd { .. } | SysidError::NotSymmetric { .. } => {
                SysidStatus::NotPositiveDefinite
            }
            SysidError::SingularSystem { .. } => SysidStatus::Singular,
            SysidError::DescentViolation(_) => SysidStatus::DescentViolation,
            _ => SysidStatus::InvalidArgument,
        };
        Failure(status, err.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(SysidStatus::NullPointer, format!("{name} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SysidStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            SysidStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SysidStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SysidStatus::Parse, format!("{name} is not valid UTF-8")))
}

fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn rows(data: &[f64], count: usize, width: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| DVector::from_column_slice(&data[k * width..(k + 1) * width]))
        .collect()
}

fn copy_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let need = m.nrows() * m.ncols();
    if len != need {
        return Err(SysidError::shape("out", need, len).into());
    }
    let dst = unsafe { std::slice::from_raw_parts_mut(out, len) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sysid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse and validate a JSON spec document (`N, d, m, p, C, G, Q, R, Pi0,
/// x0, A0, B0, alpha, beta, T, M`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sysid_spec_from_json(
    json: *const c_char,
    out: *mut *mut SysidSpec,
) -> SysidStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let doc: SpecDocument = serde_json::from_str(text)
            .map_err(|e| Failure(SysidStatus::Parse, format!("spec: {e}")))?;
        let (spec, grid) = doc.resolve()?;
        out_ptr(out, SysidSpec { spec, grid })
    })
}

/// # Safety
/// `spec` must come from [`sysid_spec_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sysid_spec_free(spec: *mut SysidSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Dimensions `(N, d, m, p)` and interval count `M` of a spec.
/// Any output pointer may be null.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sysid_spec_dims(
    spec: *const SysidSpec,
    n: *mut usize,
    d: *mut usize,
    m: *mut usize,
    p: *mut usize,
    intervals: *mut usize,
) -> SysidStatus {
    guard(|| {
        let s = deref(spec, "spec")?;
        let dims = s.spec.dims;
        for (dst, value) in [
            (n, dims.n),
            (d, dims.d),
            (m, dims.m),
            (p, dims.p),
            (intervals, s.grid.intervals()),
        ] {
            if !dst.is_null() {
                *dst = value;
            }
        }
        Ok(())
    })
}

/// Build a dataset from row-major `v` (`M x d`) and `y` (`M x p`).
///
/// # Safety
/// `v` and `y` must point to `v_len` and `y_len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sysid_dataset_new(
    spec: *const SysidSpec,
    v: *const f64,
    v_len: usize,
    y: *const f64,
    y_len: usize,
    out: *mut *mut SysidDataset,
) -> SysidStatus {
    guard(|| {
        let s = deref(spec, "spec")?;
        let dims = s.spec.dims;
        let intervals = s.grid.intervals();
        if v_len != intervals * dims.d {
            return Err(SysidError::shape("v", intervals * dims.d, v_len).into());
        }
        if y_len != intervals * dims.p {
            return Err(SysidError::shape("y", intervals * dims.p, y_len).into());
        }
        let v = rows(slice(v, v_len, "v")?, intervals, dims.d);
        let y = rows(slice(y, y_len, "y")?, intervals, dims.p);
        let dataset = Dataset::new(s.grid, v, y)?;
        dataset.check(dims)?;
        out_ptr(out, SysidDataset { dataset })
    })
}

/// Simulate a record under `(A_true, B_true)` (row-major) with a generated
/// control. `control_kind` is `zero`, `step`, `sine` or `multisine`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `control_kind` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sysid_simulate(
    spec: *const SysidSpec,
    a_true: *const f64,
    a_len: usize,
    b_true: *const f64,
    b_len: usize,
    control_kind: *const c_char,
    params: *const f64,
    params_len: usize,
    seed: u64,
    noise_scale: f64,
    out: *mut *mut SysidDataset,
) -> SysidStatus {
    guard(|| {
        let s = deref(spec, "spec")?;
        let dims = s.spec.dims;
        if a_len != dims.n * dims.n {
            return Err(SysidError::shape("A_true", dims.n * dims.n, a_len).into());
        }
        if b_len != dims.n * dims.d {
            return Err(SysidError::shape("B_true", dims.n * dims.d, b_len).into());
        }
        let a = DMatrix::from_row_slice(dims.n, dims.n, slice(a_true, a_len, "A_true")?);
        let b = DMatrix::from_row_slice(dims.n, dims.d, slice(b_true, b_len, "B_true")?);
        let kind: ControlKind = c_str(control_kind, "control_kind")?.parse()?;
        let params = slice(params, params_len, "params")?;
        let v = make_control(kind, params, &s.grid, dims.d)?;
        let sim = simulate_sde(&a, &b, &s.spec, &s.grid, &v, seed, noise_scale)?;
        out_ptr(
            out,
            SysidDataset {
                dataset: sim.dataset,
            },
        )
    })
}

/// # Safety
/// `dataset` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sysid_dataset_free(dataset: *mut SysidDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Copy the observations (`M x p`, row-major) into `out`.
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sysid_dataset_copy_y(
    dataset: *const SysidDataset,
    out: *mut f64,
    len: usize,
) -> SysidStatus {
    guard(|| {
        let ds = &deref(dataset, "dataset")?.dataset;
        let width = ds.y.first().map_or(0, |r| r.len());
        let need = ds.y.len() * width;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != need {
            return Err(SysidError::shape("out", need, len).into());
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (k, row) in ds.y.iter().enumerate() {
            dst[k * width..(k + 1) * width].copy_from_slice(row.as_slice());
        }
        Ok(())
    })
}

/// Run the alternating fit. Non-positive `max_iters` or negative tolerances
/// fall back to the library defaults.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sysid_fit(
    spec: *const SysidSpec,
    dataset: *const SysidDataset,
    max_iters: i64,
    tol_step: f64,
    tol_stat: f64,
    out: *mut *mut SysidReport,
) -> SysidStatus {
    guard(|| {
        let s = deref(spec, "spec")?;
        let ds = deref(dataset, "dataset")?;
        if ds.dataset.grid != s.grid {
            return Err(Failure(
                SysidStatus::DimensionMismatch,
                "dataset grid differs from spec grid".into(),
            ));
        }
        let mut options = FitOptions::default();
        if max_iters > 0 {
            options.max_iters = max_iters as usize;
        }
        if tol_step >= 0.0 {
            options.tol_step = tol_step;
        }
        if tol_stat >= 0.0 {
            options.tol_stat = tol_stat;
        }
        let report = fit(&ds.dataset, &s.spec, &options)?;
        out_ptr(out, SysidReport { report })
    })
}

/// # Safety
/// `report` must come from [`sysid_fit`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sysid_report_free(report: *mut SysidReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Sweep count, convergence flag and final objective value.
/// Any output pointer may be null.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sysid_report_summary(
    report: *const SysidReport,
    iterations: *mut usize,
    converged: *mut bool,
    final_j: *mut f64,
) -> SysidStatus {
    guard(|| {
        let r = &deref(report, "report")?.report;
        if !iterations.is_null() {
            *iterations = r.iterations;
        }
        if !converged.is_null() {
            *converged = r.converged;
        }
        if !final_j.is_null() {
            *final_j = r.j_history.last().copied().unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Copy the estimated `A` (`N x N`, row-major).
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sysid_report_copy_a(
    report: *const SysidReport,
    out: *mut f64,
    len: usize,
) -> SysidStatus {
    guard(|| copy_matrix(&deref(report, "report")?.report.final_estimate.a, out, len))
}

/// Copy the estimated `B` (`N x d`, row-major).
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sysid_report_copy_b(
    report: *const SysidReport,
    out: *mut f64,
    len: usize,
) -> SysidStatus {
    guard(|| copy_matrix(&deref(report, "report")?.report.final_estimate.b, out, len))
}

/// Serialize the full report as JSON. Release the string with
/// [`sysid_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sysid_report_to_json(
    report: *const SysidReport,
    out: *mut *mut c_char,
) -> SysidStatus {
    guard(|| {
        let r = &deref(report, "report")?.report;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CString::new(report_json(r))
            .map_err(|_| Failure(SysidStatus::Parse, "report contains NUL".into()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sysid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
