//! C ABI over fitted sparsefun models.
//!
//! Models are opaque handles obtained from [`sf_model_load`] or
//! [`sf_fit_csv`] and released with [`sf_model_free`]. Every fallible call
//! returns an [`SfStatus`]; on failure [`sf_last_error`] describes the cause.
//! Output buffers are owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sparsefun::io::{load_model, save_model, ModelFile, Provenance};
use sparsefun::model::{fit_model, FitConfig, ModelBundle};
use sparsefun::{Curve, Domain, Error, KernelSpec, LongitudinalSample, Surface};

/// Result codes of every fallible call.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    SF_OK = 0,
    SF_ERR_NULL = 1,
    SF_ERR_ARGUMENT = 2,
    SF_ERR_INPUT = 3,
    SF_ERR_NUMERICAL = 4,
    SF_ERR_IO = 5,
    SF_ERR_PANIC = 6,
}

/// Which process a univariate component belongs to.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfProcess {
    SF_PROCESS_X = 0,
    SF_PROCESS_Y = 1,
}

/// Opaque fitted model.
pub struct SfModel {
    inner: ModelBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::Argument(_) => SfStatus::SF_ERR_ARGUMENT,
        Error::Input(_) | Error::Json(_) => SfStatus::SF_ERR_INPUT,
        Error::Numerical(_) | Error::Truncation { .. } => SfStatus::SF_ERR_NUMERICAL,
        Error::Io(_) => SfStatus::SF_ERR_IO,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SfStatus>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::SF_OK,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SfStatus::SF_ERR_PANIC
        }
    }
}

fn fail(e: Error) -> SfStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> SfStatus {
    set_error(&format!("null pointer: {what}"));
    SfStatus::SF_ERR_NULL
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, SfStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(Error::Argument(format!("{what} is not valid UTF-8"))))
}

unsafe fn model_arg<'a>(m: *const SfModel) -> Result<&'a ModelBundle, SfStatus> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], SfStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], SfStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null("output buffer"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_in(d: Domain, v: f64, what: &str) -> Result<(), SfStatus> {
    if d.contains(v) {
        Ok(())
    } else {
        Err(fail(Error::Argument(format!("{what} = {v} outside [{}, {}]", d.lo, d.hi))))
    }
}

/// Message of the last failed call on this thread. Valid until the next call
/// on the same thread; never null.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by the command-line tool or [`sf_fit_csv`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_model_load(path: *const c_char, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let file = load_model(path).map_err(fail)?;
        *out = Box::into_raw(Box::new(SfModel { inner: file.model }));
        Ok(())
    })
}

/// Fits a model to a long-format CSV with default settings and saves it to
/// `model_path`. `out` may be null when only the file is wanted.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sf_fit_csv(
    data_path: *const c_char,
    model_path: *const c_char,
    seed: u64,
    out: *mut *mut SfModel,
) -> SfStatus {
    guard(|| {
        let data = sparsefun::io::read_dataset(path_arg(data_path, "data_path")?).map_err(fail)?;
        let model_path = path_arg(model_path, "model_path")?;
        let cfg = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let (model, _) = fit_model(&data.x, &data.y, &cfg).map_err(fail)?;
        let prov = Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            folds: cfg.folds,
            lambda_grid: cfg.lambda_grid.clone(),
            command: vec!["sf_fit_csv".to_string()],
        };
        save_model(model_path, &ModelFile::new(model.clone(), prov)).map_err(fail)?;
        if !out.is_null() {
            *out = Box::into_raw(Box::new(SfModel { inner: model }));
        }
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Domain bounds of one process.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_model_domain(
    model: *const SfModel,
    process: SfProcess,
    lo: *mut f64,
    hi: *mut f64,
) -> SfStatus {
    guard(|| {
        let m = model_arg(model)?;
        if lo.is_null() || hi.is_null() {
            return Err(null("lo/hi"));
        }
        let d = match process {
            SfProcess::SF_PROCESS_X => m.spec_x.domain,
            SfProcess::SF_PROCESS_Y => m.spec_y.domain,
        };
        *lo = d.lo;
        *hi = d.hi;
        Ok(())
    })
}

/// Truncation levels `(J1, J2)` of the coefficient surface.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_model_truncation(model: *const SfModel, j1: *mut usize, j2: *mut usize) -> SfStatus {
    guard(|| {
        let m = model_arg(model)?;
        if j1.is_null() || j2.is_null() {
            return Err(null("j1/j2"));
        }
        *j1 = m.beta.j1();
        *j2 = m.beta.j2();
        Ok(())
    })
}

unsafe fn eval_surface(
    model: *const SfModel,
    pick: impl Fn(&ModelBundle, &[f64], &[f64]) -> Vec<f64>,
    s: *const f64,
    ns: usize,
    t: *const f64,
    nt: usize,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let m = model_arg(model)?;
        let s = slice_arg(s, ns, "s")?;
        let t = slice_arg(t, nt, "t")?;
        for &v in s {
            check_in(m.spec_x.domain, v, "s")?;
        }
        for &v in t {
            check_in(m.spec_y.domain, v, "t")?;
        }
        let out = out_slice(out, ns * nt)?;
        out.copy_from_slice(&pick(m, s, t));
        Ok(())
    })
}

/// `beta(s_i, t_j)` into `out[i * nt + j]`.
///
/// # Safety
/// `s`, `t` hold `ns`, `nt` values; `out` holds `ns * nt`.
#[no_mangle]
pub unsafe extern "C" fn sf_model_eval_beta(
    model: *const SfModel,
    s: *const f64,
    ns: usize,
    t: *const f64,
    nt: usize,
    out: *mut f64,
) -> SfStatus {
    eval_surface(model, |m, s, t| m.beta.grid_row_major(s, t), s, ns, t, nt, out)
}

/// Cross-covariance `C(s_i, t_j)` into `out[i * nt + j]`.
///
/// # Safety
/// As for [`sf_model_eval_beta`].
#[no_mangle]
pub unsafe extern "C" fn sf_model_eval_crosscov(
    model: *const SfModel,
    s: *const f64,
    ns: usize,
    t: *const f64,
    nt: usize,
    out: *mut f64,
) -> SfStatus {
    eval_surface(model, |m, s, t| m.crosscov.grid_row_major(s, t), s, ns, t, nt, out)
}

/// Mean function of one process at `n` points.
///
/// # Safety
/// `t` and `out` hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_eval_mean(
    model: *const SfModel,
    process: SfProcess,
    t: *const f64,
    n: usize,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let m = model_arg(model)?;
        let f = match process {
            SfProcess::SF_PROCESS_X => &m.mu_x,
            SfProcess::SF_PROCESS_Y => &m.mu_y,
        };
        let t = slice_arg(t, n, "t")?;
        for &v in t {
            check_in(f.spec.domain, v, "t")?;
        }
        out_slice(out, n)?.copy_from_slice(&f.values(t));
        Ok(())
    })
}

/// Predicted response on `grid` from `m` predictor observations.
///
/// # Safety
/// `times`, `values` hold `m` values; `grid` and `out` hold `g`.
#[no_mangle]
pub unsafe extern "C" fn sf_model_predict(
    model: *const SfModel,
    times: *const f64,
    values: *const f64,
    m: usize,
    grid: *const f64,
    g: usize,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let model = model_arg(model)?;
        let sample = LongitudinalSample::new(
            "ffi",
            slice_arg(times, m, "times")?.to_vec(),
            slice_arg(values, m, "values")?.to_vec(),
        )
        .map_err(fail)?;
        let grid = slice_arg(grid, g, "grid")?;
        let pred = model.predict(&sample, grid).map_err(fail)?;
        out_slice(out, g)?.copy_from_slice(&pred);
        Ok(())
    })
}

/// Sobolev kernel `K(s, t)` of the given order on `[lo, hi]`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_kernel_eval(order: u32, lo: f64, hi: f64, s: f64, t: f64, out: *mut f64) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = Domain::new(lo, hi).map_err(fail)?;
        let k = KernelSpec::new(order, d).map_err(fail)?;
        *out = k.eval(s, t).map_err(fail)?;
        Ok(())
    })
}
