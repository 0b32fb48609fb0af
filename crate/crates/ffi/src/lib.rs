//! C ABI over the `octic` crate.
//!
//! Every fallible function returns an [`OcticStatus`]; on failure the
//! message is available from [`octic_last_error`] until the next call on
//! the same thread. Models are opaque handles created by
//! [`octic_model_new`] or [`octic_model_load`] and released with
//! [`octic_model_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use octic::analysis::{count_model_flops, intensity_crossover, preset, FourierCost};
use octic::check::{run_checks, CheckOptions, Scope};
use octic::config::RunConfig;
use octic::group::{isotypical_to_regular, regular_to_isotypical, ORDER};
use octic::model::{build_model, Model};
use octic::steerable::{Image, IMAGE_CHANNELS};
use octic::OcticError;

/// Result of every fallible call; `OCTIC_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcticStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Format = 5,
    Constraint = 6,
    Internal = 7,
}

/// Which suites [`octic_check`] runs.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcticScope {
    Group = 0,
    Layers = 1,
    Model = 2,
    Invariants = 3,
    All = 4,
}

/// An owned model. Opaque to C.
pub struct OcticModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &OcticError) -> OcticStatus {
    match e {
        OcticError::DimensionMismatch(_) | OcticError::NotDivisible { .. } => OcticStatus::DimensionMismatch,
        OcticError::InvalidConfig(_) | OcticError::Diverged { .. } => OcticStatus::InvalidArgument,
        OcticError::Constraint(_) => OcticStatus::Constraint,
        OcticError::Format(_) => OcticStatus::Format,
        OcticError::Io(_) | OcticError::File { .. } => OcticStatus::Io,
    }
}

struct Fail(OcticStatus, String);

impl From<OcticError> for Fail {
    fn from(e: OcticError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(OcticStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OcticStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcticStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            OcticStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(OcticStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_arg_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn octic_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn octic_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn fourier(input: *const f64, output: *mut f64, count: usize, forward: bool) -> OcticStatus {
    guard(|| {
        let n = count
            .checked_mul(ORDER)
            .ok_or_else(|| Fail(OcticStatus::InvalidArgument, "count overflows".into()))?;
        let x = unsafe { slice_arg(input, n, "input")? }.to_vec();
        let y = if forward {
            regular_to_isotypical(&x)
        } else {
            isotypical_to_regular(&x)
        };
        unsafe { slice_arg_mut(output, n, "output")? }.copy_from_slice(&y);
        Ok(())
    })
}

/// Fourier transform of `count` contiguous 8-vectors from regular to
/// isotypical coordinates. `input` and `output` hold `8·count` doubles and
/// may alias.
///
/// # Safety
/// Both pointers must be valid for `8·count` doubles.
#[no_mangle]
pub unsafe extern "C" fn octic_fourier_forward(input: *const f64, output: *mut f64, count: usize) -> OcticStatus {
    fourier(input, output, count, true)
}

/// Inverse of [`octic_fourier_forward`].
///
/// # Safety
/// Both pointers must be valid for `8·count` doubles.
#[no_mangle]
pub unsafe extern "C" fn octic_fourier_inverse(input: *const f64, output: *mut f64, count: usize) -> OcticStatus {
    fourier(input, output, count, false)
}

/// Build a freshly initialised model from `key = value` config text (an
/// empty string gives the defaults).
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn octic_model_new(config: *const c_char, out: *mut *mut OcticModel) -> OcticStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::parse(str_arg(config, "config")?)?;
        let inner = build_model(&cfg.model)?;
        *out = Box::into_raw(Box::new(OcticModel { inner }));
        Ok(())
    })
}

/// Load a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn octic_model_load(path: *const c_char, out: *mut *mut OcticModel) -> OcticStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Model::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(OcticModel { inner }));
        Ok(())
    })
}

/// Write a model checkpoint.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn octic_model_save(model: *mut OcticModel, path: *const c_char) -> OcticStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        m.inner.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn octic_model_free(model: *mut OcticModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Image side length `M` and class count of a model.
///
/// # Safety
/// `model` must come from this library; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn octic_model_shape(
    model: *const OcticModel,
    image_size: *mut usize,
    classes: *mut usize,
) -> OcticStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if let Some(s) = image_size.as_mut() {
            *s = m.inner.cfg.image;
        }
        if let Some(c) = classes.as_mut() {
            *c = m.inner.cfg.classes;
        }
        Ok(())
    })
}

/// Logits of one `3×M×M` image (channel-major, then row-major).
///
/// # Safety
/// `pixels` must hold `pixels_len` doubles and `logits` `logits_len`.
#[no_mangle]
pub unsafe extern "C" fn octic_model_forward(
    model: *const OcticModel,
    pixels: *const f64,
    pixels_len: usize,
    logits: *mut f64,
    logits_len: usize,
) -> OcticStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let side = m.cfg.image;
        if pixels_len != IMAGE_CHANNELS * side * side || logits_len != m.cfg.classes {
            return Err(Fail(
                OcticStatus::DimensionMismatch,
                format!(
                    "expected {} pixels and {} logits, got {pixels_len} and {logits_len}",
                    IMAGE_CHANNELS * side * side,
                    m.cfg.classes
                ),
            ));
        }
        let img = Image::new(side, slice_arg(pixels, pixels_len, "pixels")?.to_vec())?;
        let z = m.forward(&img)?;
        slice_arg_mut(logits, logits_len, "logits")?.copy_from_slice(z.data());
        Ok(())
    })
}

/// Whole-model matmul MAC ratio (standard over octic) of a named preset.
/// `dense_fourier` charges the Fourier transforms as dense 8×8 products.
///
/// # Safety
/// `shape` must be NUL-terminated and `ratio` valid.
#[no_mangle]
pub unsafe extern "C" fn octic_flops_ratio(shape: *const c_char, dense_fourier: bool, ratio: *mut f64) -> OcticStatus {
    guard(|| {
        let out = ratio.as_mut().ok_or_else(|| null("ratio"))?;
        let fourier = if dense_fourier {
            FourierCost::Dense
        } else {
            FourierCost::Butterfly
        };
        *out = count_model_flops(&preset(str_arg(shape, "shape")?)?, fourier)?.matmul_ratio();
        Ok(())
    })
}

/// Width above which the octic layer's arithmetic intensity exceeds the
/// dense layer's, for `b` tokens, `p` bytes per element and output width
/// `f_ratio·C`, searched in `[lo, hi]`.
///
/// # Safety
/// `crossover` must be valid.
#[no_mangle]
pub unsafe extern "C" fn octic_intensity_crossover(
    b: f64,
    p: f64,
    f_ratio: f64,
    lo: f64,
    hi: f64,
    crossover: *mut f64,
) -> OcticStatus {
    guard(|| {
        let out = crossover.as_mut().ok_or_else(|| null("crossover"))?;
        *out = intensity_crossover(b, p, f_ratio, lo, hi)?.c;
        Ok(())
    })
}

/// Run the property suites; `failed` receives the number of failing rows.
///
/// # Safety
/// `failed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn octic_check(scope: OcticScope, inputs: usize, seed: u64, failed: *mut usize) -> OcticStatus {
    guard(|| {
        let out = failed.as_mut().ok_or_else(|| null("failed"))?;
        let scope = match scope {
            OcticScope::Group => Scope::Group,
            OcticScope::Layers => Scope::Layers,
            OcticScope::Model => Scope::Model,
            OcticScope::Invariants => Scope::Invariants,
            OcticScope::All => Scope::All,
        };
        let rows = run_checks(
            scope,
            &CheckOptions {
                inputs,
                seed,
                ..CheckOptions::default()
            },
        )?;
        *out = rows.iter().filter(|r| !r.passed()).count();
        Ok(())
    })
}
