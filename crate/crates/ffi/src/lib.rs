//! C interface to `uset-core`.
//!
//! Every function returns a [`UsetStatus`]. On failure the message of the
//! most recent error on the calling thread is available through
//! [`uset_last_error`]. Handles are opaque and must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use uset_core::data::Dataset;
use uset_core::experiment::{fit, ExperimentConfig, Hyper, SplitMode};
use uset_core::{DecisionModel, Error, Loss, Samples};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Infeasible = 4,
    NonConvergence = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque loss handle.
pub struct UsetLoss(Loss);

/// Opaque trained-model handle.
pub struct UsetModel(DecisionModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> UsetStatus {
    match err {
        Error::DimensionMismatch { .. } => UsetStatus::DimensionMismatch,
        Error::Infeasible(_) => UsetStatus::Infeasible,
        Error::NonConvergence { .. } | Error::Divergence => UsetStatus::NonConvergence,
        Error::SingularMatrix(_) | Error::NotPsd { .. } | Error::BoundaryAttained { .. } => UsetStatus::Numerical,
        Error::Io { .. } | Error::Json(_) => UsetStatus::Io,
        _ => UsetStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> UsetStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UsetStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            UsetStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            UsetStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::param(format!("{what} is not valid UTF-8"))))
}

unsafe fn matrix(x: *const f64, rows: usize, cols: usize) -> Result<Samples, Failure> {
    if x.is_null() {
        return Err(Failure::Null("x"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::param("rows * cols overflows"))?;
    Ok(Samples::new(cols, std::slice::from_raw_parts(x, len).to_vec())?)
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn uset_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a loss such as `"tq"`, `"exp"`, `"hinge:nu=0.5"` or
/// `"esterr:h=1,w=1"`.
///
/// # Safety
/// `spec` must be a nul-terminated string and `loss_out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn uset_loss_new(spec: *const c_char, loss_out: *mut *mut UsetLoss) -> UsetStatus {
    guard(|| {
        let slot = out(loss_out, "loss_out")?;
        let loss: Loss = string(spec, "spec")?.parse()?;
        *slot = Box::into_raw(Box::new(UsetLoss(loss)));
        Ok(())
    })
}

/// # Safety
/// `loss` must come from [`uset_loss_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uset_loss_free(loss: *mut UsetLoss) {
    if !loss.is_null() {
        drop(Box::from_raw(loss));
    }
}

/// # Safety
/// `loss` must be a live handle and `value_out` writable.
#[no_mangle]
pub unsafe extern "C" fn uset_loss_eval(loss: *const UsetLoss, z: f64, value_out: *mut f64) -> UsetStatus {
    guard(|| {
        let l = deref(loss, "loss")?;
        *out(value_out, "value_out")? = l.0.eval(z);
        Ok(())
    })
}

/// Convex conjugate at `alpha`; `+inf` outside its domain.
///
/// # Safety
/// `loss` must be a live handle and `value_out` writable.
#[no_mangle]
pub unsafe extern "C" fn uset_loss_conjugate(loss: *const UsetLoss, alpha: f64, value_out: *mut f64) -> UsetStatus {
    guard(|| {
        let l = deref(loss, "loss")?;
        *out(value_out, "value_out")? = l.0.conjugate(alpha).to_f64();
        Ok(())
    })
}

/// Trains on `rows` samples of dimension `cols`, stored row-major in `x`,
/// with labels `y` in {-1, +1}. A `gamma` of zero selects the linear kernel,
/// a positive one the Gaussian kernel `exp(-gamma |a - b|^2)`. The whole set
/// is used both for the decision function and for the bias.
///
/// # Safety
/// `x` must hold `rows * cols` values, `y` `rows` values, `loss` must be a
/// live handle and `model_out` writable.
#[no_mangle]
pub unsafe extern "C" fn uset_train(
    x: *const f64,
    y: *const i32,
    rows: usize,
    cols: usize,
    loss: *const UsetLoss,
    lambda: f64,
    gamma: f64,
    model_out: *mut *mut UsetModel,
) -> UsetStatus {
    guard(|| {
        let slot = out(model_out, "model_out")?;
        let l = deref(loss, "loss")?;
        let samples = matrix(x, rows, cols)?;
        if y.is_null() {
            return Err(Failure::Null("y"));
        }
        let labels = std::slice::from_raw_parts(y, rows)
            .iter()
            .map(|&v| match v {
                1 => Ok(1i8),
                -1 => Ok(-1i8),
                other => Err(Error::param(format!("label {other} is not -1 or +1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda must be positive and finite").into());
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma must be non-negative and finite").into());
        }
        let data = Dataset::new(samples, labels)?;
        let config = ExperimentConfig {
            loss: l.0,
            split: SplitMode::None,
            ..ExperimentConfig::default()
        };
        let fitted = fit(&config, &data, Hyper { lambda, gamma }, 0)?;
        *slot = Box::into_raw(Box::new(UsetModel(fitted.model)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `model_out` writable.
#[no_mangle]
pub unsafe extern "C" fn uset_model_load(path: *const c_char, model_out: *mut *mut UsetModel) -> UsetStatus {
    guard(|| {
        let slot = out(model_out, "model_out")?;
        let m = DecisionModel::load(Path::new(string(path, "path")?))?;
        *slot = Box::into_raw(Box::new(UsetModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn uset_model_save(model: *const UsetModel, path: *const c_char) -> UsetStatus {
    guard(|| {
        let m = deref(model, "model")?;
        m.0.save(Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Input dimension expected by the model.
///
/// # Safety
/// `model` must be a live handle and `dim_out` writable.
#[no_mangle]
pub unsafe extern "C" fn uset_model_dim(model: *const UsetModel, dim_out: *mut usize) -> UsetStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out(dim_out, "dim_out")? = m.0.f.dim();
        Ok(())
    })
}

/// Writes `f(x) + b` for each of the `rows` samples into `values_out`.
///
/// # Safety
/// `x` must hold `rows * cols` values and `values_out` room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn uset_model_decision(
    model: *const UsetModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    values_out: *mut f64,
) -> UsetStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let samples = matrix(x, rows, cols)?;
        if values_out.is_null() {
            return Err(Failure::Null("values_out"));
        }
        let values = m.0.decision_values(&samples)?;
        std::slice::from_raw_parts_mut(values_out, rows).copy_from_slice(&values);
        Ok(())
    })
}

/// Writes the predicted label (-1 or +1) of each sample into `labels_out`.
///
/// # Safety
/// `x` must hold `rows * cols` values and `labels_out` room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn uset_model_predict(
    model: *const UsetModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    labels_out: *mut i32,
) -> UsetStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let samples = matrix(x, rows, cols)?;
        if labels_out.is_null() {
            return Err(Failure::Null("labels_out"));
        }
        let labels = m.0.predict(&samples)?;
        for (o, l) in std::slice::from_raw_parts_mut(labels_out, rows).iter_mut().zip(labels) {
            *o = l as i32;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uset_model_free(model: *mut UsetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
