//! C ABI over the `mfi-pso` core library.
//!
//! Conventions:
//! - Every fallible function returns an [`MfiStatus`]; on failure a message is
//!   available from [`mfi_last_error`] on the same thread.
//! - Objects are opaque handles created by `*_load` / `*_attack` functions and
//!   released with the matching `*_free` function. Passing NULL to a free
//!   function is a no-op.
//! - Images are flat `double` arrays in row-major, channel-minor order with
//!   values in `[0, 1]`.
//! - Strings returned to the caller are NUL-terminated UTF-8 and must be
//!   released with [`mfi_string_free`].
//! - Class arguments use `-1` for "none".
//!
//! Handles are not synchronized: a model may be shared by threads for
//! read-only calls, a result must not be used concurrently with its free.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mfi_pso::adversary::{generate_adversarial, AdversarialResult, AttackSpec};
use mfi_pso::classifier::{self, ClassifierModel};
use mfi_pso::mfi::{image_mfi, pixel_mfi_map};
use mfi_pso::{Error, Image};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfiStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// An argument violated a precondition (shape, range, option mix).
    InvalidInput = 2,
    /// A file or JSON document could not be parsed.
    Parse = 3,
    /// A file could not be read or written.
    Io = 4,
    /// A numerical routine failed.
    Numerical = 5,
    /// The attack finished without meeting its success criteria.
    Infeasible = 6,
    /// An output buffer is too small; the required length is reported.
    BufferTooSmall = 7,
    /// An internal panic was caught at the boundary.
    Panic = 8,
}

/// Trained classifier.
pub struct MfiModel {
    inner: ClassifierModel,
}

/// Outcome of one attack.
pub struct MfiResult {
    inner: AdversarialResult,
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

fn status_of(err: &Error) -> MfiStatus {
    match err {
        Error::Io { .. } => MfiStatus::Io,
        Error::Json(e) if e.is_io() => MfiStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::Checkpoint(_) | Error::Decode { .. } => {
            MfiStatus::Parse
        }
        Error::Input(_) => MfiStatus::InvalidInput,
        Error::Infeasible(_) => MfiStatus::Infeasible,
        Error::Numerical(_) | Error::TrainingDiverged { .. } | Error::NonFiniteObjective { .. } => {
            MfiStatus::Numerical
        }
    }
}

struct Failure(MfiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: MfiStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `body`, recording any error or panic for [`mfi_last_error`].
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MfiStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MfiStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_error(format!("internal panic: {msg}"));
            MfiStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(MfiStatus::NullArgument, format!("{name} is NULL")))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(MfiStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MfiStatus::InvalidInput, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(MfiStatus::NullArgument, format!("{name} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(values: &[f64], out: *mut f64, out_len: usize, required: *mut usize) -> Result<(), Failure> {
    if let Some(r) = required.as_mut() {
        *r = values.len();
    }
    if out_len < values.len() {
        return Err(fail(
            MfiStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", values.len()),
        ));
    }
    if out.is_null() {
        return Err(fail(MfiStatus::NullArgument, "output buffer is NULL"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn class_arg(c: i64, name: &str) -> Result<Option<usize>, Failure> {
    match c {
        -1 => Ok(None),
        c if c >= 0 => Ok(Some(c as usize)),
        _ => Err(fail(MfiStatus::InvalidInput, format!("{name} must be -1 or a class index"))),
    }
}

fn image_arg(
    pixels: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    label: i64,
) -> Result<Image, Failure> {
    let mut image = Image::new(pixels.to_vec(), width, height, channels)?;
    image.label = class_arg(label, "label")?;
    Ok(image)
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(MfiStatus::Numerical, "string contains a NUL byte"))
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mfi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mfi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mfi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint written by `mfi-pso train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfi_model_load(path: *const c_char, out: *mut *mut MfiModel) -> MfiStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(MfiStatus::NullArgument, "out is NULL"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = classifier::load(&path)?;
        *out = Box::into_raw(Box::new(MfiModel { inner }));
        Ok(())
    })
}

/// Writes the model as a checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mfi_model_save(model: *const MfiModel, path: *const c_char) -> MfiStatus {
    guard(|| {
        let model = nonnull(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        classifier::save(&model.inner, &path)?;
        Ok(())
    })
}

/// Releases a model handle.
///
/// # Safety
/// `model` must be NULL or a handle from [`mfi_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mfi_model_free(model: *mut MfiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input coordinates, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfi_model_input_dim(model: *const MfiModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Number of classes, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfi_model_num_classes(model: *const MfiModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_classes())
}

/// Class probabilities of `pixels` into `probs_out` (`probs_len` >= classes).
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mfi_predict(
    model: *const MfiModel,
    pixels: *const f64,
    len: usize,
    probs_out: *mut f64,
    probs_len: usize,
) -> MfiStatus {
    guard(|| {
        let model = nonnull(model, "model")?;
        let pixels = slice_arg(pixels, len, "pixels")?;
        let probs = model.inner.predict_pixels(pixels)?;
        write_out(probs.as_slice(), probs_out, probs_len, ptr::null_mut())
    })
}

/// Image-level mFI of a labelled image into `out`.
///
/// # Safety
/// Pointers must be valid; `pixels` must hold `width * height * channels` values.
#[no_mangle]
pub unsafe extern "C" fn mfi_image_mfi(
    model: *const MfiModel,
    pixels: *const f64,
    width: usize,
    height: usize,
    channels: usize,
    label: i64,
    out: *mut f64,
) -> MfiStatus {
    guard(|| {
        let model = nonnull(model, "model")?;
        if out.is_null() {
            return Err(fail(MfiStatus::NullArgument, "out is NULL"));
        }
        let pixels = slice_arg(pixels, width * height * channels, "pixels")?;
        let image = image_arg(pixels, width, height, channels, label)?;
        *out = image_mfi(&model.inner, &image)?;
        Ok(())
    })
}

/// Per-pixel mFI map into `out`. `target` selects the class whose
/// probability is measured (-1: the true `label`). `required`, if non-NULL,
/// receives the map length even when the buffer is too small.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mfi_pixel_map(
    model: *const MfiModel,
    pixels: *const f64,
    width: usize,
    height: usize,
    channels: usize,
    label: i64,
    target: i64,
    out: *mut f64,
    out_len: usize,
    required: *mut usize,
) -> MfiStatus {
    guard(|| {
        let model = nonnull(model, "model")?;
        let pixels = slice_arg(pixels, width * height * channels, "pixels")?;
        let image = image_arg(pixels, width, height, channels, label)?;
        let map = pixel_mfi_map(&model.inner, &image, class_arg(target, "target")?)?;
        write_out(&map.values, out, out_len, required)
    })
}

/// Attacks one image. `spec_json` is a JSON object with any of the attack
/// options (`m`, `pixel_indices`, `p_err`, `y_target`, `epsilon`, `a`, `b`,
/// `swarm`, `mfi_pixel`, `mfi_pixel_quantile`, `delta`); NULL or `{}` uses
/// the defaults. A handle is returned whether or not the attack succeeded;
/// check [`mfi_result_success`].
///
/// # Safety
/// Pointers must be valid; `pixels` must hold `width * height * channels` values.
#[no_mangle]
pub unsafe extern "C" fn mfi_attack(
    model: *const MfiModel,
    pixels: *const f64,
    width: usize,
    height: usize,
    channels: usize,
    label: i64,
    spec_json: *const c_char,
    out: *mut *mut MfiResult,
) -> MfiStatus {
    guard(|| {
        let model = nonnull(model, "model")?;
        if out.is_null() {
            return Err(fail(MfiStatus::NullArgument, "out is NULL"));
        }
        let spec: AttackSpec = if spec_json.is_null() {
            AttackSpec::default()
        } else {
            serde_json::from_str(str_arg(spec_json, "spec_json")?).map_err(Error::from)?
        };
        let pixels = slice_arg(pixels, width * height * channels, "pixels")?;
        let image = image_arg(pixels, width, height, channels, label)?;
        let inner = generate_adversarial(&model.inner, &image, &spec)?;
        *out = Box::into_raw(Box::new(MfiResult { inner }));
        Ok(())
    })
}

/// Releases a result handle.
///
/// # Safety
/// `result` must be NULL or a handle from [`mfi_attack`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mfi_result_free(result: *mut MfiResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// 1 if the attack met its success criteria, 0 otherwise (or for NULL).
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfi_result_success(result: *const MfiResult) -> i32 {
    result.as_ref().map_or(0, |r| i32::from(r.inner.success))
}

/// Predicted class of the adversarial image, or -1 for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfi_result_label_after(result: *const MfiResult) -> i64 {
    result.as_ref().map_or(-1, |r| r.inner.label_after as i64)
}

/// Copies the adversarial image into `out`; see [`mfi_pixel_map`] for `required`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mfi_result_adversarial(
    result: *const MfiResult,
    out: *mut f64,
    out_len: usize,
    required: *mut usize,
) -> MfiStatus {
    guard(|| {
        let result = nonnull(result, "result")?;
        write_out(&result.inner.adversarial.pixels, out, out_len, required)
    })
}

/// Serializes the full result as JSON into `*out` (free with [`mfi_string_free`]).
///
/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfi_result_to_json(result: *const MfiResult, out: *mut *mut c_char) -> MfiStatus {
    guard(|| {
        let result = nonnull(result, "result")?;
        if out.is_null() {
            return Err(fail(MfiStatus::NullArgument, "out is NULL"));
        }
        let json = serde_json::to_string(&result.inner).map_err(Error::from)?;
        *out = into_c_string(json)?;
        Ok(())
    })
}
