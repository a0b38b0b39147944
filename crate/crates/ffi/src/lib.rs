//! C ABI over `aec-core`.
//!
//! Every fallible function returns an [`AecStatus`]; on failure a message
//! for the calling thread is available from [`aec_last_error`]. Models are
//! opaque handles created by a `*_load` function and released with the
//! matching `*_free`. Sample buffers are mono 32-bit floats.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use aec_core::baselines::{subband_nlms_erase, IrmPredictor, NlmsConfig};
use aec_core::eval::sdr_samples;
use aec_core::neural::NeuralAec;
use aec_core::signal::{Role, Waveform};
use aec_core::AecError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AecStatus {
    Ok = 0,
    /// Null pointer, zero length or non-UTF-8 path.
    InvalidArgument = 1,
    Config = 2,
    Io = 3,
    MissingArtifact = 4,
    Diverged = 5,
    ShapeMismatch = 6,
    NoSignal = 7,
    CorruptCheckpoint = 8,
    /// The output buffer is smaller than the result; the needed length has
    /// been written to `out_len`.
    BufferTooSmall = 9,
    Internal = 10,
}

impl From<&AecError> for AecStatus {
    fn from(e: &AecError) -> Self {
        match e {
            AecError::InvalidConfig(_) | AecError::Infeasible(_) | AecError::BadLag { .. } => AecStatus::Config,
            AecError::MissingArtifact { .. } => AecStatus::MissingArtifact,
            AecError::Diverged { .. } => AecStatus::Diverged,
            AecError::ShapeMismatch(_) | AecError::RateMismatch(..) | AecError::LatentMismatch(..) | AecError::ShortInput { .. } => {
                AecStatus::ShapeMismatch
            }
            AecError::NoSignal | AecError::Undefined(_) => AecStatus::NoSignal,
            AecError::CorruptCheckpoint(_) => AecStatus::CorruptCheckpoint,
            AecError::Io { .. } | AecError::Format { .. } | AecError::MissingStems(_) => AecStatus::Io,
        }
    }
}

/// A loaded neural echo canceller.
pub struct AecNeural(NeuralAec);

/// A loaded ratio-mask predictor.
pub struct AecMaskPredictor(IrmPredictor);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: AecStatus, msg: &str) -> AecStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), AecStatus>) -> AecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AecStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(AecStatus::Internal, "internal panic"),
    }
}

fn core_err(e: AecError) -> AecStatus {
    fail(AecStatus::from(&e), &e.to_string())
}

unsafe fn slice<'a>(ptr: *const f32, len: usize, what: &str) -> Result<&'a [f32], AecStatus> {
    if ptr.is_null() || len == 0 {
        return Err(fail(AecStatus::InvalidArgument, &format!("{what} is null or empty")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn wave(ptr: *const f32, len: usize, rate: u32, role: Role, what: &str) -> Result<Waveform, AecStatus> {
    let s = slice(ptr, len, what)?;
    Waveform::new(s.to_vec(), rate, role).map_err(core_err)
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, AecStatus> {
    if path.is_null() {
        return Err(fail(AecStatus::InvalidArgument, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(AecStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn write_out(result: &Waveform, out: *mut f32, capacity: usize, out_len: *mut usize) -> Result<(), AecStatus> {
    if out_len.is_null() {
        return Err(fail(AecStatus::InvalidArgument, "out_len is null"));
    }
    *out_len = result.len();
    if capacity < result.len() || out.is_null() {
        return Err(fail(
            AecStatus::BufferTooSmall,
            &format!("output needs {} samples, buffer holds {capacity}", result.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(result.samples().as_ptr(), out, result.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the last failed call on this thread, or an empty
/// string. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn aec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Subband adaptive-filter echo removal with default settings. `out` must
/// hold `probe_len` samples; the result has the probe's length.
///
/// # Safety
/// `probe`, `reference` and `out` must point to at least `probe_len`,
/// `reference_len` and `probe_len` floats.
#[no_mangle]
pub unsafe extern "C" fn aec_nlms_erase(
    probe: *const f32,
    probe_len: usize,
    reference: *const f32,
    reference_len: usize,
    sample_rate: u32,
    out: *mut f32,
) -> AecStatus {
    guard(|| {
        let p = wave(probe, probe_len, sample_rate, Role::Probe, "probe")?;
        let r = wave(reference, reference_len, sample_rate, Role::Reference, "reference")?;
        let erased = subband_nlms_erase(&p, &r, &NlmsConfig::default()).map_err(core_err)?;
        let mut n = 0usize;
        write_out(&erased, out, probe_len, &mut n)
    })
}

/// Loads a neural checkpoint into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aec_neural_load(path: *const c_char, out: *mut *mut AecNeural) -> AecStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(AecStatus::InvalidArgument, "out is null"));
        }
        let path = path_arg(path)?;
        if !path.is_file() {
            return Err(core_err(AecError::MissingArtifact {
                cell: "checkpoint".into(),
                what: format!("{} not found", path.display()),
            }));
        }
        let model = NeuralAec::load(&path).map_err(core_err)?;
        *out = Box::into_raw(Box::new(AecNeural(model)));
        Ok(())
    })
}

/// Runs the neural model. On success `*out_len` holds the number of samples
/// written; when the buffer is too small it holds the needed length.
///
/// # Safety
/// `model` must come from [`aec_neural_load`]; buffers must hold the stated
/// lengths; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aec_neural_erase(
    model: *const AecNeural,
    probe: *const f32,
    probe_len: usize,
    reference: *const f32,
    reference_len: usize,
    sample_rate: u32,
    out: *mut f32,
    out_capacity: usize,
    out_len: *mut usize,
) -> AecStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(AecStatus::InvalidArgument, "model is null"))?;
        let p = wave(probe, probe_len, sample_rate, Role::Probe, "probe")?;
        let r = wave(reference, reference_len, sample_rate, Role::Reference, "reference")?;
        let erased = m.0.erase(&p, &r).map_err(core_err)?;
        write_out(&erased, out, out_capacity, out_len)
    })
}

/// # Safety
/// `model` must come from [`aec_neural_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aec_neural_free(model: *mut AecNeural) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a mask-predictor checkpoint into `*out`.
///
/// # Safety
/// As [`aec_neural_load`].
#[no_mangle]
pub unsafe extern "C" fn aec_mask_load(path: *const c_char, out: *mut *mut AecMaskPredictor) -> AecStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(AecStatus::InvalidArgument, "out is null"));
        }
        let path = path_arg(path)?;
        if !path.is_file() {
            return Err(core_err(AecError::MissingArtifact {
                cell: "checkpoint".into(),
                what: format!("{} not found", path.display()),
            }));
        }
        let model = IrmPredictor::load(&path).map_err(core_err)?;
        *out = Box::into_raw(Box::new(AecMaskPredictor(model)));
        Ok(())
    })
}

/// Applies the predicted mask. Output conventions as [`aec_neural_erase`].
///
/// # Safety
/// As [`aec_neural_erase`].
#[no_mangle]
pub unsafe extern "C" fn aec_mask_erase(
    model: *const AecMaskPredictor,
    probe: *const f32,
    probe_len: usize,
    reference: *const f32,
    reference_len: usize,
    sample_rate: u32,
    out: *mut f32,
    out_capacity: usize,
    out_len: *mut usize,
) -> AecStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(AecStatus::InvalidArgument, "model is null"))?;
        let p = wave(probe, probe_len, sample_rate, Role::Probe, "probe")?;
        let r = wave(reference, reference_len, sample_rate, Role::Reference, "reference")?;
        let erased = m.0.erase(&p, &r).map_err(core_err)?;
        write_out(&erased, out, out_capacity, out_len)
    })
}

/// # Safety
/// `model` must come from [`aec_mask_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aec_mask_free(model: *mut AecMaskPredictor) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Gain-fitted signal-to-distortion ratio of `estimate` against
/// `reference`, in dB.
///
/// # Safety
/// Both buffers must hold `len` floats; `out_db` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aec_sdr(estimate: *const f32, reference: *const f32, len: usize, out_db: *mut f64) -> AecStatus {
    guard(|| {
        let e = slice(estimate, len, "estimate")?;
        let r = slice(reference, len, "reference")?;
        if out_db.is_null() {
            return Err(fail(AecStatus::InvalidArgument, "out_db is null"));
        }
        *out_db = sdr_samples(e, r).map_err(core_err)?;
        Ok(())
    })
}
