//! C ABI for `centerquant`.
//!
//! Tensors and transform plans cross the boundary as opaque handles created
//! and released by this library. Every fallible call returns a [`CqStatus`];
//! the message of the most recent failure on the calling thread is available
//! from [`cq_last_error_message`]. Tensors are row-major `double` arrays.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use centerquant::harness::io::{load_tensor, save_tensor};
use centerquant::quant::{fake_quant, QuantConfig};
use centerquant::{Error, Tensor2D, TransformPlan, TransformPreset};

/// Opaque row-major matrix of doubles.
pub struct CqTensor(Tensor2D);

/// Opaque transform plan: centering, scaling and rotation flags plus sigma.
pub struct CqPlan(TransformPlan);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Size = 3,
    Parameter = 4,
    NonFinite = 5,
    UndefinedSignal = 6,
    Config = 7,
    Io = 8,
    Format = 9,
    Contract = 10,
    InvalidString = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqPreset {
    None = 0,
    SmoothQuant = 1,
    QuaRot = 2,
    Sdcb = 3,
    DynCenter = 4,
    HadaNorm = 5,
}

impl From<CqPreset> for TransformPreset {
    fn from(p: CqPreset) -> Self {
        match p {
            CqPreset::None => TransformPreset::None,
            CqPreset::SmoothQuant => TransformPreset::SmoothQuant,
            CqPreset::QuaRot => TransformPreset::QuaRot,
            CqPreset::Sdcb => TransformPreset::Sdcb,
            CqPreset::DynCenter => TransformPreset::DynCenter,
            CqPreset::HadaNorm => TransformPreset::HadaNorm,
        }
    }
}

fn status_of(e: &Error) -> CqStatus {
    match e {
        Error::Dimension(_) => CqStatus::Dimension,
        Error::NotPowerOfTwo { .. } | Error::HadamardTooLarge(_) => CqStatus::Size,
        Error::Parameter(_) => CqStatus::Parameter,
        Error::NonFinite(_) => CqStatus::NonFinite,
        Error::UndefinedSignal => CqStatus::UndefinedSignal,
        Error::Config(_) => CqStatus::Config,
        Error::Io { .. } => CqStatus::Io,
        Error::Npy { .. } | Error::Csv { .. } | Error::UnsupportedFormat(_) => CqStatus::Format,
        Error::Contract(_) => CqStatus::Contract,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Fail(CqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CqStatus::NullPointer, format!("null pointer: {what}"))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CqStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside centerquant".into());
            CqStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn tensor<'a>(t: *const CqTensor, what: &str) -> Result<&'a Tensor2D, Fail> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| null(what))
}

unsafe fn plan<'a>(p: *const CqPlan) -> Result<&'a TransformPlan, Fail> {
    p.as_ref().map(|p| &p.0).ok_or_else(|| null("plan"))
}

fn out_ok<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    Ok(())
}

unsafe fn emit(out: *mut *mut CqTensor, t: Tensor2D) -> Result<(), Fail> {
    out_ok(out)?;
    *out = Box::into_raw(Box::new(CqTensor(t)));
    Ok(())
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(CqStatus::InvalidString, "path is not valid UTF-8".into()))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail(CqStatus::Dimension, format!("{what}: length {got}, expected {want}")));
    }
    Ok(())
}

/// Copies the message of the last failure on this thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length in
/// bytes excluding the terminator, or 0 when there is no error.
#[no_mangle]
pub unsafe extern "C" fn cq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn cq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` doubles from `data` into a new tensor.
#[no_mangle]
pub unsafe extern "C" fn cq_tensor_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut CqTensor) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(CqStatus::Dimension, "rows * cols overflows".into()))?;
        let data = slice(data, len, "data")?.to_vec();
        emit(out, Tensor2D::new(rows, cols, data)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cq_tensor_free(t: *mut CqTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Row count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cq_tensor_rows(t: *const CqTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.rows())
}

/// Column count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cq_tensor_cols(t: *const CqTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.cols())
}

/// Copies the tensor into `buf`, which must hold exactly `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn cq_tensor_read(t: *const CqTensor, buf: *mut f64, len: usize) -> CqStatus {
    guard(|| {
        let t = tensor(t, "tensor")?;
        check_len(len, t.data().len(), "buffer")?;
        slice_mut(buf, len, "buffer")?.copy_from_slice(t.data());
        Ok(())
    })
}

/// Loads a `.npy` or `.csv` file.
#[no_mangle]
pub unsafe extern "C" fn cq_tensor_load(p: *const c_char, out: *mut *mut CqTensor) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        emit(out, load_tensor(path(p)?)?)
    })
}

/// Saves as `.npy` (float64) or `.csv` depending on the extension.
#[no_mangle]
pub unsafe extern "C" fn cq_tensor_save(t: *const CqTensor, p: *const c_char) -> CqStatus {
    guard(|| Ok(save_tensor(tensor(t, "tensor")?, path(p)?)?))
}

/// Orthonormal Walsh-Hadamard transform of every row; `cols` must be a power of two.
#[no_mangle]
pub unsafe extern "C" fn cq_fwht_rows(x: *const CqTensor, out: *mut *mut CqTensor) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        emit(out, centerquant::fwht_rows(tensor(x, "x")?)?)
    })
}

/// Builds the plan for `preset` from per-channel activation and weight
/// absmax vectors of length `d`; sigma is computed only for scaling presets.
#[no_mangle]
pub unsafe extern "C" fn cq_plan_from_preset(
    preset: CqPreset,
    act_absmax: *const f64,
    weight_absmax: *const f64,
    d: usize,
    alpha: f64,
    epsilon: f64,
    out: *mut *mut CqPlan,
) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        let a = slice(act_absmax, d, "act_absmax")?;
        let w = slice(weight_absmax, d, "weight_absmax")?;
        let p = centerquant::transforms::preset_to_plan_with_epsilon(preset.into(), a, w, alpha, epsilon)?;
        *out = Box::into_raw(Box::new(CqPlan(p)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cq_plan_free(p: *mut CqPlan) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Channel count of the plan, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn cq_plan_dim(p: *const CqPlan) -> usize {
    p.as_ref().map_or(0, |p| p.0.dim())
}

/// Copies the plan's sigma (length `cq_plan_dim`) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn cq_plan_sigma(p: *const CqPlan, buf: *mut f64, len: usize) -> CqStatus {
    guard(|| {
        let p = plan(p)?;
        check_len(len, p.dim(), "buffer")?;
        slice_mut(buf, len, "buffer")?.copy_from_slice(p.sigma());
        Ok(())
    })
}

/// Transforms activations. The channel means used for centering are written
/// to `mu_out` (length `cols`, zeros when the plan does not center).
#[no_mangle]
pub unsafe extern "C" fn cq_forward_transform(
    x: *const CqTensor,
    p: *const CqPlan,
    out: *mut *mut CqTensor,
    mu_out: *mut f64,
    mu_len: usize,
) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        let x = tensor(x, "x")?;
        check_len(mu_len, x.cols(), "mu buffer")?;
        let mu_buf = slice_mut(mu_out, mu_len, "mu buffer")?;
        let (xt, mu) = centerquant::forward_transform(x, plan(p)?)?;
        mu_buf.copy_from_slice(&mu);
        emit(out, xt)
    })
}

/// Folds the inverse transform into `d × n` weights.
#[no_mangle]
pub unsafe extern "C" fn cq_fuse_weights(w: *const CqTensor, p: *const CqPlan, out: *mut *mut CqTensor) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        emit(out, centerquant::fuse_weights(tensor(w, "w")?, plan(p)?)?)
    })
}

/// Bias after folding the centering term through the weights actually used
/// (`w_tilde`, `d × n`). `b` and `b_out` have length `n`, `mu` length `d`.
#[no_mangle]
pub unsafe extern "C" fn cq_effective_bias(
    b: *const f64,
    n: usize,
    mu: *const f64,
    d: usize,
    p: *const CqPlan,
    w_tilde: *const CqTensor,
    b_out: *mut f64,
) -> CqStatus {
    guard(|| {
        let bias = centerquant::effective_bias(
            slice(b, n, "b")?,
            slice(mu, d, "mu")?,
            plan(p)?,
            tensor(w_tilde, "w_tilde")?,
        )?;
        check_len(bias.len(), n, "bias")?;
        slice_mut(b_out, n, "b_out")?.copy_from_slice(&bias);
        Ok(())
    })
}

/// Per-token asymmetric min-max fake quantization at `bits` (2..=8).
#[no_mangle]
pub unsafe extern "C" fn cq_fake_quant_activations(x: *const CqTensor, bits: u8, out: *mut *mut CqTensor) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        emit(out, fake_quant(tensor(x, "x")?, &QuantConfig::per_token(bits)?)?)
    })
}

/// Symmetric absmax fake quantization of `d × n` weights with one scale per
/// `block` input rows of each output column.
#[no_mangle]
pub unsafe extern "C" fn cq_fake_quant_weights(
    w: *const CqTensor,
    bits: u8,
    block: usize,
    out: *mut *mut CqTensor,
) -> CqStatus {
    guard(|| {
        out_ok(out)?;
        emit(out, fake_quant(tensor(w, "w")?, &QuantConfig::per_block(bits, block)?)?)
    })
}

/// `10 log10(||ref||² / ||ref - test||²)` in dB, capped at 300.
#[no_mangle]
pub unsafe extern "C" fn cq_sqnr(reference: *const CqTensor, test: *const CqTensor, out_db: *mut f64) -> CqStatus {
    guard(|| {
        let db = centerquant::sqnr(tensor(reference, "reference")?, tensor(test, "test")?)?;
        *out_db.as_mut().ok_or_else(|| null("out_db"))? = db;
        Ok(())
    })
}
