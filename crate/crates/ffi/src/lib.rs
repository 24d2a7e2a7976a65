//! C ABI over `maelab`: MAE checkpoints as a frozen feature extractor, the
//! learned loss, and the image-quality metrics.
//!
//! Images cross the boundary as planar `double` buffers in `N×C×H×W` order
//! with values in `[0, 1]`. Every fallible call returns a [`MaelabStatus`];
//! on failure [`maelab_last_error`] describes the cause for the calling
//! thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use maelab::loss::{evaluate_loss, DistanceKind, LossConfig, PatchVariant};
use maelab::mae::{load_checkpoint, MaeModel};
use maelab::metrics::{ergas, niqe_score, psnr, sam, ssim, NiqeModel};
use maelab::tensor::Tensor;
use maelab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaelabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    Corrupt = 5,
    Malformed = 6,
    UnsupportedVersion = 7,
    BufferTooSmall = 8,
    Runtime = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaelabDistance {
    L1 = 0,
    L2 = 1,
}

/// Frozen MAE loaded from a checkpoint.
pub struct MaelabMae(MaeModel);

/// Fitted NIQE pristine model.
pub struct MaelabNiqe(NiqeModel);

/// Dimensions of an `N×C×H×W` buffer.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaelabShape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl MaelabShape {
    fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MaelabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ShapeMismatch { .. } | Error::ChannelMismatch { .. } | Error::NotDivisible { .. } => {
                MaelabStatus::ShapeMismatch
            }
            Error::Io { .. } => MaelabStatus::Io,
            Error::Corrupt { .. } => MaelabStatus::Corrupt,
            Error::Malformed { .. } | Error::UnexpectedEof { .. } => MaelabStatus::Malformed,
            Error::VersionMismatch { .. } => MaelabStatus::UnsupportedVersion,
            Error::InvalidArgument(_) | Error::Config { .. } | Error::MissingKey(_) | Error::NonFinite { .. } => {
                MaelabStatus::InvalidArgument
            }
            _ => MaelabStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MaelabStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(msg: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MaelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            MaelabStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(_) => {
            set_last_error(Some("internal panic".into()));
            MaelabStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = unsafe { CStr::from_ptr(path) }
        .to_str()
        .map_err(|_| Failure(MaelabStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn tensor_arg(data: *const f64, shape: MaelabShape, what: &str) -> Result<Tensor, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    let values = unsafe { std::slice::from_raw_parts(data, shape.len()) }.to_vec();
    Ok(Tensor::new(&shape.dims(), values)?)
}

unsafe fn out_arg<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { ptr.as_mut() }.ok_or_else(|| null(what))
}

fn distance(d: MaelabDistance) -> DistanceKind {
    match d {
        MaelabDistance::L1 => DistanceKind::L1,
        MaelabDistance::L2 => DistanceKind::L2,
    }
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn maelab_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn maelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn maelab_mae_load(path: *const c_char, out: *mut *mut MaelabMae) -> MaelabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let model = load_checkpoint(unsafe { path_arg(path) }?)?;
        *out = Box::into_raw(Box::new(MaelabMae(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn maelab_mae_free(mae: *mut MaelabMae) {
    if !mae.is_null() {
        drop(unsafe { Box::from_raw(mae) });
    }
}

/// Input channels the encoder expects.
#[no_mangle]
pub unsafe extern "C" fn maelab_mae_in_channels(mae: *const MaelabMae) -> usize {
    unsafe { mae.as_ref() }.map_or(0, |m| m.0.in_channels())
}

/// Spatial downsampling factor of the encoder; inputs must have H and W
/// divisible by it.
#[no_mangle]
pub unsafe extern "C" fn maelab_mae_stride(mae: *const MaelabMae) -> usize {
    unsafe { mae.as_ref() }.map_or(0, |m| m.0.stride())
}

/// Encoder features of `input`. `out_shape` always receives the feature
/// shape; the values are written only when `capacity` is large enough,
/// otherwise the call returns `BUFFER_TOO_SMALL`.
#[no_mangle]
pub unsafe extern "C" fn maelab_mae_encode(
    mae: *const MaelabMae,
    input: *const f64,
    shape: MaelabShape,
    out: *mut f64,
    capacity: usize,
    out_shape: *mut MaelabShape,
) -> MaelabStatus {
    guard(|| {
        let mae = unsafe { mae.as_ref() }.ok_or_else(|| null("mae"))?;
        let out_shape = unsafe { out_arg(out_shape, "out_shape") }?;
        let x = unsafe { tensor_arg(input, shape, "input") }?;
        let f = mae.0.encode(&x)?;
        let d = f.shape();
        *out_shape = MaelabShape {
            n: d[0],
            c: d[1],
            h: d[2],
            w: d[3],
        };
        if capacity < f.len() {
            return Err(Failure(
                MaelabStatus::BufferTooSmall,
                format!("features need {} values, buffer holds {capacity}", f.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { std::slice::from_raw_parts_mut(out, f.len()) }.copy_from_slice(f.data());
        Ok(())
    })
}

/// `base(pred, gt) + lambda · feature(E(pred), E(gt))`. `mae` may be null,
/// in which case the feature term is zero. With `crops > 0` the feature term
/// is averaged over that many aligned `crop_px` crops chosen by `seed`.
/// Any of the three outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn maelab_total_loss(
    mae: *const MaelabMae,
    pred: *const f64,
    gt: *const f64,
    shape: MaelabShape,
    base: MaelabDistance,
    feature: MaelabDistance,
    lambda: f64,
    crop_px: usize,
    crops: usize,
    seed: u64,
    out_total: *mut f64,
    out_base: *mut f64,
    out_feature: *mut f64,
) -> MaelabStatus {
    guard(|| {
        let p = unsafe { tensor_arg(pred, shape, "pred") }?;
        let g = unsafe { tensor_arg(gt, shape, "gt") }?;
        let cfg = LossConfig {
            base: distance(base),
            lambda,
            feature: distance(feature),
            patch: (crops > 0).then_some(PatchVariant {
                crop_px,
                crops_per_step: crops,
                seed,
            }),
        };
        let encoder = unsafe { mae.as_ref() }.map(|m| &m.0);
        let (t, b, f) = evaluate_loss(&p, &g, encoder, &cfg, 0)?;
        for (ptr, v) in [(out_total, t), (out_base, b), (out_feature, f)] {
            if let Some(slot) = unsafe { ptr.as_mut() } {
                *slot = v;
            }
        }
        Ok(())
    })
}

unsafe fn metric(
    pred: *const f64,
    gt: *const f64,
    shape: MaelabShape,
    out: *mut f64,
    f: impl FnOnce(&Tensor, &Tensor) -> maelab::Result<f64>,
) -> MaelabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let p = unsafe { tensor_arg(pred, shape, "pred") }?;
        let g = unsafe { tensor_arg(gt, shape, "gt") }?;
        *out = f(&p, &g)?;
        Ok(())
    })
}

/// PSNR in dB for signals with the given peak value, capped at 99 dB.
#[no_mangle]
pub unsafe extern "C" fn maelab_psnr(pred: *const f64, gt: *const f64, shape: MaelabShape, peak: f64, out: *mut f64) -> MaelabStatus {
    unsafe { metric(pred, gt, shape, out, |p, g| psnr(p, g, peak)) }
}

#[no_mangle]
pub unsafe extern "C" fn maelab_ssim(pred: *const f64, gt: *const f64, shape: MaelabShape, peak: f64, out: *mut f64) -> MaelabStatus {
    unsafe { metric(pred, gt, shape, out, |p, g| ssim(p, g, peak)) }
}

/// Mean spectral angle in radians; needs at least two channels.
#[no_mangle]
pub unsafe extern "C" fn maelab_sam(pred: *const f64, gt: *const f64, shape: MaelabShape, out: *mut f64) -> MaelabStatus {
    unsafe { metric(pred, gt, shape, out, sam) }
}

#[no_mangle]
pub unsafe extern "C" fn maelab_ergas(
    pred: *const f64,
    gt: *const f64,
    shape: MaelabShape,
    scale_ratio: f64,
    out: *mut f64,
) -> MaelabStatus {
    unsafe { metric(pred, gt, shape, out, |p, g| ergas(p, g, scale_ratio).map(|e| e.value)) }
}

#[no_mangle]
pub unsafe extern "C" fn maelab_niqe_load(path: *const c_char, out: *mut *mut MaelabNiqe) -> MaelabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let model = NiqeModel::load(unsafe { path_arg(path) }?)?;
        *out = Box::into_raw(Box::new(MaelabNiqe(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn maelab_niqe_free(niqe: *mut MaelabNiqe) {
    if !niqe.is_null() {
        drop(unsafe { Box::from_raw(niqe) });
    }
}

/// NIQE of one `C×H×W` image (`shape.n` must be 1); lower is more natural.
#[no_mangle]
pub unsafe extern "C" fn maelab_niqe_score(
    niqe: *const MaelabNiqe,
    image: *const f64,
    shape: MaelabShape,
    out: *mut f64,
) -> MaelabStatus {
    guard(|| {
        let model = unsafe { niqe.as_ref() }.ok_or_else(|| null("niqe"))?;
        let out = unsafe { out_arg(out, "out") }?;
        let t = unsafe { tensor_arg(image, shape, "image") }?;
        if shape.n != 1 {
            return Err(Failure(MaelabStatus::InvalidArgument, "NIQE scores one image at a time".into()));
        }
        let img = maelab::image_io::from_tensor(&t)?;
        *out = niqe_score(&img, &model.0)?;
        Ok(())
    })
}
