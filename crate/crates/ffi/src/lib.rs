//! C ABI over the `irispad` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Every fallible call
//! returns an [`IrisPadStatus`]; on failure [`irispad_last_error`] describes
//! the cause for the calling thread.
//!
//! Images are row-major 8-bit buffers of `width * height` bytes. Masks use
//! the same layout with nonzero meaning "use this pixel"; a null mask selects
//! every pixel.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use irispad::areas::{AreaModel, AreasError};
use irispad::imageio::{BinaryMask, GrayImage, ImageIoError, ImagePair, Label};
use irispad::roi::{self, AnnulusGeometry, RoiError};
use irispad::score::{self, ScoreError};
use irispad::stereo::{self, LightRig, NormalField, StereoError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrisPadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidRig = 4,
    DimensionMismatch = 5,
    EmptyRegion = 6,
    Degenerate = 7,
    InvalidModel = 8,
    Panic = 9,
}

/// Pupil and iris circles in pixel coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrisPadAnnulus {
    pub pupil_cx: f64,
    pub pupil_cy: f64,
    pub pupil_r: f64,
    pub iris_cx: f64,
    pub iris_cy: f64,
    pub iris_r: f64,
}

/// Opaque light rig.
pub struct IrisPadRig(LightRig);

/// Opaque normal field.
pub struct IrisPadNormalField(NormalField);

/// Opaque trained area model.
pub struct IrisPadAreaModel(AreaModel);

struct FfiError {
    status: IrisPadStatus,
    message: String,
}

impl FfiError {
    fn new(status: IrisPadStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<ImageIoError> for FfiError {
    fn from(e: ImageIoError) -> Self {
        let status = match e {
            ImageIoError::DimensionMismatch(_) => IrisPadStatus::DimensionMismatch,
            ImageIoError::InvalidRaster(_) => IrisPadStatus::InvalidArgument,
            _ => IrisPadStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

impl From<StereoError> for FfiError {
    fn from(e: StereoError) -> Self {
        let status = match &e {
            StereoError::TooFewLights(_)
            | StereoError::NotUnit { .. }
            | StereoError::ParallelLights(..)
            | StereoError::RankDeficient(_)
            | StereoError::InvalidRigFile(_) => IrisPadStatus::InvalidRig,
            StereoError::DimensionMismatch(_) => IrisPadStatus::DimensionMismatch,
            StereoError::NonFiniteInput => IrisPadStatus::InvalidArgument,
            StereoError::InvalidNormalFile(_) | StereoError::Io(_) => IrisPadStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

impl From<RoiError> for FfiError {
    fn from(e: RoiError) -> Self {
        Self::new(IrisPadStatus::InvalidArgument, e.to_string())
    }
}

impl From<ScoreError> for FfiError {
    fn from(e: ScoreError) -> Self {
        let status = match e {
            ScoreError::EmptyRegion | ScoreError::AllZeroWeights => IrisPadStatus::EmptyRegion,
            ScoreError::DegenerateRegion(_) => IrisPadStatus::Degenerate,
            ScoreError::DimensionMismatch(_) => IrisPadStatus::DimensionMismatch,
            ScoreError::InvalidWeights(_) => IrisPadStatus::InvalidModel,
        };
        Self::new(status, e.to_string())
    }
}

impl From<AreasError> for FfiError {
    fn from(e: AreasError) -> Self {
        let status = match &e {
            AreasError::Io(_) => IrisPadStatus::Io,
            AreasError::Score(s) => FfiError::from((*s).clone()).status,
            _ => IrisPadStatus::InvalidModel,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> IrisPadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            IrisPadStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.status
        }
        Err(_) => {
            set_last_error("internal panic");
            IrisPadStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, FfiError> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| FfiError::new(IrisPadStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, FfiError> {
    // SAFETY: the caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| FfiError::new(IrisPadStatus::NullPointer, format!("{what} is null")))
}

fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], FfiError> {
    if p.is_null() {
        return Err(FfiError::new(IrisPadStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn pixel_count(width: usize, height: usize) -> Result<usize, FfiError> {
    if width == 0 || height == 0 {
        return Err(FfiError::new(IrisPadStatus::InvalidArgument, "image dimensions must be positive"));
    }
    width
        .checked_mul(height)
        .ok_or_else(|| FfiError::new(IrisPadStatus::InvalidArgument, "image dimensions overflow"))
}

fn mask_from(p: *const u8, width: usize, height: usize) -> Result<BinaryMask, FfiError> {
    let n = pixel_count(width, height)?;
    if p.is_null() {
        return Ok(BinaryMask::filled(width, height, true)?);
    }
    let bits = slice(p, n, "mask")?.iter().map(|&b| b != 0).collect();
    Ok(BinaryMask::new(width, height, bits)?)
}

fn path_from(p: *const c_char) -> Result<PathBuf, FfiError> {
    if p.is_null() {
        return Err(FfiError::new(IrisPadStatus::NullPointer, "path is null"));
    }
    // SAFETY: the caller passes a NUL-terminated string valid for this call.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| FfiError::new(IrisPadStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn geometry_from(a: &IrisPadAnnulus) -> Result<AnnulusGeometry, FfiError> {
    Ok(AnnulusGeometry::new(
        (a.pupil_cx, a.pupil_cy),
        a.pupil_r,
        (a.iris_cx, a.iris_cy),
        a.iris_r,
    )?)
}

fn give<T>(value: T, out: *mut *mut T) -> Result<(), FfiError> {
    let slot = out_ptr(out, "output handle")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irispad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn irispad_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates a rig from `k` row-major light directions (`k * 3` doubles).
/// Directions are normalized; zero or parallel rows are rejected.
///
/// # Safety
/// `directions` must point to `k * 3` readable doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_rig_new(directions: *const f64, k: usize, out: *mut *mut IrisPadRig) -> IrisPadStatus {
    guard(|| {
        let len = k
            .checked_mul(3)
            .ok_or_else(|| FfiError::new(IrisPadStatus::InvalidArgument, "light count overflows"))?;
        let flat = slice(directions, len, "directions")?;
        let rows = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        give(IrisPadRig(LightRig::from_unnormalized(rows)?), out)
    })
}

/// Loads a rig from a JSON file `{"directions": [[x, y, z], ...]}`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_rig_from_json_file(path: *const c_char, out: *mut *mut IrisPadRig) -> IrisPadStatus {
    guard(|| give(IrisPadRig(LightRig::load(path_from(path)?)?), out))
}

/// Number of lights in a rig, or 0 for a null handle.
///
/// # Safety
/// `rig` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irispad_rig_len(rig: *const IrisPadRig) -> usize {
    // SAFETY: forwarded from the caller.
    unsafe { rig.as_ref() }.map_or(0, |r| r.0.len())
}

/// # Safety
/// `rig` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irispad_rig_free(rig: *mut IrisPadRig) {
    if !rig.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(rig) });
    }
}

/// Estimates normals from a left-lit and right-lit image with a two-light
/// rig. Pixels outside `mask` are marked invalid.
///
/// # Safety
/// `left`, `right` and a non-null `mask` must hold `width * height` bytes;
/// `rig` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_estimate_normals(
    rig: *const IrisPadRig,
    left: *const u8,
    right: *const u8,
    mask: *const u8,
    width: usize,
    height: usize,
    out: *mut *mut IrisPadNormalField,
) -> IrisPadStatus {
    guard(|| {
        let rig = non_null(rig, "rig")?;
        let n = pixel_count(width, height)?;
        let l = GrayImage::new(width, height, slice(left, n, "left image")?.to_vec())?;
        let r = GrayImage::new(width, height, slice(right, n, "right image")?.to_vec())?;
        let m = mask_from(mask, width, height)?;
        let pair = ImagePair::new(l, r, m.clone(), m.clone(), Label::Unknown, "")?;
        let field = stereo::estimate_normals(&pair, &rig.0)?.restricted(&m)?;
        give(IrisPadNormalField(field), out)
    })
}

/// # Safety
/// `field` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_normal_field_dims(
    field: *const IrisPadNormalField,
    width: *mut usize,
    height: *mut usize,
) -> IrisPadStatus {
    guard(|| {
        let f = non_null(field, "field")?;
        *out_ptr(width, "width")? = f.0.width();
        *out_ptr(height, "height")? = f.0.height();
        Ok(())
    })
}

/// Unit normal at `(x, y)` into `normal[0..3]`; invalid pixels give zeros
/// and `*valid = false`.
///
/// # Safety
/// `field` must be a live handle, `normal` must hold 3 writable doubles and
/// `valid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_normal_field_get(
    field: *const IrisPadNormalField,
    x: usize,
    y: usize,
    normal: *mut f64,
    valid: *mut bool,
) -> IrisPadStatus {
    guard(|| {
        let f = &non_null(field, "field")?.0;
        if x >= f.width() || y >= f.height() {
            return Err(FfiError::new(
                IrisPadStatus::InvalidArgument,
                format!("pixel ({x}, {y}) outside {}x{}", f.width(), f.height()),
            ));
        }
        if normal.is_null() {
            return Err(FfiError::new(IrisPadStatus::NullPointer, "normal is null"));
        }
        // SAFETY: checked non-null; the caller guarantees 3 writable doubles.
        let dst = unsafe { std::slice::from_raw_parts_mut(normal, 3) };
        dst.copy_from_slice(&f.normal(x, y));
        *out_ptr(valid, "valid")? = f.is_valid(x, y);
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irispad_normal_field_free(field: *mut IrisPadNormalField) {
    if !field.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(field) });
    }
}

/// Writes 1 for pixels inside the annulus and 0 elsewhere.
///
/// # Safety
/// `annulus` must be readable and `out` must hold `width * height` bytes.
#[no_mangle]
pub unsafe extern "C" fn irispad_annulus_mask(
    annulus: *const IrisPadAnnulus,
    width: usize,
    height: usize,
    out: *mut u8,
) -> IrisPadStatus {
    guard(|| {
        let g = geometry_from(non_null(annulus, "annulus")?)?;
        let n = pixel_count(width, height)?;
        if out.is_null() {
            return Err(FfiError::new(IrisPadStatus::NullPointer, "output mask is null"));
        }
        let mask = roi::annulus_mask(&g, width, height)?;
        // SAFETY: checked non-null; the caller guarantees n writable bytes.
        let dst = unsafe { std::slice::from_raw_parts_mut(out, n) };
        for (d, &b) in dst.iter_mut().zip(mask.bits()) {
            *d = u8::from(b);
        }
        Ok(())
    })
}

/// Variance of normal deviations over `mask` and valid pixels.
///
/// # Safety
/// `field` must be a live handle, a non-null `mask` must hold
/// `width * height` bytes, and the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_base_score(
    field: *const IrisPadNormalField,
    mask: *const u8,
    score: *mut f64,
    n_pixels: *mut usize,
) -> IrisPadStatus {
    guard(|| {
        let f = &non_null(field, "field")?.0;
        let m = mask_from(mask, f.width(), f.height())?;
        let s = score::base_score(f, &m)?;
        *out_ptr(score, "score")? = s.value;
        *out_ptr(n_pixels, "n_pixels")? = s.n_pixels;
        Ok(())
    })
}

/// Loads an area model written by `irispad train-areas`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_area_model_load(path: *const c_char, out: *mut *mut IrisPadAreaModel) -> IrisPadStatus {
    guard(|| give(IrisPadAreaModel(AreaModel::load(path_from(path)?)?), out))
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irispad_area_model_free(model: *mut IrisPadAreaModel) {
    if !model.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Sector-weighted score of a field over `mask` within `annulus`.
///
/// # Safety
/// Handles must be live, `annulus` readable, a non-null `mask` must hold
/// `width * height` bytes, and the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn irispad_weighted_score(
    model: *const IrisPadAreaModel,
    field: *const IrisPadNormalField,
    mask: *const u8,
    annulus: *const IrisPadAnnulus,
    score: *mut f64,
    n_pixels: *mut usize,
) -> IrisPadStatus {
    guard(|| {
        let model = &non_null(model, "model")?.0;
        let f = &non_null(field, "field")?.0;
        let g = geometry_from(non_null(annulus, "annulus")?)?;
        let mut m = mask_from(mask, f.width(), f.height())?;
        m = m.and(&roi::annulus_mask(&g, f.width(), f.height())?)?;
        let s = model.weighted_score(f, &m, g)?;
        *out_ptr(score, "score")? = s.value;
        *out_ptr(n_pixels, "n_pixels")? = s.n_pixels;
        Ok(())
    })
}
