//! C ABI for the alsim engine.
//!
//! Conventions: every function returns an [`AlsimStatus`]; out-parameters
//! are written only on `ALSIM_STATUS_OK`; handles are opaque and must be
//! released with the matching `_free` function; `alsim_last_error_message`
//! returns a thread-local description of the most recent failure. No
//! function panics across the boundary.

use alsim_core::error::Error;
use alsim_core::learner::{load_checkpoint, predict, FeatureConfig, MlpParams};
use alsim_core::metrics::evaluate_case;
use alsim_core::uncertainty::{find_peaks, mc_sample, predictive_entropy};
use alsim_core::volume::{generate_phantom, LabelVolume, PhantomSpec, ScalarVolume};
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    UndefinedMetric = 5,
    InsufficientData = 6,
    EmptyAnnotation = 7,
    ExhaustedPool = 8,
    Utf8 = 9,
    Panic = 10,
}

/// Opaque scalar volume (image, probability, or entropy field).
pub struct AlsimVolume(ScalarVolume);

/// Opaque binary label volume.
pub struct AlsimLabels(LabelVolume);

/// Opaque trained model: parameters plus feature configuration.
pub struct AlsimModel {
    params: MlpParams,
    features: FeatureConfig,
}

/// Segmentation metrics for one prediction/reference pair. `*_defined` is 0
/// when the metric is undefined for the pair (empty mask); the value is
/// meaningless then.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct AlsimMetrics {
    pub dice: f64,
    pub rve_pct: f64,
    pub msd_mm: f64,
    pub hd_mm: f64,
    pub dice_defined: u8,
    pub rve_defined: u8,
    pub msd_defined: u8,
    pub hd_defined: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = sanitized);
}

fn status_of(err: &Error) -> AlsimStatus {
    match err {
        Error::InvalidArgument(_) => AlsimStatus::InvalidArgument,
        Error::EmptyAnnotation(_) => AlsimStatus::EmptyAnnotation,
        Error::ExhaustedPool => AlsimStatus::ExhaustedPool,
        Error::UndefinedMetric(_) => AlsimStatus::UndefinedMetric,
        Error::InsufficientData(_) => AlsimStatus::InsufficientData,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => AlsimStatus::Parse,
        Error::Io(_) => AlsimStatus::Io,
    }
}

fn fail(err: Error) -> AlsimStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guard(f: impl FnOnce() -> AlsimStatus) -> AlsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            AlsimStatus::Panic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, AlsimStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(AlsimStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        AlsimStatus::Utf8
    })
}

macro_rules! require {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error("null handle argument");
                return AlsimStatus::NullPointer;
            }
        }
    };
}

macro_rules! out_ptr {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error("null out-parameter");
            return AlsimStatus::NullPointer;
        }
    };
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn alsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn alsim_version() -> *const c_char {
    static VERSION: &[u8] = b"0.1.0\0";
    VERSION.as_ptr() as *const c_char
}

/// Read a scalar volume (MET_FLOAT) from an MHD file.
#[no_mangle]
pub extern "C" fn alsim_volume_read(path: *const c_char, out: *mut *mut AlsimVolume) -> AlsimStatus {
    guard(|| {
        out_ptr!(out);
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ScalarVolume::read_mhd(path) {
            Ok(v) => {
                unsafe { *out = Box::into_raw(Box::new(AlsimVolume(v))) };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Write a scalar volume as MET_FLOAT (values stored at 32-bit precision).
#[no_mangle]
pub extern "C" fn alsim_volume_write(volume: *const AlsimVolume, path: *const c_char) -> AlsimStatus {
    guard(|| {
        let v = require!(volume);
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match v.0.write_mhd(path) {
            Ok(()) => AlsimStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn alsim_volume_free(volume: *mut AlsimVolume) {
    if !volume.is_null() {
        drop(unsafe { Box::from_raw(volume) });
    }
}

/// Grid extents, written as `[nx, ny, nz]`.
#[no_mangle]
pub extern "C" fn alsim_volume_dims(volume: *const AlsimVolume, out_dims: *mut u64) -> AlsimStatus {
    guard(|| {
        let v = require!(volume);
        out_ptr!(out_dims);
        let d = v.0.dims();
        unsafe {
            *out_dims = d.nx as u64;
            *out_dims.add(1) = d.ny as u64;
            *out_dims.add(2) = d.nz as u64;
        }
        AlsimStatus::Ok
    })
}

/// Voxel spacing in millimeters, written as `[dx, dy, dz]`.
#[no_mangle]
pub extern "C" fn alsim_volume_spacing(volume: *const AlsimVolume, out_spacing: *mut f64) -> AlsimStatus {
    guard(|| {
        let v = require!(volume);
        out_ptr!(out_spacing);
        let s = v.0.spacing();
        unsafe {
            *out_spacing = s.dx;
            *out_spacing.add(1) = s.dy;
            *out_spacing.add(2) = s.dz;
        }
        AlsimStatus::Ok
    })
}

/// Total voxel count.
#[no_mangle]
pub extern "C" fn alsim_volume_len(volume: *const AlsimVolume, out_len: *mut size_t) -> AlsimStatus {
    guard(|| {
        let v = require!(volume);
        out_ptr!(out_len);
        unsafe { *out_len = v.0.data().len() };
        AlsimStatus::Ok
    })
}

/// Copy the voxel data (x-fastest order) into a caller buffer of exactly
/// `len` elements; `len` must equal the volume length.
#[no_mangle]
pub extern "C" fn alsim_volume_copy_data(
    volume: *const AlsimVolume,
    buffer: *mut f64,
    len: size_t,
) -> AlsimStatus {
    guard(|| {
        let v = require!(volume);
        out_ptr!(buffer);
        let data = v.0.data();
        if len != data.len() {
            return fail(Error::invalid(format!(
                "buffer length {len} does not match volume length {}",
                data.len()
            )));
        }
        unsafe { ptr::copy_nonoverlapping(data.as_ptr(), buffer, data.len()) };
        AlsimStatus::Ok
    })
}

/// Read a label volume (MET_UCHAR) from an MHD file.
#[no_mangle]
pub extern "C" fn alsim_labels_read(path: *const c_char, out: *mut *mut AlsimLabels) -> AlsimStatus {
    guard(|| {
        out_ptr!(out);
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match LabelVolume::read_mhd(path) {
            Ok(l) => {
                unsafe { *out = Box::into_raw(Box::new(AlsimLabels(l))) };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn alsim_labels_write(labels: *const AlsimLabels, path: *const c_char) -> AlsimStatus {
    guard(|| {
        let l = require!(labels);
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match l.0.write_mhd(path) {
            Ok(()) => AlsimStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn alsim_labels_free(labels: *mut AlsimLabels) {
    if !labels.is_null() {
        drop(unsafe { Box::from_raw(labels) });
    }
}

#[no_mangle]
pub extern "C" fn alsim_labels_dims(labels: *const AlsimLabels, out_dims: *mut u64) -> AlsimStatus {
    guard(|| {
        let l = require!(labels);
        out_ptr!(out_dims);
        let d = l.0.dims();
        unsafe {
            *out_dims = d.nx as u64;
            *out_dims.add(1) = d.ny as u64;
            *out_dims.add(2) = d.nz as u64;
        }
        AlsimStatus::Ok
    })
}

/// Copy label bytes (0/1, x-fastest order) into a buffer of exactly `len`.
#[no_mangle]
pub extern "C" fn alsim_labels_copy_data(
    labels: *const AlsimLabels,
    buffer: *mut u8,
    len: size_t,
) -> AlsimStatus {
    guard(|| {
        let l = require!(labels);
        out_ptr!(buffer);
        let data = l.0.data();
        if len != data.len() {
            return fail(Error::invalid(format!(
                "buffer length {len} does not match volume length {}",
                data.len()
            )));
        }
        unsafe { ptr::copy_nonoverlapping(data.as_ptr(), buffer, data.len()) };
        AlsimStatus::Ok
    })
}

/// Generate a synthetic phantom. `spec_json` holds a PhantomSpec document;
/// pass NULL for the default spec. Both out-handles must be freed.
#[no_mangle]
pub extern "C" fn alsim_phantom_generate(
    spec_json: *const c_char,
    seed: u64,
    out_image: *mut *mut AlsimVolume,
    out_labels: *mut *mut AlsimLabels,
) -> AlsimStatus {
    guard(|| {
        out_ptr!(out_image);
        out_ptr!(out_labels);
        let spec = if spec_json.is_null() {
            PhantomSpec::default()
        } else {
            let text = match unsafe { cstr_arg(spec_json) } {
                Ok(t) => t,
                Err(s) => return s,
            };
            match serde_json::from_str::<PhantomSpec>(text) {
                Ok(spec) => spec,
                Err(e) => return fail(Error::invalid(format!("phantom spec: {e}"))),
            }
        };
        match generate_phantom(&spec, seed) {
            Ok((img, lbl)) => {
                unsafe {
                    *out_image = Box::into_raw(Box::new(AlsimVolume(img)));
                    *out_labels = Box::into_raw(Box::new(AlsimLabels(lbl)));
                }
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Load a model checkpoint written by the trainer.
#[no_mangle]
pub extern "C" fn alsim_model_load(path: *const c_char, out: *mut *mut AlsimModel) -> AlsimStatus {
    guard(|| {
        out_ptr!(out);
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(path) {
            Ok((params, features)) => {
                unsafe { *out = Box::into_raw(Box::new(AlsimModel { params, features })) };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn alsim_model_free(model: *mut AlsimModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Dense dropout-off inference: per-voxel foreground probability.
#[no_mangle]
pub extern "C" fn alsim_model_predict(
    model: *const AlsimModel,
    volume: *const AlsimVolume,
    out: *mut *mut AlsimVolume,
) -> AlsimStatus {
    guard(|| {
        let m = require!(model);
        let v = require!(volume);
        out_ptr!(out);
        match predict(&m.params, &v.0, &m.features) {
            Ok(prob) => {
                unsafe { *out = Box::into_raw(Box::new(AlsimVolume(prob.into_inner()))) };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Thresholded prediction: label 1 where the probability reaches 0.5.
#[no_mangle]
pub extern "C" fn alsim_model_predict_labels(
    model: *const AlsimModel,
    volume: *const AlsimVolume,
    out: *mut *mut AlsimLabels,
) -> AlsimStatus {
    guard(|| {
        let m = require!(model);
        let v = require!(volume);
        out_ptr!(out);
        match predict(&m.params, &v.0, &m.features) {
            Ok(prob) => {
                unsafe { *out = Box::into_raw(Box::new(AlsimLabels(prob.threshold()))) };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Voxel-wise predictive entropy over `samples` MC-dropout passes seeded by
/// `seed`; values are in nats, bounded by ln 2.
#[no_mangle]
pub extern "C" fn alsim_model_entropy(
    model: *const AlsimModel,
    volume: *const AlsimVolume,
    samples: u32,
    seed: u64,
    out: *mut *mut AlsimVolume,
) -> AlsimStatus {
    guard(|| {
        let m = require!(model);
        let v = require!(volume);
        out_ptr!(out);
        let set = match mc_sample(&m.params, &v.0, &m.features, samples as usize, seed) {
            Ok(set) => set,
            Err(e) => return fail(e),
        };
        match predictive_entropy(&set) {
            Ok(entropy) => {
                unsafe { *out = Box::into_raw(Box::new(AlsimVolume(entropy.into_inner()))) };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// DICE, RVE, MSD, and HD for a prediction/reference pair.
#[no_mangle]
pub extern "C" fn alsim_evaluate(
    pred: *const AlsimLabels,
    reference: *const AlsimLabels,
    out: *mut AlsimMetrics,
) -> AlsimStatus {
    guard(|| {
        let p = require!(pred);
        let r = require!(reference);
        out_ptr!(out);
        match evaluate_case(&p.0, &r.0) {
            Ok(m) => {
                let metrics = AlsimMetrics {
                    dice: m.dice.unwrap_or(f64::NAN),
                    rve_pct: m.rve.unwrap_or(f64::NAN),
                    msd_mm: m.msd.unwrap_or(f64::NAN),
                    hd_mm: m.hd.unwrap_or(f64::NAN),
                    dice_defined: u8::from(m.dice.is_some()),
                    rve_defined: u8::from(m.rve.is_some()),
                    msd_defined: u8::from(m.msd.is_some()),
                    hd_defined: u8::from(m.hd.is_some()),
                };
                unsafe { *out = metrics };
                AlsimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Local-maximum peaks of a 1D profile with greedy minimum-distance
/// suppression. Writes at most `capacity` indices and stores the total peak
/// count in `out_len`; the copied prefix holds the lowest indices.
#[no_mangle]
pub extern "C" fn alsim_find_peaks(
    values: *const f64,
    len: size_t,
    min_distance: size_t,
    out_indices: *mut size_t,
    capacity: size_t,
    out_len: *mut size_t,
) -> AlsimStatus {
    guard(|| {
        out_ptr!(out_len);
        if len > 0 && values.is_null() {
            set_error("null values pointer");
            return AlsimStatus::NullPointer;
        }
        if capacity > 0 && out_indices.is_null() {
            set_error("null out_indices pointer");
            return AlsimStatus::NullPointer;
        }
        let slice = if len == 0 {
            &[][..]
        } else {
            unsafe { std::slice::from_raw_parts(values, len) }
        };
        if slice.iter().any(|v| v.is_nan()) {
            return fail(Error::invalid("profile contains NaN".to_string()));
        }
        let peaks = find_peaks(slice, min_distance.max(1));
        unsafe { *out_len = peaks.len() };
        let n = peaks.len().min(capacity);
        for (i, &p) in peaks.iter().take(n).enumerate() {
            unsafe { *out_indices.add(i) = p };
        }
        AlsimStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn tmp(name: &str) -> CString {
        let dir = std::env::temp_dir().join("alsim-ffi-tests");
        std::fs::create_dir_all(&dir).unwrap();
        CString::new(dir.join(name).display().to_string()).unwrap()
    }

    #[test]
    fn phantom_roundtrip_through_files() {
        let mut img: *mut AlsimVolume = ptr::null_mut();
        let mut lbl: *mut AlsimLabels = ptr::null_mut();
        assert_eq!(
            alsim_phantom_generate(ptr::null(), 7, &mut img, &mut lbl),
            AlsimStatus::Ok
        );
        let img_path = tmp("p.img.mhd");
        let lbl_path = tmp("p.lbl.mhd");
        assert_eq!(alsim_volume_write(img, img_path.as_ptr()), AlsimStatus::Ok);
        assert_eq!(alsim_labels_write(lbl, lbl_path.as_ptr()), AlsimStatus::Ok);

        let mut img2: *mut AlsimVolume = ptr::null_mut();
        assert_eq!(alsim_volume_read(img_path.as_ptr(), &mut img2), AlsimStatus::Ok);
        let mut dims = [0u64; 3];
        assert_eq!(alsim_volume_dims(img2, dims.as_mut_ptr()), AlsimStatus::Ok);
        assert_eq!(dims, [64, 64, 48]);
        let mut spacing = [0f64; 3];
        assert_eq!(alsim_volume_spacing(img2, spacing.as_mut_ptr()), AlsimStatus::Ok);
        assert_eq!(spacing, [1.0, 1.0, 1.5]);

        let mut lbl2: *mut AlsimLabels = ptr::null_mut();
        assert_eq!(alsim_labels_read(lbl_path.as_ptr(), &mut lbl2), AlsimStatus::Ok);
        let mut metrics = AlsimMetrics {
            dice: 0.0,
            rve_pct: 0.0,
            msd_mm: 0.0,
            hd_mm: 0.0,
            dice_defined: 0,
            rve_defined: 0,
            msd_defined: 0,
            hd_defined: 0,
        };
        assert_eq!(alsim_evaluate(lbl2, lbl2, &mut metrics), AlsimStatus::Ok);
        assert_eq!(metrics.dice, 1.0);
        assert_eq!(metrics.msd_mm, 0.0);
        assert_eq!(metrics.dice_defined, 1);

        alsim_volume_free(img);
        alsim_volume_free(img2);
        alsim_labels_free(lbl);
        alsim_labels_free(lbl2);
    }

    #[test]
    fn null_arguments_are_rejected_not_fatal() {
        let mut out: *mut AlsimVolume = ptr::null_mut();
        assert_eq!(alsim_volume_read(ptr::null(), &mut out), AlsimStatus::NullPointer);
        assert_eq!(alsim_volume_write(ptr::null(), ptr::null()), AlsimStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(alsim_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());
        alsim_volume_free(ptr::null_mut());
        alsim_labels_free(ptr::null_mut());
        alsim_model_free(ptr::null_mut());
    }

    #[test]
    fn missing_file_reports_io_error() {
        let mut out: *mut AlsimVolume = ptr::null_mut();
        let path = CString::new("/nonexistent/alsim/volume.mhd").unwrap();
        assert_eq!(alsim_volume_read(path.as_ptr(), &mut out), AlsimStatus::Io);
        assert!(out.is_null());
    }

    #[test]
    fn find_peaks_through_the_abi() {
        let values = [0.0, 5.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 3.0];
        let mut indices = [0usize; 8];
        let mut n = 0usize;
        assert_eq!(
            alsim_find_peaks(values.as_ptr(), values.len(), 5, indices.as_mut_ptr(), 8, &mut n),
            AlsimStatus::Ok
        );
        assert_eq!(n, 2);
        assert_eq!(&indices[..2], &[1, 9]);

        // Capacity smaller than the peak count still reports the total.
        let mut one = [0usize; 1];
        assert_eq!(
            alsim_find_peaks(values.as_ptr(), values.len(), 5, one.as_mut_ptr(), 1, &mut n),
            AlsimStatus::Ok
        );
        assert_eq!(n, 2);
        assert_eq!(one[0], 1);
    }

    #[test]
    fn model_load_predict_and_entropy() {
        use alsim_core::learner::{save_checkpoint, LearnerConfig, MlpParams};
        use alsim_core::stream::derive_rng;
        let learner = LearnerConfig::default();
        let mut rng = derive_rng(3, &["ffi".into()]);
        let params = MlpParams::init(&learner.layer_sizes(), 0.25, &mut rng).unwrap();
        let ck = tmp("model.ckpt");
        save_checkpoint(
            std::path::Path::new(ck.to_str().unwrap()),
            &params,
            &learner.features,
        )
        .unwrap();

        let mut model: *mut AlsimModel = ptr::null_mut();
        assert_eq!(alsim_model_load(ck.as_ptr(), &mut model), AlsimStatus::Ok);

        let mut img: *mut AlsimVolume = ptr::null_mut();
        let mut lbl: *mut AlsimLabels = ptr::null_mut();
        let spec = CString::new(
            serde_json::to_string(&PhantomSpec {
                dims: alsim_core::volume::Dims { nx: 16, ny: 16, nz: 12 },
                organ_semi_axes: (2.0, 3.0),
                ..Default::default()
            })
            .unwrap(),
        )
        .unwrap();
        assert_eq!(alsim_phantom_generate(spec.as_ptr(), 1, &mut img, &mut lbl), AlsimStatus::Ok);

        let mut prob: *mut AlsimVolume = ptr::null_mut();
        assert_eq!(alsim_model_predict(model, img, &mut prob), AlsimStatus::Ok);
        let mut len = 0usize;
        assert_eq!(alsim_volume_len(prob, &mut len), AlsimStatus::Ok);
        assert_eq!(len, 16 * 16 * 12);
        let mut data = vec![0.0f64; len];
        assert_eq!(alsim_volume_copy_data(prob, data.as_mut_ptr(), len), AlsimStatus::Ok);
        assert!(data.iter().all(|p| (0.0..=1.0).contains(p)));

        let mut entropy: *mut AlsimVolume = ptr::null_mut();
        assert_eq!(alsim_model_entropy(model, img, 4, 9, &mut entropy), AlsimStatus::Ok);
        let mut e = vec![0.0f64; len];
        assert_eq!(alsim_volume_copy_data(entropy, e.as_mut_ptr(), len), AlsimStatus::Ok);
        assert!(e.iter().all(|&u| (0.0..=std::f64::consts::LN_2 + 1e-12).contains(&u)));

        // Zero samples is an invalid argument, not a crash.
        let mut bad: *mut AlsimVolume = ptr::null_mut();
        assert_eq!(
            alsim_model_entropy(model, img, 0, 9, &mut bad),
            AlsimStatus::InvalidArgument
        );

        alsim_volume_free(prob);
        alsim_volume_free(entropy);
        alsim_volume_free(img);
        alsim_labels_free(lbl);
        alsim_model_free(model);
    }
}
