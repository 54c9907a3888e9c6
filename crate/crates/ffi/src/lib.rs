//! C ABI for the codec.
//!
//! Foreign callers work with two opaque handles: a loaded model
//! (`SddcModel`) and an in-flight encoder session (`SddcEncoder`). Every
//! fallible call returns an `SddcStatus`; the message for the most recent
//! failure on the current thread is available via `sddc_last_error`.
//!
//! All paths are NUL-terminated UTF-8. Frame buffers are 8-bit interleaved
//! RGB, row-major, `width * height * 3` bytes.

use libc::{c_char, c_double, c_int, size_t};
use sddc::config::CODEC_STRIDE;
use sddc::container::Container;
use sddc::frames_io::{read_sequence, write_sequence, Frame, Sequence, SourceFormat};
use sddc::model::AblationFlags;
use sddc::session::{container_bpp, decode_sequence, encode_sequence, EncoderConfig};
use sddc::tensor::Tensor;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum SddcStatus {
    Ok = 0,
    NullArgument = -1,
    InvalidArgument = -2,
    Io = -3,
    CorruptData = -4,
    Internal = -5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &sddc::CodecError) -> SddcStatus {
    use sddc::CodecError::*;
    match err {
        Io { .. } | TruncatedFile { .. } => SddcStatus::Io,
        CorruptBitstream(_) | CorruptCheckpoint(_) => SddcStatus::CorruptData,
        MissingCheckpoint(_) | UnsupportedFormat(_) | InvalidArgument(_) | ShapeMismatch(_)
        | EmptyInput(_) => SddcStatus::InvalidArgument,
        TrainingDiverged(_) => SddcStatus::Internal,
    }
}

fn fail(err: sddc::CodecError) -> SddcStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Opaque handle to a loaded model (checkpoint).
pub struct SddcModel {
    inner: sddc::model::SddcModel,
}

/// Opaque handle to an encoder session accumulating frames.
pub struct SddcEncoder {
    model: *const SddcModel,
    width: usize,
    height: usize,
    cfg: EncoderConfig,
    frames: Vec<Tensor>,
}

unsafe fn cstr<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

/// Copy the most recent error message on this thread into `buf`; returns the
/// full message length (excluding the terminator).
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes, or be NULL (then only
/// the length is returned).
#[no_mangle]
pub unsafe extern "C" fn sddc_last_error(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always NUL-terminate
            *buf.add(n - 1) = 0;
        }
        (bytes.len() - 1) as size_t
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sddc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a model checkpoint; NULL on failure (see `sddc_last_error`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sddc_model_load(path: *const c_char) -> *mut SddcModel {
    let Some(p) = cstr(path) else {
        set_error("path is NULL or not UTF-8");
        return std::ptr::null_mut();
    };
    match sddc::checkpoint::load(Path::new(p)) {
        Ok(inner) => Box::into_raw(Box::new(SddcModel { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `model` must come from `sddc_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sddc_model_free(model: *mut SddcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Create an encoder session. `flags` packs the ablation switches
/// (bit 0 = skip long-term fusion, bit 1 = zero the detail motion field).
///
/// # Safety
/// `model` must be a live handle from `sddc_model_load` and must outlive the
/// encoder.
#[no_mangle]
pub unsafe extern "C" fn sddc_encoder_new(
    model: *const SddcModel,
    width: c_int,
    height: c_int,
    lambda_index: c_int,
    intra_period: c_int,
    flags: c_int,
) -> *mut SddcEncoder {
    if model.is_null() {
        set_error("model is NULL");
        return std::ptr::null_mut();
    }
    if !(0..=3).contains(&lambda_index) || !(1..=255).contains(&intra_period) {
        set_error("lambda_index must be 0..=3 and intra_period 1..=255");
        return std::ptr::null_mut();
    }
    if width < 1 || height < 1 || width > 65535 || height > 65535 {
        set_error("frame geometry out of range");
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(SddcEncoder {
        model,
        width: width as usize,
        height: height as usize,
        cfg: EncoderConfig {
            lambda_index: lambda_index as u8,
            intra_period: intra_period as usize,
            flags: AblationFlags::from_byte(flags as u8),
        },
        frames: Vec::new(),
    }))
}

/// Append one interleaved RGB frame (`width * height * 3` bytes).
///
/// # Safety
/// `enc` must be live; `rgb` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn sddc_encoder_push_frame(
    enc: *mut SddcEncoder,
    rgb: *const u8,
    len: size_t,
) -> SddcStatus {
    let Some(enc) = enc.as_mut() else {
        set_error("encoder is NULL");
        return SddcStatus::NullArgument;
    };
    if rgb.is_null() {
        set_error("rgb buffer is NULL");
        return SddcStatus::NullArgument;
    }
    let expected = enc.width * enc.height * 3;
    if len != expected {
        set_error(&format!("frame buffer is {len} bytes, expected {expected}"));
        return SddcStatus::InvalidArgument;
    }
    let data = std::slice::from_raw_parts(rgb, expected);
    let mut t = Tensor::zeros(3, enc.height, enc.width);
    for y in 0..enc.height {
        for x in 0..enc.width {
            for c in 0..3 {
                t.set(c, y, x, data[(y * enc.width + x) * 3 + c] as f32 / 255.0);
            }
        }
    }
    enc.frames.push(t);
    SddcStatus::Ok
}

/// Encode all pushed frames to `out_path`; reports bits-per-pixel through
/// `bpp_out` when non-NULL. The session stays reusable (frames are kept).
///
/// # Safety
/// `enc` must be live, its model handle must still be valid, and `out_path`
/// must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sddc_encoder_finish(
    enc: *const SddcEncoder,
    out_path: *const c_char,
    bpp_out: *mut c_double,
) -> SddcStatus {
    let Some(enc) = enc.as_ref() else {
        set_error("encoder is NULL");
        return SddcStatus::NullArgument;
    };
    let Some(path) = cstr(out_path) else {
        set_error("out_path is NULL or not UTF-8");
        return SddcStatus::NullArgument;
    };
    let model = &(*enc.model).inner;
    let seq = Sequence {
        frames: enc
            .frames
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| Frame::new(t, i))
            .collect(),
        frame_rate: 30.0,
        source_format: SourceFormat::ImageDir,
    };
    match encode_sequence(model, &seq, &enc.cfg) {
        Ok(res) => {
            let bytes = res.container.to_bytes();
            if let Err(e) = std::fs::write(path, &bytes) {
                return fail(sddc::CodecError::io(path, e));
            }
            if !bpp_out.is_null() {
                *bpp_out = container_bpp(&res.container);
            }
            SddcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `enc` must come from `sddc_encoder_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sddc_encoder_free(enc: *mut SddcEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

fn parse_format(format: c_int) -> Result<SourceFormat, SddcStatus> {
    match format {
        0 => Ok(SourceFormat::ImageDir),
        1 => Ok(SourceFormat::Yuv420),
        2 => Ok(SourceFormat::Yuv444),
        _ => {
            set_error("format must be 0 (image dir), 1 (yuv420) or 2 (yuv444)");
            Err(SddcStatus::InvalidArgument)
        }
    }
}

/// Encode a stored sequence in one call.
///
/// # Safety
/// `model` must be live; `input` and `out_path` must be valid NUL-terminated
/// strings.
#[no_mangle]
pub unsafe extern "C" fn sddc_encode_file(
    model: *const SddcModel,
    input: *const c_char,
    format: c_int,
    width: c_int,
    height: c_int,
    frames: c_int,
    lambda_index: c_int,
    intra_period: c_int,
    flags: c_int,
    out_path: *const c_char,
    bpp_out: *mut c_double,
) -> SddcStatus {
    let Some(model) = model.as_ref() else {
        set_error("model is NULL");
        return SddcStatus::NullArgument;
    };
    let (Some(input), Some(out_path)) = (cstr(input), cstr(out_path)) else {
        set_error("input/out_path is NULL or not UTF-8");
        return SddcStatus::NullArgument;
    };
    let fmt = match parse_format(format) {
        Ok(f) => f,
        Err(s) => return s,
    };
    let seq = match read_sequence(
        Path::new(input),
        fmt,
        width.max(0) as usize,
        height.max(0) as usize,
        frames.max(0) as usize,
    ) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let cfg = EncoderConfig {
        lambda_index: lambda_index.clamp(0, 3) as u8,
        intra_period: intra_period.clamp(1, 255) as usize,
        flags: AblationFlags::from_byte(flags as u8),
    };
    match encode_sequence(&model.inner, &seq, &cfg) {
        Ok(res) => {
            let bytes = res.container.to_bytes();
            if let Err(e) = std::fs::write(out_path, &bytes) {
                return fail(sddc::CodecError::io(out_path, e));
            }
            if !bpp_out.is_null() {
                *bpp_out = container_bpp(&res.container);
            }
            SddcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Decode a bitstream file to a frame directory (or raw YUV file).
///
/// # Safety
/// `model` must be live; `stream_path` and `out_path` must be valid
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sddc_decode_file(
    model: *const SddcModel,
    stream_path: *const c_char,
    out_path: *const c_char,
    format: c_int,
) -> SddcStatus {
    let Some(model) = model.as_ref() else {
        set_error("model is NULL");
        return SddcStatus::NullArgument;
    };
    let (Some(stream_path), Some(out_path)) = (cstr(stream_path), cstr(out_path)) else {
        set_error("stream_path/out_path is NULL or not UTF-8");
        return SddcStatus::NullArgument;
    };
    let fmt = match parse_format(format) {
        Ok(f) => f,
        Err(s) => return s,
    };
    let bytes = match std::fs::read(stream_path) {
        Ok(b) => b,
        Err(e) => return fail(sddc::CodecError::io(stream_path, e)),
    };
    let container = match Container::from_bytes(&bytes) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match decode_sequence(&model.inner, &container) {
        Ok(seq) => {
            if seq.is_empty() {
                return SddcStatus::Ok;
            }
            match write_sequence(&seq, Path::new(out_path), fmt) {
                Ok(()) => SddcStatus::Ok,
                Err(e) => fail(e),
            }
        }
        Err(e) => fail(e),
    }
}

/// Stride every coded frame is padded to; useful for callers allocating
/// aligned buffers.
#[no_mangle]
pub extern "C" fn sddc_codec_stride() -> c_int {
    CODEC_STRIDE as c_int
}
