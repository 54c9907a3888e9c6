//! Raw-video ingestion: planar YUV files and image directories, conversion
//! to the internal RGB float representation, and stride padding.
//!
//! Color conversion uses the full-range BT.709 matrix so reported metric
//! numbers are reproducible:
//!
//! ```text
//! Y  = 0.2126 R + 0.7152 G + 0.0722 B
//! Pb = (B - Y) / 1.8556        Pr = (R - Y) / 1.5748
//! u  = Pb * 255 + 128          v  = Pr * 255 + 128
//! ```
//!
//! 8-bit samples are divided by 255 on read; frames are RGB float in [0,1].

use crate::error::{CodecError, Result};
use crate::tensor::Tensor;
use std::fs;
use std::io::Read;
use std::path::Path;

/// Source pixel format of a stored sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceFormat {
    Yuv420,
    Yuv444,
    ImageDir,
}

impl SourceFormat {
    pub fn parse(s: &str) -> Result<SourceFormat> {
        match s {
            "yuv420" => Ok(SourceFormat::Yuv420),
            "yuv444" => Ok(SourceFormat::Yuv444),
            "image_dir" | "imagedir" | "png" => Ok(SourceFormat::ImageDir),
            other => Err(CodecError::UnsupportedFormat(other.to_string())),
        }
    }

    /// Bytes per frame for raw formats.
    pub fn frame_bytes(&self, width: usize, height: usize) -> usize {
        match self {
            SourceFormat::Yuv420 => width * height * 3 / 2,
            SourceFormat::Yuv444 => width * height * 3,
            SourceFormat::ImageDir => width * height * 3,
        }
    }
}

/// Infer the source format from a path: directories are image sequences,
/// anything else must carry a known raw-video extension.
pub fn detect_format(path: &Path) -> Result<SourceFormat> {
    if path.is_dir() {
        return Ok(SourceFormat::ImageDir);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("yuv444") => Ok(SourceFormat::Yuv444),
        Some("yuv420") | Some("yuv") => Ok(SourceFormat::Yuv420),
        other => Err(CodecError::UnsupportedFormat(format!(
            "cannot infer format from extension {:?}; pass --format",
            other
        ))),
    }
}

/// One video frame: RGB float pixels in [0,1], stored as `[3, H, W]`.
#[derive(Clone, Debug)]
pub struct Frame {
    pub pixels: Tensor,
    pub index: usize,
}

impl Frame {
    pub fn new(pixels: Tensor, index: usize) -> Self {
        debug_assert_eq!(pixels.channels(), 3);
        Frame { pixels, index }
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }
}

/// An ordered run of equally sized frames.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub frame_rate: f64,
    pub source_format: SourceFormat,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Original size saved before padding so decoded frames can be cropped back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadInfo {
    pub height: usize,
    pub width: usize,
}

// ---------------------------------------------------------------------------
// Color conversion
// ---------------------------------------------------------------------------

const KR: f64 = 0.2126;
const KB: f64 = 0.0722;
const PR_SCALE: f64 = 2.0 * (1.0 - KR); // 1.5748
const PB_SCALE: f64 = 2.0 * (1.0 - KB); // 1.8556

fn yuv_to_rgb(y: f64, u: f64, v: f64) -> (f64, f64, f64) {
    let pb = (u - 128.0) / 255.0;
    let pr = (v - 128.0) / 255.0;
    let yy = y / 255.0;
    let r = yy + PR_SCALE * pr;
    let b = yy + PB_SCALE * pb;
    let g = (yy - KR * r - KB * b) / (1.0 - KR - KB);
    (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
}

/// Quantize RGB to 8-bit YUV. Chroma is derived from the already-quantized
/// luma so rounding errors do not compound, and the luma code is chosen from
/// the three nearest candidates to minimize the worst-channel reconstruction
/// error (gamut corners can clip chroma otherwise).
fn rgb_to_yuv(r: f64, g: f64, b: f64) -> (u8, u8, u8) {
    let y = KR * r + (1.0 - KR - KB) * g + KB * b;
    let y_nearest = (y * 255.0).round();
    let quant = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let mut best = (0u8, 0u8, 0u8);
    let mut best_err = f64::INFINITY;
    for dy in [-1.0, 0.0, 1.0] {
        let yq = (y_nearest + dy).clamp(0.0, 255.0);
        let uq = quant((b - yq / 255.0) / PB_SCALE * 255.0 + 128.0);
        let vq = quant((r - yq / 255.0) / PR_SCALE * 255.0 + 128.0);
        let (rd, gd, bd) = yuv_to_rgb(yq, uq as f64, vq as f64);
        let err = (rd - r).abs().max((gd - g).abs()).max((bd - b).abs());
        if err < best_err {
            best_err = err;
            best = (yq as u8, uq, vq);
        }
    }
    best
}

fn quantize_255(v: f32) -> u8 {
    ((v as f64) * 255.0).round().clamp(0.0, 255.0) as u8
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

/// Read `count` frames from a raw YUV file or image directory.
///
/// For raw formats the caller supplies the frame geometry; image directories
/// carry their own. Samples are converted to RGB float in [0,1].
pub fn read_sequence(
    path: &Path,
    format: SourceFormat,
    width: usize,
    height: usize,
    count: usize,
) -> Result<Sequence> {
    match format {
        SourceFormat::ImageDir => read_image_dir(path, count),
        raw => read_raw_yuv(path, raw, width, height, count),
    }
}

fn read_raw_yuv(
    path: &Path,
    format: SourceFormat,
    width: usize,
    height: usize,
    count: usize,
) -> Result<Sequence> {
    let data = fs::read(path).map_err(|e| CodecError::io(path, e))?;
    let stride = format.frame_bytes(width, height);
    let expected = (stride * count) as u64;
    if (data.len() as u64) < expected {
        return Err(CodecError::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            actual: data.len() as u64,
        });
    }
    let mut frames = Vec::with_capacity(count);
    for f in 0..count {
        let raw = &data[f * stride..(f + 1) * stride];
        frames.push(Frame::new(decode_yuv_frame(raw, format, width, height), f));
    }
    Ok(Sequence {
        frames,
        frame_rate: 30.0,
        source_format: format,
    })
}

fn decode_yuv_frame(raw: &[u8], format: SourceFormat, width: usize, height: usize) -> Tensor {
    let n = width * height;
    let mut px = Tensor::zeros(3, height, width);
    let (us, vs, cw) = match format {
        SourceFormat::Yuv444 => (&raw[n..2 * n], &raw[2 * n..3 * n], width),
        SourceFormat::Yuv420 => {
            let cn = (width / 2) * (height / 2);
            (&raw[n..n + cn], &raw[n + cn..n + 2 * cn], width / 2)
        }
        SourceFormat::ImageDir => unreachable!(),
    };
    for y in 0..height {
        for x in 0..width {
            let luma = raw[y * width + x] as f64;
            let ci = match format {
                SourceFormat::Yuv444 => y * cw + x,
                _ => (y / 2) * cw + x / 2,
            };
            let (r, g, b) = yuv_to_rgb(luma, us[ci] as f64, vs[ci] as f64);
            px.set(0, y, x, r as f32);
            px.set(1, y, x, g as f32);
            px.set(2, y, x, b as f32);
        }
    }
    px
}

fn read_image_dir(path: &Path, count: usize) -> Result<Sequence> {
    let mut entries: Vec<_> = fs::read_dir(path)
        .map_err(|e| CodecError::io(path, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("ppm")
            )
        })
        .collect();
    entries.sort();
    if entries.len() < count {
        return Err(CodecError::TruncatedFile {
            path: path.to_path_buf(),
            expected: count as u64,
            actual: entries.len() as u64,
        });
    }
    let mut frames = Vec::with_capacity(count);
    for (i, p) in entries.iter().take(count).enumerate() {
        frames.push(Frame::new(read_image(p)?, i));
    }
    Ok(Sequence {
        frames,
        frame_rate: 30.0,
        source_format: SourceFormat::ImageDir,
    })
}

/// Read a single PNG or PPM image as an RGB float tensor.
pub fn read_image(path: &Path) -> Result<Tensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => read_ppm(path),
        Some("png") => {
            let img = image::open(path)
                .map_err(|e| CodecError::UnsupportedFormat(format!("{}: {e}", path.display())))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let mut t = Tensor::zeros(3, h, w);
            for y in 0..h {
                for x in 0..w {
                    let p = img.get_pixel(x as u32, y as u32);
                    for c in 0..3 {
                        t.set(c, y, x, p.0[c] as f32 / 255.0);
                    }
                }
            }
            Ok(t)
        }
        other => Err(CodecError::UnsupportedFormat(format!("{other:?}"))),
    }
}

fn read_ppm(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CodecError::io(path, e))?;
    let corrupt = |m: &str| CodecError::UnsupportedFormat(format!("{}: {m}", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    if fields.len() < 4 || fields[0] != "P6" || fields[3] != "255" {
        return Err(corrupt("expected binary P6 ppm with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| corrupt("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| corrupt("bad height"))?;
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + w * h * 3 {
        return Err(CodecError::TruncatedFile {
            path: path.to_path_buf(),
            expected: (pos + w * h * 3) as u64,
            actual: bytes.len() as u64,
        });
    }
    let mut t = Tensor::zeros(3, h, w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                t.set(c, y, x, bytes[pos + (y * w + x) * 3 + c] as f32 / 255.0);
            }
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

/// Write a sequence in the given format; the inverse of [`read_sequence`]
/// up to 8-bit quantization.
pub fn write_sequence(seq: &Sequence, path: &Path, format: SourceFormat) -> Result<()> {
    if seq.is_empty() {
        return Err(CodecError::EmptyInput("write_sequence".into()));
    }
    match format {
        SourceFormat::ImageDir => {
            fs::create_dir_all(path).map_err(|e| CodecError::io(path, e))?;
            for frame in &seq.frames {
                let file = path.join(format!("{:04}.png", frame.index));
                write_png(&frame.pixels, &file)?;
            }
            Ok(())
        }
        raw => {
            let mut out = Vec::new();
            for frame in &seq.frames {
                encode_yuv_frame(&frame.pixels, raw, &mut out);
            }
            fs::write(path, out).map_err(|e| CodecError::io(path, e))
        }
    }
}

fn encode_yuv_frame(px: &Tensor, format: SourceFormat, out: &mut Vec<u8>) {
    let (_, h, w) = px.shape();
    let mut yp = vec![0u8; h * w];
    let mut up = vec![0u8; h * w];
    let mut vp = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let (yy, uu, vv) = rgb_to_yuv(
                px.at(0, y, x) as f64,
                px.at(1, y, x) as f64,
                px.at(2, y, x) as f64,
            );
            yp[y * w + x] = yy;
            up[y * w + x] = uu;
            vp[y * w + x] = vv;
        }
    }
    out.extend_from_slice(&yp);
    match format {
        SourceFormat::Yuv444 => {
            out.extend_from_slice(&up);
            out.extend_from_slice(&vp);
        }
        SourceFormat::Yuv420 => {
            // 2x2 box average per chroma plane
            for plane in [&up, &vp] {
                for cy in 0..h / 2 {
                    for cx in 0..w / 2 {
                        let s = plane[2 * cy * w + 2 * cx] as u32
                            + plane[2 * cy * w + 2 * cx + 1] as u32
                            + plane[(2 * cy + 1) * w + 2 * cx] as u32
                            + plane[(2 * cy + 1) * w + 2 * cx + 1] as u32;
                        out.push(((s + 2) / 4) as u8);
                    }
                }
            }
        }
        SourceFormat::ImageDir => unreachable!(),
    }
}

/// Write one frame as an 8-bit RGB PNG.
pub fn write_png(px: &Tensor, path: &Path) -> Result<()> {
    let (_, h, w) = px.shape();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            buf.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    quantize_255(px.at(0, y, x)),
                    quantize_255(px.at(1, y, x)),
                    quantize_255(px.at(2, y, x)),
                ]),
            );
        }
    }
    buf.save(path)
        .map_err(|e| CodecError::UnsupportedFormat(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

/// Replicate-pad right/bottom so both dims become multiples of `stride`.
pub fn pad_to_stride(px: &Tensor, stride: usize) -> (Tensor, PadInfo) {
    assert!(stride >= 1);
    let (c, h, w) = px.shape();
    let info = PadInfo {
        height: h,
        width: w,
    };
    let ph = h.div_ceil(stride) * stride;
    let pw = w.div_ceil(stride) * stride;
    if ph == h && pw == w {
        return (px.clone(), info);
    }
    let mut out = Tensor::zeros(c, ph, pw);
    for ch in 0..c {
        for y in 0..ph {
            let sy = y.min(h - 1);
            for x in 0..pw {
                let sx = x.min(w - 1);
                out.set(ch, y, x, px.at(ch, sy, sx));
            }
        }
    }
    (out, info)
}

/// Crop a padded tensor back to its original size.
pub fn crop_to(px: &Tensor, info: PadInfo) -> Tensor {
    let (c, h, w) = px.shape();
    if h == info.height && w == info.width {
        return px.clone();
    }
    let mut out = Tensor::zeros(c, info.height, info.width);
    for ch in 0..c {
        for y in 0..info.height {
            for x in 0..info.width {
                out.set(ch, y, x, px.at(ch, y, x));
            }
        }
    }
    out
}

/// Quantize a float frame to 8 bits and back; the identity for decoded frames.
pub fn quantize_frame_8bit(px: &Tensor) -> Tensor {
    px.map(|v| quantize_255(v) as f32 / 255.0)
}
