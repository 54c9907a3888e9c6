//! Quality metrics and RD-curve comparison: PSNR, multi-scale SSIM, and
//! BD-rate over piecewise-cubic-Hermite interpolated log-rate curves.

use crate::error::{CodecError, Result};
use crate::tensor::Tensor;

/// One point of a rate-distortion curve.
#[derive(Clone, Copy, Debug)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr_db: f64,
    pub msssim: f64,
}

/// Quality axis used for BD-rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QualityMetric {
    Psnr,
    MsSsim,
}

/// MS-SSIM mapped to a dB-like axis for BD-rate integration.
pub fn msssim_db(v: f64) -> f64 {
    -10.0 * (1.0 - v).max(1e-12).log10()
}

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

/// `10 log10(1 / MSE)` over [0,1] floats; +inf for identical inputs.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CodecError::ShapeMismatch(format!(
            "psnr: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    let mse = acc / a.numel() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

// ---------------------------------------------------------------------------
// MS-SSIM
// ---------------------------------------------------------------------------

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c) * (i as f64 - c)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Number of scales usable for a given geometry: the smallest dimension must
/// still fit the 11-tap window at the coarsest scale (176 px for 5 scales).
pub fn msssim_scales(height: usize, width: usize) -> usize {
    let min_dim = height.min(width);
    let mut scales = 0;
    for l in 1..=5usize {
        if (min_dim >> (l - 1)) >= SSIM_WINDOW {
            scales = l;
        }
    }
    scales
}

struct PlaneF64 {
    data: Vec<f64>,
    h: usize,
    w: usize,
}

fn blur_valid(p: &PlaneF64, k: &[f64]) -> PlaneF64 {
    let ow = p.w - k.len() + 1;
    let oh = p.h - k.len() + 1;
    let mut tmp = vec![0.0; p.h * ow];
    for y in 0..p.h {
        for ox in 0..ow {
            let mut s = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                s += p.data[y * p.w + ox + t] * kv;
            }
            tmp[y * ow + ox] = s;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                s += tmp[(oy + t) * ow + ox] * kv;
            }
            out[oy * ow + ox] = s;
        }
    }
    PlaneF64 {
        data: out,
        h: oh,
        w: ow,
    }
}

fn downsample2(p: &PlaneF64) -> PlaneF64 {
    let oh = p.h / 2;
    let ow = p.w / 2;
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = 0.25
                * (p.data[2 * y * p.w + 2 * x]
                    + p.data[2 * y * p.w + 2 * x + 1]
                    + p.data[(2 * y + 1) * p.w + 2 * x]
                    + p.data[(2 * y + 1) * p.w + 2 * x + 1]);
        }
    }
    PlaneF64 {
        data: out,
        h: oh,
        w: ow,
    }
}

/// Mean luminance*cs and mean cs of the SSIM map for one scale, averaged
/// over channels.
fn ssim_scale(a: &[PlaneF64], b: &[PlaneF64], k: &[f64]) -> (f64, f64) {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    let mut count = 0usize;
    for (pa, pb) in a.iter().zip(b) {
        let mu_a = blur_valid(pa, k);
        let mu_b = blur_valid(pb, k);
        let aa = PlaneF64 {
            data: pa.data.iter().map(|v| v * v).collect(),
            h: pa.h,
            w: pa.w,
        };
        let bb = PlaneF64 {
            data: pb.data.iter().map(|v| v * v).collect(),
            h: pb.h,
            w: pb.w,
        };
        let ab = PlaneF64 {
            data: pa.data.iter().zip(&pb.data).map(|(x, y)| x * y).collect(),
            h: pa.h,
            w: pa.w,
        };
        let e_aa = blur_valid(&aa, k);
        let e_bb = blur_valid(&bb, k);
        let e_ab = blur_valid(&ab, k);
        for i in 0..mu_a.data.len() {
            let ma = mu_a.data[i];
            let mb = mu_b.data[i];
            let va = e_aa.data[i] - ma * ma;
            let vb = e_bb.data[i] - mb * mb;
            let vab = e_ab.data[i] - ma * mb;
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let cs = (2.0 * vab + c2) / (va + vb + c2);
            ssim_sum += l * cs;
            cs_sum += cs;
            count += 1;
        }
    }
    (ssim_sum / count as f64, cs_sum / count as f64)
}

/// Multi-scale SSIM on RGB float frames in [0,1]. Uses up to 5 scales with
/// the canonical weights, renormalized when the geometry supports fewer.
pub fn ms_ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CodecError::ShapeMismatch(format!(
            "ms_ssim: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (c, h, w) = a.shape();
    let scales = msssim_scales(h, w);
    if scales == 0 {
        return Err(CodecError::InvalidArgument(format!(
            "ms_ssim: {h}x{w} is smaller than the {SSIM_WINDOW}-tap window"
        )));
    }
    let weight_sum: f64 = MS_WEIGHTS[..scales].iter().sum();
    let kernel = gaussian_kernel();
    let mut pa: Vec<PlaneF64> = (0..c)
        .map(|ch| PlaneF64 {
            data: a.plane(ch).iter().map(|&v| v as f64).collect(),
            h,
            w,
        })
        .collect();
    let mut pb: Vec<PlaneF64> = (0..c)
        .map(|ch| PlaneF64 {
            data: b.plane(ch).iter().map(|&v| v as f64).collect(),
            h,
            w,
        })
        .collect();

    let mut result = 1.0;
    #[allow(clippy::needless_range_loop)]
    for l in 0..scales {
        let (mssim, mcs) = ssim_scale(&pa, &pb, &kernel);
        let wgt = MS_WEIGHTS[l] / weight_sum;
        if l + 1 == scales {
            result *= mssim.max(0.0).powf(wgt);
        } else {
            result *= mcs.max(0.0).powf(wgt);
            pa = pa.iter().map(downsample2).collect();
            pb = pb.iter().map(downsample2).collect();
        }
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// BD-rate
// ---------------------------------------------------------------------------

/// Monotone piecewise-cubic-Hermite interpolant (Fritsch–Carlson slopes).
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Pchip> {
        let n = x.len();
        if n < 2 || n != y.len() {
            return Err(CodecError::InvalidArgument(
                "pchip needs >= 2 matched points".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CodecError::InvalidArgument(
                "pchip abscissae must be strictly increasing".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        m[0] = edge_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        let last = n - 1;
        m[last] = edge_slope(
            h[last - 1],
            if last >= 2 { h[last - 2] } else { h[last - 1] },
            delta[last - 1],
            if last >= 2 { delta[last - 2] } else { delta[last - 1] },
        );
        Ok(Pchip { x, y, m })
    }

    fn interval(&self, xv: f64) -> usize {
        let n = self.x.len();
        let mut i = match self.x.binary_search_by(|v| v.partial_cmp(&xv).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i >= n - 1 {
            i = n - 2;
        }
        i
    }

    pub fn eval(&self, xv: f64) -> f64 {
        let i = self.interval(xv);
        let h = self.x[i + 1] - self.x[i];
        let t = (xv - self.x[i]) / h;
        let (c0, c1, c2, c3) = self.coeffs(i, h);
        c0 + t * (c1 + t * (c2 + t * c3))
    }

    /// Cubic coefficients in the normalized variable t on interval i.
    fn coeffs(&self, i: usize, h: f64) -> (f64, f64, f64, f64) {
        let y0 = self.y[i];
        let y1 = self.y[i + 1];
        let m0 = self.m[i] * h;
        let m1 = self.m[i + 1] * h;
        let c0 = y0;
        let c1 = m0;
        let c2 = -3.0 * y0 + 3.0 * y1 - 2.0 * m0 - m1;
        let c3 = 2.0 * y0 - 2.0 * y1 + m0 + m1;
        (c0, c1, c2, c3)
    }

    /// Exact integral over `[a, b]` (inside the abscissa range).
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integrate(b, a);
        }
        let mut total = 0.0;
        let n = self.x.len();
        for i in 0..n - 1 {
            let lo = self.x[i].max(a);
            let hi = self.x[i + 1].min(b);
            if hi <= lo {
                continue;
            }
            let h = self.x[i + 1] - self.x[i];
            let ta = (lo - self.x[i]) / h;
            let tb = (hi - self.x[i]) / h;
            let (c0, c1, c2, c3) = self.coeffs(i, h);
            let anti = |t: f64| t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)));
            total += h * (anti(tb) - anti(ta));
        }
        total
    }
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // one-sided three-point estimate, clipped for shape preservation
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Average percent rate difference of `test` against `anchor` at equal
/// quality. Curves are `(rate, quality)` pairs; negative output means the
/// test codec saves bits.
pub fn bd_rate(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> Result<f64> {
    let prep = |pts: &[(f64, f64)]| -> Result<(Vec<f64>, Vec<f64>)> {
        if pts.len() < 4 {
            return Err(CodecError::InvalidArgument(
                "bd_rate needs at least 4 points per curve".into(),
            ));
        }
        let mut v: Vec<(f64, f64)> = pts.to_vec();
        v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if v.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(CodecError::InvalidArgument(
                "bd_rate requires strictly monotone quality".into(),
            ));
        }
        if v.iter().any(|p| p.0 <= 0.0) {
            return Err(CodecError::InvalidArgument(
                "bd_rate requires positive rates".into(),
            ));
        }
        Ok((
            v.iter().map(|p| p.1).collect(),
            v.iter().map(|p| p.0.log10()).collect(),
        ))
    };
    let (qa, ra) = prep(anchor)?;
    let (qt, rt) = prep(test)?;
    let lo = qa[0].max(qt[0]);
    let hi = qa[qa.len() - 1].min(qt[qt.len() - 1]);
    if hi <= lo {
        return Err(CodecError::InvalidArgument(
            "bd_rate curves have no overlapping quality range".into(),
        ));
    }
    let pa = Pchip::new(qa, ra)?;
    let pt = Pchip::new(qt, rt)?;
    let avg_diff = (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg_diff) - 1.0) * 100.0)
}
