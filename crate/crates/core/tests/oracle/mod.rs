//! Independent f64 scalar-loop oracles used to verify the f32 kernels.
//! These deliberately re-derive the math from the definitions rather than
//! calling into the library.

/// Bilinear resize with half-pixel centers and clamped sampling.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let sy = (oy as f64 + 0.5) * (h as f64 / oh as f64) - 0.5;
            let sx = (ox as f64 + 0.5) * (w as f64 / ow as f64) - 0.5;
            out[oy * ow + ox] = sample_bilinear(src, h, w, sy, sx);
        }
    }
    out
}

/// One clamped bilinear sample at continuous coordinates (y, x).
pub fn sample_bilinear(src: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let cy0 = (y0 as isize).clamp(0, h as isize - 1) as usize;
    let cy1 = (y0 as isize + 1).clamp(0, h as isize - 1) as usize;
    let cx0 = (x0 as isize).clamp(0, w as isize - 1) as usize;
    let cx1 = (x0 as isize + 1).clamp(0, w as isize - 1) as usize;
    (1.0 - fy) * ((1.0 - fx) * src[cy0 * w + cx0] + fx * src[cy0 * w + cx1])
        + fy * ((1.0 - fx) * src[cy1 * w + cx0] + fx * src[cy1 * w + cx1])
}

/// Backward warp: out(p) = bilinear(src, p + flow(p)), replicate borders.
/// `dx`, `dy` are the two flow planes.
pub fn warp(src: &[f64], h: usize, w: usize, dx: &[f64], dy: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out[i] = sample_bilinear(src, h, w, y as f64 + dy[i], x as f64 + dx[i]);
        }
    }
    out
}

/// Structure component: bilinear down by `factor` then back up.
pub fn sdd_structure(src: &[f64], h: usize, w: usize, factor: usize) -> Vec<f64> {
    let down = resize_bilinear(src, h, w, h / factor, w / factor);
    resize_bilinear(&down, h / factor, w / factor, h, w)
}

/// Laplace bin cost in bits via an algebraically different route than the
/// library (explicit piecewise bin-mass formulas rather than CDF
/// differences), floored at 2^-16.
pub fn laplace_bits(q: f64, mu: f64, b: f64) -> f64 {
    let d = (q - mu).abs();
    // mass of [d-0.5, d+0.5] under Laplace(0, b), exploiting symmetry
    let p = if d >= 0.5 {
        // entirely in one tail: e^(-(d-1/2)/b)/2 - e^(-(d+1/2)/b)/2
        0.5 * ((-(d - 0.5) / b).exp() - (-(d + 0.5) / b).exp())
    } else {
        // straddles the mode
        1.0 - 0.5 * ((-(0.5 - d) / b).exp() + (-(0.5 + d) / b).exp())
    };
    -p.max(1.0 / 65536.0).log2()
}
