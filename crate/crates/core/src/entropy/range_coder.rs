//! Binary range coder with 32-bit renormalization and carry handling, plus
//! the adaptive Laplace symbol layer used for all latents.
//!
//! Every element's Laplace model is quantized to a 16-bit-total frequency
//! table over a bounded alphabet around its mean; integers outside the
//! alphabet are escaped and written as raw 32-bit values. A 16-bit sentinel
//! terminates every stream so corrupt payloads or mismatched model
//! parameters are detected at decode time. The coder is strictly sequential
//! per stream; independent streams may be coded in parallel.

use crate::error::{CodecError, Result};

const TOTAL_BITS: u32 = 16;
const TOTAL: u32 = 1 << TOTAL_BITS;
const RENORM_LIMIT: u32 = 1 << 24;
const SENTINEL: u32 = 0xA55A;

// ---------------------------------------------------------------------------
// Core coder
// ---------------------------------------------------------------------------

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Encode a symbol occupying `[start, start+freq)` of the 16-bit total.
    pub fn encode(&mut self, start: u32, freq: u32) {
        debug_assert!(freq > 0 && start + freq <= TOTAL);
        let r = self.range >> TOTAL_BITS;
        self.low += start as u64 * r as u64;
        self.range = r * freq;
        while self.range < RENORM_LIMIT {
            self.shift_low();
            self.range <<= 8;
        }
    }

    /// Encode 16 raw bits with uniform probability.
    pub fn encode_bypass16(&mut self, value: u32) {
        debug_assert!(value < TOTAL);
        self.encode(value, 1);
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            self.out.push(self.cache.wrapping_add(carry));
            for _ in 1..self.cache_size {
                self.out.push(0xFFu8.wrapping_add(carry));
            }
            self.cache = (self.low >> 24) as u8;
            self.cache_size = 0;
        }
        self.cache_size += 1;
        self.low = (self.low << 8) & 0xFFFF_FFFF;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    data: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            data,
            pos: 1, // first byte is the encoder's initial zero cache
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        // reading past the end yields zeros; the sentinel catches truncation
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative frequency of the next symbol; pair with `update`.
    pub fn decode_freq(&mut self) -> u32 {
        let r = self.range >> TOTAL_BITS;
        (self.code / r).min(TOTAL - 1)
    }

    pub fn update(&mut self, start: u32, freq: u32) {
        let r = self.range >> TOTAL_BITS;
        self.code -= start * r;
        self.range = r * freq;
        while self.range < RENORM_LIMIT {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }

    pub fn decode_bypass16(&mut self) -> u32 {
        let v = self.decode_freq();
        self.update(v, 1);
        v
    }
}

// ---------------------------------------------------------------------------
// Laplace symbol layer
// ---------------------------------------------------------------------------

fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// Integer frequency table for one element: index 0 is the escape symbol,
/// indices 1.. map to integers `lo..=hi`. Frequencies are all >= 1 and sum
/// exactly to the 16-bit total, matching the 2^-16 probability floor.
struct SymbolModel {
    lo: i64,
    freqs: Vec<u32>,
    cum: Vec<u32>,
}

fn build_model(mu: f32, b: f32) -> SymbolModel {
    let m = mu as f64;
    let bb = (b.max(crate::entropy::B_MIN)) as f64;
    let half = ((bb * 16.0).ceil() as i64 + 2).clamp(4, 1024);
    let center = m.round() as i64;
    let lo = center - half;
    let hi = center + half;
    let count = (hi - lo + 1) as usize + 1;

    let mut pmf = vec![0.0f64; count];
    let mut in_range = 0.0;
    for (i, s) in (lo..=hi).enumerate() {
        let d = s as f64 - m;
        let p = laplace_cdf(d + 0.5, bb) - laplace_cdf(d - 0.5, bb);
        pmf[i + 1] = p.max(0.0);
        in_range += pmf[i + 1];
    }
    pmf[0] = (1.0 - in_range).max(1e-9); // escape carries the tail mass

    // largest-remainder quantization to TOTAL with a floor of 1 per symbol
    let budget = (TOTAL as usize - count) as f64;
    let mut freqs = vec![0u32; count];
    let mut rema: Vec<(f64, usize)> = Vec::with_capacity(count);
    let mut sum = 0u32;
    for (i, &p) in pmf.iter().enumerate() {
        let ideal = p * budget;
        let fl = ideal.floor();
        freqs[i] = fl as u32 + 1;
        sum += freqs[i];
        rema.push((ideal - fl, i));
    }
    let mut leftover = TOTAL - sum;
    rema.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut k = 0;
    while leftover > 0 {
        freqs[rema[k % rema.len()].1] += 1;
        leftover -= 1;
        k += 1;
    }

    let mut cum = vec![0u32; count + 1];
    for i in 0..count {
        cum[i + 1] = cum[i] + freqs[i];
    }
    debug_assert_eq!(cum[count], TOTAL);
    SymbolModel { lo, freqs, cum }
}

fn zigzag(v: i32) -> u32 {
    ((v << 1) ^ (v >> 31)) as u32
}

fn unzigzag(v: u32) -> i32 {
    ((v >> 1) as i32) ^ -((v & 1) as i32)
}

/// Encode one integer per (mu, b) element; lossless for any i32 values.
pub fn encode_laplace(symbols: &[i32], mu: &[f32], b: &[f32]) -> Vec<u8> {
    assert_eq!(symbols.len(), mu.len());
    assert_eq!(symbols.len(), b.len());
    let mut enc = RangeEncoder::new();
    for ((&q, &m), &s) in symbols.iter().zip(mu).zip(b) {
        let model = build_model(m, s);
        let q64 = q as i64;
        let hi = model.lo + model.freqs.len() as i64 - 2;
        if q64 >= model.lo && q64 <= hi {
            let idx = (q64 - model.lo) as usize + 1;
            enc.encode(model.cum[idx], model.freqs[idx]);
        } else {
            enc.encode(model.cum[0], model.freqs[0]);
            let zz = zigzag(q);
            enc.encode_bypass16(zz >> 16);
            enc.encode_bypass16(zz & 0xFFFF);
        }
    }
    enc.encode_bypass16(SENTINEL);
    enc.finish()
}

/// Decode `mu.len()` integers; the params must be identical to encoding.
pub fn decode_laplace(data: &[u8], mu: &[f32], b: &[f32]) -> Result<Vec<i32>> {
    assert_eq!(mu.len(), b.len());
    let mut dec = RangeDecoder::new(data);
    let mut out = Vec::with_capacity(mu.len());
    for (&m, &s) in mu.iter().zip(b) {
        let model = build_model(m, s);
        let f = dec.decode_freq();
        // cum is sorted; find the symbol bin containing f
        let idx = match model.cum.binary_search(&f) {
            Ok(i) => {
                // f equals a boundary: the symbol starting at that boundary
                if i == model.cum.len() - 1 {
                    i - 1
                } else {
                    i
                }
            }
            Err(i) => i - 1,
        };
        dec.update(model.cum[idx], model.freqs[idx]);
        if idx == 0 {
            let hi16 = dec.decode_bypass16();
            let lo16 = dec.decode_bypass16();
            out.push(unzigzag((hi16 << 16) | lo16));
        } else {
            out.push((model.lo + idx as i64 - 1) as i32);
        }
    }
    let sentinel = dec.decode_bypass16();
    if sentinel != SENTINEL {
        return Err(CodecError::CorruptBitstream(format!(
            "sentinel mismatch (got {sentinel:#06x}): corrupt payload or wrong model parameters"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_laplace(rng: &mut ChaCha8Rng, b: f64) -> i32 {
        let u: f64 = rng.gen_range(-0.4999..0.4999);
        (-b * (1.0 - 2.0 * u.abs()).ln() * u.signum()).round() as i32
    }

    #[test]
    fn round_trip_small() {
        let symbols = vec![0, 1, -1, 5, -7, 100, -200, 0, 3];
        let mu = vec![0.0f32; 9];
        let b = vec![1.5f32; 9];
        let bytes = encode_laplace(&symbols, &mu, &b);
        let back = decode_laplace(&bytes, &mu, &b).unwrap();
        assert_eq!(back, symbols);
    }

    #[test]
    fn round_trip_10k_random_laplace() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 10_000;
        let mut symbols = Vec::with_capacity(n);
        let mut mu = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let scale = rng.gen_range(0.05f32..4.0);
            let mean = rng.gen_range(-3.0f32..3.0);
            mu.push(mean);
            b.push(scale);
            symbols.push(mean.round() as i32 + sample_laplace(&mut rng, scale as f64));
        }
        let bytes = encode_laplace(&symbols, &mu, &b);
        let back = decode_laplace(&bytes, &mu, &b).unwrap();
        assert_eq!(back, symbols);
    }

    #[test]
    fn escape_path_handles_extreme_values() {
        let symbols = vec![i32::MAX, i32::MIN, 1_000_000, -999_999];
        let mu = vec![0.0f32; 4];
        let b = vec![0.01f32; 4];
        let bytes = encode_laplace(&symbols, &mu, &b);
        let back = decode_laplace(&bytes, &mu, &b).unwrap();
        assert_eq!(back, symbols);
    }

    #[test]
    fn empty_grid_is_tiny_and_decodes_to_empty() {
        let bytes = encode_laplace(&[], &[], &[]);
        assert!(bytes.len() <= 8, "empty stream is {} bytes", bytes.len());
        let back = decode_laplace(&bytes, &[], &[]).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn corrupt_byte_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let symbols: Vec<i32> = (0..n).map(|_| sample_laplace(&mut rng, 1.0)).collect();
        let mu = vec![0.0f32; n];
        let b = vec![1.0f32; n];
        let bytes = encode_laplace(&symbols, &mu, &b);
        // flip consumed payload bytes (the flush tail carries slack bits the
        // decoder may never read)
        for flip in [bytes.len() / 4, bytes.len() / 3, bytes.len() / 2] {
            let mut bad = bytes.clone();
            bad[flip] ^= 0x40;
            match decode_laplace(&bad, &mu, &b) {
                Err(_) => {}
                Ok(decoded) => assert_ne!(decoded, symbols, "corruption went unnoticed"),
            }
        }
    }

    #[test]
    fn mismatched_params_are_detected() {
        let symbols = vec![1, -2, 3, 0, 0, 4, -4, 2];
        let mu = vec![0.0f32; 8];
        let b = vec![1.0f32; 8];
        let bytes = encode_laplace(&symbols, &mu, &b);
        let wrong_b = vec![2.5f32; 8];
        match decode_laplace(&bytes, &mu, &wrong_b) {
            Err(_) => {}
            Ok(decoded) => assert_ne!(decoded, symbols),
        }
    }

    #[test]
    fn actual_bytes_track_estimated_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..10 {
            let n = 2000 + case * 500;
            let mut symbols = Vec::with_capacity(n);
            let mut mu = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            for _ in 0..n {
                let scale = rng.gen_range(0.2f32..3.0);
                mu.push(rng.gen_range(-1.0f32..1.0));
                b.push(scale);
                symbols.push(sample_laplace(&mut rng, scale as f64));
            }
            let q = crate::tensor::Tensor::from_vec(
                1,
                1,
                n,
                symbols.iter().map(|&v| v as f32).collect(),
            );
            let params = crate::entropy::LaplaceParams::new(
                crate::tensor::Tensor::from_vec(1, 1, n, mu.clone()),
                crate::tensor::Tensor::from_vec(1, 1, n, b.clone()),
            );
            let est = crate::entropy::laplace_bits(&q, &params).bits;
            let bytes = encode_laplace(&symbols, &mu, &b);
            let actual = bytes.len() as f64 * 8.0;
            assert!(
                (actual - est).abs() <= 0.02 * est + 256.0,
                "estimate {est:.1} vs actual {actual:.1}"
            );
        }
    }
}
