//! Quantization, Laplace probability modeling, bit-rate estimation, and the
//! range coder producing real byte streams.
//!
//! Latents are modeled as element-wise Laplace with parameters predicted
//! from a hyper prior (plus a conditional temporal prior for the contextual
//! latent). Hyper latents use learned per-channel zero-mean Laplace scales.
//! Probabilities integrate the density over unit bins and are floored at
//! 2^-16, which also bounds the per-element bit cost at 16 bits.

pub mod range_coder;

use crate::error::{CodecError, Result};
use crate::graph::{NodeId, ParamId, ParamStore, Tape, PROB_FLOOR};
use crate::nn::{Conv2d, Init};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum Laplace scale.
pub const B_MIN: f32 = 0.01;

/// Per-element Laplace parameters for one latent grid.
#[derive(Clone, Debug)]
pub struct LaplaceParams {
    pub mu: Tensor,
    pub b: Tensor,
}

impl LaplaceParams {
    /// Clamps the scale to `B_MIN` on construction.
    pub fn new(mu: Tensor, b: Tensor) -> Self {
        assert_eq!(mu.shape(), b.shape(), "laplace params shape mismatch");
        LaplaceParams {
            mu,
            b: b.map(|v| v.max(B_MIN)),
        }
    }

    /// Zero-mean params with one scale per channel.
    pub fn per_channel(scales: &[f32], h: usize, w: usize) -> Self {
        let c = scales.len();
        let mut b = Tensor::zeros(c, h, w);
        for (ch, &s) in scales.iter().enumerate() {
            b.plane_mut(ch).fill(s.max(B_MIN));
        }
        LaplaceParams {
            mu: Tensor::zeros(c, h, w),
            b,
        }
    }
}

/// Estimated bit cost.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BitEstimate {
    pub bits: f64,
}

impl std::ops::Add for BitEstimate {
    type Output = BitEstimate;
    fn add(self, rhs: BitEstimate) -> BitEstimate {
        BitEstimate {
            bits: self.bits + rhs.bits,
        }
    }
}

/// Quantize at inference: round to nearest integer, ties to even.
pub fn quantize_infer(v: &Tensor) -> Tensor {
    v.round_ties_even()
}

/// Quantize for training: add seeded uniform noise in (-0.5, 0.5).
pub fn quantize_train(v: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = v.shape();
    let noise = Tensor::from_vec(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    );
    v.zip_map(&noise, |a, n| a + n)
}

fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// Probability of the unit bin around integer `q`, floored at 2^-16.
pub fn bin_probability(q: f64, mu: f64, b: f64) -> f64 {
    let d = q - mu;
    let p = laplace_cdf(d + 0.5, b) - laplace_cdf(d - 0.5, b);
    p.max(PROB_FLOOR)
}

/// Total bits to code `q` under `params`, summed in f64.
pub fn laplace_bits(q: &Tensor, params: &LaplaceParams) -> BitEstimate {
    assert_eq!(q.shape(), params.mu.shape(), "laplace_bits shape mismatch");
    let ln2 = std::f64::consts::LN_2;
    let mut bits = 0.0;
    for ((&qv, &mv), &bv) in q.data().iter().zip(params.mu.data()).zip(params.b.data()) {
        bits += -bin_probability(qv as f64, mv as f64, bv as f64).ln() / ln2;
    }
    BitEstimate { bits }
}

/// Sum of [`laplace_bits`] over several (latent, params) pairs.
pub fn estimate_rate(parts: &[(&Tensor, &LaplaceParams)]) -> BitEstimate {
    parts
        .iter()
        .fold(BitEstimate::default(), |acc, (q, p)| acc + laplace_bits(q, p))
}

/// Learned head mapping hyper (and optionally temporal) features to
/// per-element Laplace parameters.
pub struct ParamPredictor {
    conv1: Conv2d,
    conv2: Conv2d,
    latent_ch: usize,
    expects_temporal: bool,
}

impl ParamPredictor {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        hyper_ch: usize,
        temporal_ch: Option<usize>,
        latent_ch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let in_ch = hyper_ch + temporal_ch.unwrap_or(0);
        ParamPredictor {
            conv1: Conv2d::new(
                store,
                &format!("{name}.conv1"),
                in_ch,
                2 * latent_ch,
                3,
                1,
                Init::He,
                rng,
            ),
            conv2: Conv2d::new(
                store,
                &format!("{name}.conv2"),
                2 * latent_ch,
                2 * latent_ch,
                3,
                1,
                Init::He,
                rng,
            ),
            latent_ch,
            expects_temporal: temporal_ch.is_some(),
        }
    }

    /// Returns `(mu, b)` nodes with `b = max(softplus(raw), B_MIN)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        hyper_feat: NodeId,
        temporal: Option<NodeId>,
    ) -> (NodeId, NodeId) {
        assert_eq!(
            temporal.is_some(),
            self.expects_temporal,
            "temporal prior presence must match construction"
        );
        let inp = match temporal {
            Some(t) => tape.concat(&[hyper_feat, t]),
            None => hyper_feat,
        };
        let h = self.conv1.forward(tape, store, inp);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.conv2.forward(tape, store, h);
        let mu = tape.slice_c(h, 0, self.latent_ch);
        let raw_b = tape.slice_c(h, self.latent_ch, self.latent_ch);
        let sp = tape.softplus(raw_b);
        let b = tape.clamp_min(sp, B_MIN);
        (mu, b)
    }
}

/// Learned per-channel scales for a factorized hyper-latent model.
pub struct HyperScales {
    pub param: ParamId,
}

impl HyperScales {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        // softplus(0.54) ~ 1.0: start near unit scale
        HyperScales {
            param: store.register(name, Tensor::filled(channels, 1, 1, 0.54)),
        }
    }

    /// Scale node broadcast to the latent grid, for rate terms on the tape.
    pub fn node(&self, tape: &mut Tape, store: &ParamStore, h: usize, w: usize) -> NodeId {
        let p = tape.param(store, self.param);
        let sp = tape.softplus(p);
        let cl = tape.clamp_min(sp, B_MIN);
        tape.broadcast_c(cl, h, w)
    }

    /// Concrete per-channel scales, identical math to the tape path.
    pub fn values(&self, store: &ParamStore) -> Vec<f32> {
        let mut tape = Tape::new_infer();
        let p = tape.param(store, self.param);
        let sp = tape.softplus(p);
        let cl = tape.clamp_min(sp, B_MIN);
        tape.value(cl).data().to_vec()
    }
}

/// Encode an integer grid under per-element Laplace params.
pub fn encode_grid(q: &Tensor, params: &LaplaceParams) -> Vec<u8> {
    let sym: Vec<i32> = q.data().iter().map(|&v| v as i32).collect();
    range_coder::encode_laplace(&sym, params.mu.data(), params.b.data())
}

/// Decode an integer grid; params must match the encoder's exactly.
pub fn decode_grid(bytes: &[u8], params: &LaplaceParams) -> Result<Tensor> {
    let (c, h, w) = params.mu.shape();
    let sym = range_coder::decode_laplace(bytes, params.mu.data(), params.b.data())?;
    if sym.len() != c * h * w {
        return Err(CodecError::CorruptBitstream("symbol count mismatch".into()));
    }
    Ok(Tensor::from_vec(
        c,
        h,
        w,
        sym.into_iter().map(|v| v as f32).collect(),
    ))
}
