//! Conditional contextual frame codec: the encoder concatenates the
//! multi-scale temporal contexts with its intermediate features at strides
//! 1, 2, and 4 while mapping the frame to a 1/16-resolution latent; the
//! decoder mirrors it and the frame generator emits the reconstruction plus
//! the reference feature propagated to the next frame.
//!
//! Intra frames use a verbatim 8-bit payload, keeping bpp accounting honest
//! while the learned path stays focused on inter coding.

use crate::config::ModelConfig;
use crate::context::{ContextNodes, ContextSet};
use crate::entropy::{HyperScales, LaplaceParams, ParamPredictor};
use crate::error::{CodecError, Result};
use crate::graph::{NodeId, ParamStore, Tape};
use crate::nn::{Conv2d, Init, ResBlock, UpBlock};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Quantized contextual latent plus its coding parameters.
#[derive(Clone, Debug)]
pub struct FrameLatent {
    /// `[C_y, H/16, W/16]`
    pub y: Tensor,
    /// `[C_h, H/64, W/64]`
    pub hyper: Tensor,
    pub params: LaplaceParams,
}

/// Decoded frame and the reference feature for the next frame.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Pixels clamped to [0,1], at padded dimensions.
    pub frame: Tensor,
    /// `[C_f, H, W]`
    pub feature: Tensor,
}

pub struct FrameCodec {
    enc0: Conv2d,
    enc0_res: ResBlock,
    enc1: Conv2d,
    enc1_res: ResBlock,
    enc2: Conv2d,
    enc2_res: ResBlock,
    enc3: Conv2d,
    hyper_enc1: Conv2d,
    hyper_enc2: Conv2d,
    hyper_dec1: Conv2d,
    hyper_dec2: Conv2d,
    temporal1: Conv2d,
    temporal2: Conv2d,
    predictor: ParamPredictor,
    dec0: UpBlock,
    dec1: UpBlock,
    dec1_fuse: Conv2d,
    dec1_res: ResBlock,
    dec2: UpBlock,
    dec2_fuse: Conv2d,
    dec2_res: ResBlock,
    dec3: UpBlock,
    gen_fuse: Conv2d,
    gen_res: ResBlock,
    head: Conv2d,
    pub hyper_scales: HyperScales,
    cf: usize,
    cy: usize,
}

impl FrameCodec {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let cf = cfg.cf;
        let cy = cfg.cy;
        let ch = cfg.ch;
        FrameCodec {
            enc0: Conv2d::new(store, &format!("{name}.enc0"), 3 + cf, 2 * cf, 3, 2, Init::He, rng),
            enc0_res: ResBlock::new(store, &format!("{name}.enc0_res"), 2 * cf, rng),
            enc1: Conv2d::new(store, &format!("{name}.enc1"), 4 * cf, 2 * cf, 3, 2, Init::He, rng),
            enc1_res: ResBlock::new(store, &format!("{name}.enc1_res"), 2 * cf, rng),
            enc2: Conv2d::new(store, &format!("{name}.enc2"), 6 * cf, cy, 3, 2, Init::He, rng),
            enc2_res: ResBlock::new(store, &format!("{name}.enc2_res"), cy, rng),
            enc3: Conv2d::new(store, &format!("{name}.enc3"), cy, cy, 3, 2, Init::He, rng),
            hyper_enc1: Conv2d::new(store, &format!("{name}.henc1"), cy, ch, 3, 2, Init::He, rng),
            hyper_enc2: Conv2d::new(store, &format!("{name}.henc2"), ch, ch, 3, 2, Init::He, rng),
            hyper_dec1: Conv2d::new(store, &format!("{name}.hdec1"), ch, ch, 3, 1, Init::He, rng),
            hyper_dec2: Conv2d::new(store, &format!("{name}.hdec2"), ch, cy, 3, 1, Init::He, rng),
            temporal1: Conv2d::new(store, &format!("{name}.temporal1"), 4 * cf, cy, 3, 2, Init::He, rng),
            temporal2: Conv2d::new(store, &format!("{name}.temporal2"), cy, cy, 3, 2, Init::He, rng),
            predictor: ParamPredictor::new(store, &format!("{name}.pred"), cy, Some(cy), cy, rng),
            dec0: UpBlock::new(store, &format!("{name}.dec0"), cy, cy, rng),
            dec1: UpBlock::new(store, &format!("{name}.dec1"), cy, 2 * cf, rng),
            dec1_fuse: Conv2d::new(store, &format!("{name}.dec1_fuse"), 6 * cf, 2 * cf, 3, 1, Init::He, rng),
            dec1_res: ResBlock::new(store, &format!("{name}.dec1_res"), 2 * cf, rng),
            dec2: UpBlock::new(store, &format!("{name}.dec2"), 2 * cf, 2 * cf, rng),
            dec2_fuse: Conv2d::new(store, &format!("{name}.dec2_fuse"), 4 * cf, cf, 3, 1, Init::He, rng),
            dec2_res: ResBlock::new(store, &format!("{name}.dec2_res"), cf, rng),
            dec3: UpBlock::new(store, &format!("{name}.dec3"), cf, cf, rng),
            gen_fuse: Conv2d::new(store, &format!("{name}.gen_fuse"), 2 * cf, cf, 3, 1, Init::He, rng),
            gen_res: ResBlock::new(store, &format!("{name}.gen_res"), cf, rng),
            head: Conv2d::new(store, &format!("{name}.head"), cf, 3, 3, 1, Init::He, rng),
            hyper_scales: HyperScales::new(store, &format!("{name}.hyper_scales"), ch),
            cf,
            cy,
        }
    }

    /// Analysis transform with context injection at strides 1, 2, and 4.
    pub fn analyze(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        frame: NodeId,
        ctx: &ContextNodes,
    ) -> NodeId {
        let in0 = tape.concat(&[frame, ctx.c0]);
        let h = self.enc0.forward(tape, store, in0);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.enc0_res.forward(tape, store, h);
        let in1 = tape.concat(&[h, ctx.c1]);
        let h = self.enc1.forward(tape, store, in1);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.enc1_res.forward(tape, store, h);
        let in2 = tape.concat(&[h, ctx.c2]);
        let h = self.enc2.forward(tape, store, in2);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.enc2_res.forward(tape, store, h);
        self.enc3.forward(tape, store, h)
    }

    pub fn hyper_analyze(&self, tape: &mut Tape, store: &ParamStore, y: NodeId) -> NodeId {
        let h = self.hyper_enc1.forward(tape, store, y);
        let h = tape.leaky_relu(h, 0.1);
        self.hyper_enc2.forward(tape, store, h)
    }

    pub fn hyper_synthesize(&self, tape: &mut Tape, store: &ParamStore, hyper_q: NodeId) -> NodeId {
        let (_, h, w) = tape.value(hyper_q).shape();
        let up1 = tape.resize_bilinear(hyper_q, h * 2, w * 2);
        let f = self.hyper_dec1.forward(tape, store, up1);
        let f = tape.leaky_relu(f, 0.1);
        let (_, h2, w2) = tape.value(f).shape();
        let up2 = tape.resize_bilinear(f, h2 * 2, w2 * 2);
        let f = self.hyper_dec2.forward(tape, store, up2);
        tape.leaky_relu(f, 0.1)
    }

    /// Conditional temporal prior derived from the coarsest context.
    pub fn temporal_prior(&self, tape: &mut Tape, store: &ParamStore, c2: NodeId) -> NodeId {
        let h = self.temporal1.forward(tape, store, c2);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.temporal2.forward(tape, store, h);
        tape.leaky_relu(h, 0.1)
    }

    /// Laplace parameters for the contextual latent (hyper + temporal).
    pub fn params(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        hyper_feat: NodeId,
        temporal: NodeId,
    ) -> (NodeId, NodeId) {
        self.predictor.forward(tape, store, hyper_feat, Some(temporal))
    }

    /// Synthesis + frame generation. Returns the unclamped frame node and
    /// the reference feature node tapped from the penultimate stage.
    pub fn synthesize(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        y_q: NodeId,
        ctx: &ContextNodes,
    ) -> (NodeId, NodeId) {
        let h = self.dec0.forward(tape, store, y_q);
        let h = self.dec1.forward(tape, store, h);
        let h = tape.concat(&[h, ctx.c2]);
        let h = self.dec1_fuse.forward(tape, store, h);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.dec1_res.forward(tape, store, h);
        let h = self.dec2.forward(tape, store, h);
        let h = tape.concat(&[h, ctx.c1]);
        let h = self.dec2_fuse.forward(tape, store, h);
        let h = tape.leaky_relu(h, 0.1);
        let h = self.dec2_res.forward(tape, store, h);
        let h = self.dec3.forward(tape, store, h);
        let h = tape.concat(&[h, ctx.c0]);
        let h = self.gen_fuse.forward(tape, store, h);
        let h = tape.leaky_relu(h, 0.1);
        let feature = self.gen_res.forward(tape, store, h);
        let frame = self.head.forward(tape, store, feature);
        (frame, feature)
    }

    /// Encode a padded frame against the given contexts (pure wrapper).
    pub fn encode_frame(
        &self,
        store: &ParamStore,
        frame: &Tensor,
        ctx: &ContextSet,
        train_seed: Option<u64>,
    ) -> Result<FrameLatent> {
        let (c, h, w) = frame.shape();
        if c != 3 || h % 64 != 0 || w % 64 != 0 {
            return Err(CodecError::InvalidArgument(format!(
                "encode_frame: frame {c}x{h}x{w} must be 3-channel with dims multiples of 64"
            )));
        }
        if ctx.c0.shape() != (self.cf, h, w) {
            return Err(CodecError::ShapeMismatch(format!(
                "encode_frame: context c0 {:?} vs frame {h}x{w}",
                ctx.c0.shape()
            )));
        }
        let mut tape = match train_seed {
            Some(s) => Tape::new_train(s),
            None => Tape::new_infer(),
        };
        let x = tape.leaf(frame.clone());
        let nodes = leaf_contexts(&mut tape, ctx);
        let y = self.analyze(&mut tape, store, x, &nodes);
        let y_q = tape.quantize(y);
        let hyper = self.hyper_analyze(&mut tape, store, y);
        let hyper_q = tape.quantize(hyper);
        let feat = self.hyper_synthesize(&mut tape, store, hyper_q);
        let temporal = self.temporal_prior(&mut tape, store, nodes.c2);
        let (mu, b) = self.params(&mut tape, store, feat, temporal);
        Ok(FrameLatent {
            y: tape.value(y_q).clone(),
            hyper: tape.value(hyper_q).clone(),
            params: LaplaceParams::new(tape.value(mu).clone(), tape.value(b).clone()),
        })
    }

    /// Decode a latent against the same contexts (pure wrapper).
    pub fn decode_frame(
        &self,
        store: &ParamStore,
        latent: &FrameLatent,
        ctx: &ContextSet,
    ) -> Result<Reconstruction> {
        let (c, lh, lw) = latent.y.shape();
        if c != self.cy || ctx.c0.shape() != (self.cf, lh * 16, lw * 16) {
            return Err(CodecError::ShapeMismatch(format!(
                "decode_frame: latent {:?} vs context c0 {:?}",
                latent.y.shape(),
                ctx.c0.shape()
            )));
        }
        let mut tape = Tape::new_infer();
        let y = tape.leaf(latent.y.clone());
        let nodes = leaf_contexts(&mut tape, ctx);
        let (frame, feature) = self.synthesize(&mut tape, store, y, &nodes);
        Ok(Reconstruction {
            frame: tape.value(frame).clamp(0.0, 1.0),
            feature: tape.value(feature).clone(),
        })
    }
}

fn leaf_contexts(tape: &mut Tape, ctx: &ContextSet) -> ContextNodes {
    ContextNodes {
        c0: tape.leaf(ctx.c0.clone()),
        c1: tape.leaf(ctx.c1.clone()),
        c2: tape.leaf(ctx.c2.clone()),
    }
}

// ---------------------------------------------------------------------------
// Intra path
// ---------------------------------------------------------------------------

/// Store the 8-bit frame verbatim: u16 width, u16 height (big-endian), then
/// interleaved RGB bytes.
pub fn intra_encode(frame: &Tensor) -> Vec<u8> {
    let (_, h, w) = frame.shape();
    let mut out = Vec::with_capacity(4 + h * w * 3);
    out.extend_from_slice(&(w as u16).to_be_bytes());
    out.extend_from_slice(&(h as u16).to_be_bytes());
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(((frame.at(c, y, x) as f64) * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Inverse of [`intra_encode`].
pub fn intra_decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 4 {
        return Err(CodecError::CorruptBitstream("intra payload too short".into()));
    }
    let w = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let h = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
    let expected = 4 + w * h * 3;
    if bytes.len() != expected {
        return Err(CodecError::CorruptBitstream(format!(
            "intra payload length {} does not match header ({expected})",
            bytes.len()
        )));
    }
    let mut t = Tensor::zeros(3, h, w);
    let mut i = 4;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                t.set(c, y, x, bytes[i] as f32 / 255.0);
                i += 1;
            }
        }
    }
    Ok(t)
}
