//! Joint compression of the structure and detail motion fields into one
//! quantized latent with a hyper prior.
//!
//! The two flows are concatenated channel-wise (4 input channels) and
//! transformed by four stride-2 residual downsampling blocks to a latent at
//! 1/16 resolution; the hyper branch adds two more halvings (1/64). The
//! synthesis path mirrors the analysis with resize-conv upsampling and
//! reconstructs both flow fields at once.

use crate::config::ModelConfig;
use crate::entropy::{HyperScales, LaplaceParams, ParamPredictor};
use crate::error::{CodecError, Result};
use crate::flow::{FlowField, FlowKind};
use crate::graph::{NodeId, ParamStore, Tape};
use crate::nn::{Conv2d, DownBlock, Init, UpBlock};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Quantized motion latent plus everything needed to entropy-code it.
#[derive(Clone, Debug)]
pub struct MotionLatent {
    /// Quantized latent, `[C_m, H/16, W/16]`.
    pub y: Tensor,
    /// Quantized hyper latent, `[C_h, H/64, W/64]`.
    pub hyper: Tensor,
    /// Laplace parameters used to code `y` (derived from `hyper`).
    pub params: LaplaceParams,
}

pub struct MotionCodec {
    analysis: [DownBlock; 4],
    hyper_enc1: Conv2d,
    hyper_enc2: Conv2d,
    hyper_dec1: Conv2d,
    hyper_dec2: Conv2d,
    predictor: ParamPredictor,
    synthesis: [UpBlock; 4],
    head: Conv2d,
    pub hyper_scales: HyperScales,
    cm: usize,
    ch: usize,
}

impl MotionCodec {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let cm = cfg.cm;
        let ch = cfg.ch;
        let half = cm / 2;
        MotionCodec {
            analysis: [
                DownBlock::new(store, &format!("{name}.enc0"), 4, half, rng),
                DownBlock::new(store, &format!("{name}.enc1"), half, half, rng),
                DownBlock::new(store, &format!("{name}.enc2"), half, cm, rng),
                DownBlock::new(store, &format!("{name}.enc3"), cm, cm, rng),
            ],
            hyper_enc1: Conv2d::new(store, &format!("{name}.henc1"), cm, ch, 3, 2, Init::He, rng),
            hyper_enc2: Conv2d::new(store, &format!("{name}.henc2"), ch, ch, 3, 2, Init::He, rng),
            hyper_dec1: Conv2d::new(store, &format!("{name}.hdec1"), ch, ch, 3, 1, Init::He, rng),
            hyper_dec2: Conv2d::new(store, &format!("{name}.hdec2"), ch, cm, 3, 1, Init::He, rng),
            predictor: ParamPredictor::new(store, &format!("{name}.pred"), cm, None, cm, rng),
            synthesis: [
                UpBlock::new(store, &format!("{name}.dec0"), cm, cm, rng),
                UpBlock::new(store, &format!("{name}.dec1"), cm, half, rng),
                UpBlock::new(store, &format!("{name}.dec2"), half, half, rng),
                UpBlock::new(store, &format!("{name}.dec3"), half, half.max(8), rng),
            ],
            head: Conv2d::new(store, &format!("{name}.head"), half.max(8), 4, 3, 1, Init::He, rng),
            hyper_scales: HyperScales::new(store, &format!("{name}.hyper_scales"), ch),
            cm,
            ch,
        }
    }

    pub fn latent_channels(&self) -> usize {
        self.cm
    }

    pub fn hyper_channels(&self) -> usize {
        self.ch
    }

    /// Analysis transform: two flows to the pre-quantization latent.
    pub fn analyze(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        flow_s: NodeId,
        flow_d: NodeId,
    ) -> NodeId {
        let mut h = tape.concat(&[flow_s, flow_d]);
        for block in &self.analysis {
            h = block.forward(tape, store, h);
        }
        h
    }

    pub fn hyper_analyze(&self, tape: &mut Tape, store: &ParamStore, y: NodeId) -> NodeId {
        let h = self.hyper_enc1.forward(tape, store, y);
        let h = tape.leaky_relu(h, 0.1);
        self.hyper_enc2.forward(tape, store, h)
    }

    /// Hyper synthesis up to the feature grid aligned with the latent.
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

    /// Laplace parameters for the motion latent (hyper prior only).
    pub fn params(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        hyper_feat: NodeId,
    ) -> (NodeId, NodeId) {
        self.predictor.forward(tape, store, hyper_feat, None)
    }

    /// Synthesis transform: quantized latent back to the two flows.
    pub fn synthesize(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        y_q: NodeId,
    ) -> (NodeId, NodeId) {
        let mut h = y_q;
        for block in &self.synthesis {
            h = block.forward(tape, store, h);
        }
        let out = self.head.forward(tape, store, h);
        let vs = tape.slice_c(out, 0, 2);
        let vd = tape.slice_c(out, 2, 2);
        (vs, vd)
    }

    /// Encode two flows into a quantized motion latent (pure wrapper).
    /// `train_seed: Some(s)` uses additive-noise quantization.
    pub fn encode_motion(
        &self,
        store: &ParamStore,
        flow_s: &FlowField,
        flow_d: &FlowField,
        train_seed: Option<u64>,
    ) -> Result<MotionLatent> {
        if flow_s.vectors.shape() != flow_d.vectors.shape() {
            return Err(CodecError::ShapeMismatch(
                "encode_motion: flow shape mismatch".into(),
            ));
        }
        let (_, h, w) = flow_s.vectors.shape();
        if h % 64 != 0 || w % 64 != 0 {
            return Err(CodecError::InvalidArgument(format!(
                "encode_motion: dims {h}x{w} must be multiples of 64"
            )));
        }
        let mut tape = match train_seed {
            Some(s) => Tape::new_train(s),
            None => Tape::new_infer(),
        };
        let vs = tape.leaf(flow_s.vectors.clone());
        let vd = tape.leaf(flow_d.vectors.clone());
        let y = self.analyze(&mut tape, store, vs, vd);
        let y_q = tape.quantize(y);
        let hyper = self.hyper_analyze(&mut tape, store, y);
        let hyper_q = tape.quantize(hyper);
        let feat = self.hyper_synthesize(&mut tape, store, hyper_q);
        let (mu, b) = self.params(&mut tape, store, feat);
        Ok(MotionLatent {
            y: tape.value(y_q).clone(),
            hyper: tape.value(hyper_q).clone(),
            params: LaplaceParams::new(tape.value(mu).clone(), tape.value(b).clone()),
        })
    }

    /// Decode a motion latent back to the two flow fields (pure wrapper).
    pub fn decode_motion(
        &self,
        store: &ParamStore,
        latent: &MotionLatent,
    ) -> Result<(FlowField, FlowField)> {
        let (c, _, _) = latent.y.shape();
        if c != self.cm {
            return Err(CodecError::ShapeMismatch(format!(
                "decode_motion: latent has {c} channels, expected {}",
                self.cm
            )));
        }
        let mut tape = Tape::new_infer();
        let y = tape.leaf(latent.y.clone());
        let (vs, vd) = self.synthesize(&mut tape, store, y);
        Ok((
            FlowField::new(tape.value(vs).clone(), FlowKind::Structure),
            FlowField::new(tape.value(vd).clone(), FlowKind::Detail),
        ))
    }
}
