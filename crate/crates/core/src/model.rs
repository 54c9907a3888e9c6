//! The full codec model: every learned module plus the tape-level pipeline
//! stages shared by the encoder session, the decoder session, and training.
//!
//! Encoder and decoder reconstructions must stay bit-identical on one
//! machine, so everything downstream of the quantized latents lives in
//! functions used verbatim by both sides.

use crate::config::ModelConfig;
use crate::context::{ContextNodes, ConvLstm, FeatureExtractor, LongTermFusion, Tcm};
use crate::flow::FlowNet;
use crate::frame_codec::FrameCodec;
use crate::graph::{NodeId, ParamStore, Tape};
use crate::motion_codec::MotionCodec;
use crate::sdd::{decompose_nodes, SDD_FACTOR};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Encoder-side switches mirrored into the bitstream header.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AblationFlags {
    /// Force the detail motion field to zero before coding.
    pub no_detail: bool,
    /// Skip ConvLSTM update and fusion; condition on short-term contexts.
    pub no_long_term: bool,
}

impl AblationFlags {
    pub fn to_byte(self) -> u8 {
        (self.no_long_term as u8) | ((self.no_detail as u8) << 1)
    }

    pub fn from_byte(b: u8) -> Self {
        AblationFlags {
            no_long_term: b & 1 != 0,
            no_detail: b & 2 != 0,
        }
    }
}

/// Coding state carried between frames on the tape.
#[derive(Clone, Copy, Debug)]
pub struct StateNodes {
    /// Previous reconstructed frame (clamped, padded).
    pub prev_frame: NodeId,
    /// Propagated reference feature.
    pub feature: NodeId,
    pub lstm_h: NodeId,
    pub lstm_c: NodeId,
}

/// Decoder-side context stage outputs.
pub struct ContextStage {
    pub flow_s: NodeId,
    pub flow_d: NodeId,
    pub contexts: ContextNodes,
    pub lstm_h: NodeId,
    pub lstm_c: NodeId,
}

pub struct SddcModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub flow_structure: FlowNet,
    pub flow_detail: FlowNet,
    pub motion: MotionCodec,
    pub feature_extractor: FeatureExtractor,
    pub tcm: Tcm,
    pub lstm: ConvLstm,
    pub fusion: LongTermFusion,
    pub frame: FrameCodec,
}

impl SddcModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let flow_structure = FlowNet::new(&mut store, "flow_structure", 3, cfg.flow_ch, &mut rng);
        let flow_detail = FlowNet::new(&mut store, "flow_detail", 3, cfg.flow_ch, &mut rng);
        let motion = MotionCodec::new(&mut store, "motion", &cfg, &mut rng);
        let feature_extractor = FeatureExtractor::new(&mut store, "feature_extractor", cfg.cf, &mut rng);
        let tcm = Tcm::new(&mut store, "tcm", &cfg, &mut rng);
        let lstm = ConvLstm::new(&mut store, "lstm", cfg.cf, &mut rng);
        let fusion = LongTermFusion::new(&mut store, "fusion", cfg.cf, &mut rng);
        let frame = FrameCodec::new(&mut store, "frame", &cfg, &mut rng);
        SddcModel {
            cfg,
            store,
            flow_structure,
            flow_detail,
            motion,
            feature_extractor,
            tcm,
            lstm,
            fusion,
            frame,
        }
    }

    /// Initial state nodes from a reconstructed intra frame.
    pub fn bootstrap_state(&self, tape: &mut Tape, intra_recon: NodeId) -> StateNodes {
        let (_, h, w) = tape.value(intra_recon).shape();
        let feature = self.feature_extractor.forward(tape, &self.store, intra_recon);
        let lstm_h = tape.leaf(Tensor::zeros(self.cfg.cf, h, w));
        let lstm_c = tape.leaf(Tensor::zeros(self.cfg.cf, h, w));
        StateNodes {
            prev_frame: intra_recon,
            feature,
            lstm_h,
            lstm_c,
        }
    }

    /// Encoder-side motion estimation on the structure/detail split of the
    /// current and previous reconstructed frames.
    pub fn estimate_motion(
        &self,
        tape: &mut Tape,
        x: NodeId,
        prev: NodeId,
        flags: AblationFlags,
    ) -> (NodeId, NodeId) {
        let (xs, xd) = decompose_nodes(tape, x, SDD_FACTOR);
        let (ps, pd) = decompose_nodes(tape, prev, SDD_FACTOR);
        let vs = self
            .flow_structure
            .estimate_nodes(tape, &self.store, xs, ps);
        let vd = if flags.no_detail {
            let (_, h, w) = tape.value(x).shape();
            tape.leaf(Tensor::zeros(2, h, w))
        } else {
            self.flow_detail.estimate_nodes(tape, &self.store, xd, pd)
        };
        (vs, vd)
    }

    /// Decoder-side stage from the quantized motion latent to the final
    /// temporal contexts, updating the long-term state unless ablated.
    pub fn context_stage(
        &self,
        tape: &mut Tape,
        m_q: NodeId,
        state: &StateNodes,
        flags: AblationFlags,
    ) -> ContextStage {
        let (flow_s, flow_d) = self.motion.synthesize(tape, &self.store, m_q);
        let short = self
            .tcm
            .mine_nodes(tape, &self.store, state.feature, flow_s, flow_d);
        if flags.no_long_term {
            ContextStage {
                flow_s,
                flow_d,
                contexts: short,
                lstm_h: state.lstm_h,
                lstm_c: state.lstm_c,
            }
        } else {
            let (h_new, c_new) =
                self.lstm
                    .update_nodes(tape, &self.store, state.lstm_h, state.lstm_c, state.feature);
            let fused = self.fusion.fuse_nodes(tape, &self.store, h_new, &short);
            ContextStage {
                flow_s,
                flow_d,
                contexts: fused,
                lstm_h: h_new,
                lstm_c: c_new,
            }
        }
    }

    /// Decoder-side reconstruction from the quantized contextual latent.
    /// Returns `(recon_raw, recon_clamped, feature)`.
    pub fn reconstruction_stage(
        &self,
        tape: &mut Tape,
        y_q: NodeId,
        contexts: &ContextNodes,
    ) -> (NodeId, NodeId, NodeId) {
        let (raw, feature) = self.frame.synthesize(tape, &self.store, y_q, contexts);
        let clamped = tape.clamp(raw, 0.0, 1.0);
        (raw, clamped, feature)
    }

    /// Laplace parameter nodes for the motion latent given its quantized
    /// hyper latent.
    pub fn motion_params_stage(&self, tape: &mut Tape, mh_q: NodeId) -> (NodeId, NodeId) {
        let feat = self.motion.hyper_synthesize(tape, &self.store, mh_q);
        self.motion.params(tape, &self.store, feat)
    }

    /// Laplace parameter nodes for the contextual latent given its quantized
    /// hyper latent and the coarsest context (temporal prior).
    pub fn frame_params_stage(
        &self,
        tape: &mut Tape,
        fh_q: NodeId,
        c2: NodeId,
    ) -> (NodeId, NodeId) {
        let feat = self.frame.hyper_synthesize(tape, &self.store, fh_q);
        let temporal = self.frame.temporal_prior(tape, &self.store, c2);
        self.frame.params(tape, &self.store, feat, temporal)
    }
}
