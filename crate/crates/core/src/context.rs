//! Temporal context generation: structure/detail context mining over the
//! propagated reference feature (short-term), a convolutional LSTM
//! accumulating long-term memory across the GOP, and the hierarchical
//! long/short-term fusion that produces the final conditioning contexts.

use crate::config::ModelConfig;
use crate::error::{CodecError, Result};
use crate::flow::{build_pyramid_nodes, FlowField, FLOW_LEVELS};
use crate::graph::{NodeId, ParamStore, Tape};
use crate::nn::{Conv2d, Init, ResBlock};
use crate::sdd::decompose_nodes;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Multi-scale temporal contexts: `[C_f, H, W]`, `[2C_f, H/2, W/2]`,
/// `[4C_f, H/4, W/4]`.
#[derive(Clone, Debug)]
pub struct ContextSet {
    pub c0: Tensor,
    pub c1: Tensor,
    pub c2: Tensor,
}

/// Tape-resident context set.
#[derive(Clone, Copy, Debug)]
pub struct ContextNodes {
    pub c0: NodeId,
    pub c1: NodeId,
    pub c2: NodeId,
}

impl ContextNodes {
    pub fn to_set(&self, tape: &Tape) -> ContextSet {
        ContextSet {
            c0: tape.value(self.c0).clone(),
            c1: tape.value(self.c1).clone(),
            c2: tape.value(self.c2).clone(),
        }
    }
}

/// ConvLSTM hidden/cell pair carrying long-term memory across a GOP.
#[derive(Clone, Debug)]
pub struct RecurrentState {
    pub h: Tensor,
    pub c: Tensor,
}

/// Zeroed state for a GOP start.
pub fn reset_state(cf: usize, height: usize, width: usize) -> RecurrentState {
    RecurrentState {
        h: Tensor::zeros(cf, height, width),
        c: Tensor::zeros(cf, height, width),
    }
}

// ---------------------------------------------------------------------------
// Feature extractor (intra bootstrap)
// ---------------------------------------------------------------------------

/// Produces the first reference feature from a reconstructed intra frame.
pub struct FeatureExtractor {
    conv: Conv2d,
    res: ResBlock,
}

impl FeatureExtractor {
    pub fn new(store: &mut ParamStore, name: &str, cf: usize, rng: &mut ChaCha8Rng) -> Self {
        FeatureExtractor {
            conv: Conv2d::new(store, &format!("{name}.conv"), 3, cf, 3, 1, Init::He, rng),
            res: ResBlock::new(store, &format!("{name}.res"), cf, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, frame: NodeId) -> NodeId {
        let h = self.conv.forward(tape, store, frame);
        let h = tape.leaky_relu(h, 0.1);
        self.res.forward(tape, store, h)
    }
}

// ---------------------------------------------------------------------------
// Short-term context mining
// ---------------------------------------------------------------------------

/// One component branch: multi-scale features from the (structure or detail)
/// part of the reference feature, warped by the matching flow pyramid, then
/// hierarchically fused bottom-up.
struct TcmBranch {
    conv0: Conv2d,
    conv1: Conv2d,
    conv2: Conv2d,
    res2: ResBlock,
    fuse1: Conv2d,
    res1: ResBlock,
    fuse0: Conv2d,
    res0: ResBlock,
}

impl TcmBranch {
    fn new(store: &mut ParamStore, name: &str, cf: usize, rng: &mut ChaCha8Rng) -> Self {
        TcmBranch {
            conv0: Conv2d::new(store, &format!("{name}.conv0"), cf, cf, 3, 1, Init::He, rng),
            conv1: Conv2d::new(store, &format!("{name}.conv1"), cf, 2 * cf, 3, 2, Init::He, rng),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), 2 * cf, 4 * cf, 3, 2, Init::He, rng),
            res2: ResBlock::new(store, &format!("{name}.res2"), 4 * cf, rng),
            fuse1: Conv2d::new(store, &format!("{name}.fuse1"), 6 * cf, 2 * cf, 3, 1, Init::He, rng),
            res1: ResBlock::new(store, &format!("{name}.res1"), 2 * cf, rng),
            fuse0: Conv2d::new(store, &format!("{name}.fuse0"), 3 * cf, cf, 3, 1, Init::He, rng),
            res0: ResBlock::new(store, &format!("{name}.res0"), cf, rng),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        component: NodeId,
        flow: NodeId,
    ) -> [NodeId; 3] {
        let f0 = self.conv0.forward(tape, store, component);
        let f1 = self.conv1.forward(tape, store, f0);
        let f2 = self.conv2.forward(tape, store, f1);
        let pyr = build_pyramid_nodes(tape, flow, FLOW_LEVELS);
        let w0 = tape.warp(f0, pyr[0]);
        let w1 = tape.warp(f1, pyr[1]);
        let w2 = tape.warp(f2, pyr[2]);

        let ctx2 = self.res2.forward(tape, store, w2);
        let (_, h1, ww1) = tape.value(w1).shape();
        let up2 = tape.resize_bilinear(ctx2, h1, ww1);
        let cat1 = tape.concat(&[up2, w1]);
        let m1 = self.fuse1.forward(tape, store, cat1);
        let m1 = tape.leaky_relu(m1, 0.1);
        let ctx1 = self.res1.forward(tape, store, m1);
        let (_, h0, ww0) = tape.value(w0).shape();
        let up1 = tape.resize_bilinear(ctx1, h0, ww0);
        let cat0 = tape.concat(&[up1, w0]);
        let m0 = self.fuse0.forward(tape, store, cat0);
        let m0 = tape.leaky_relu(m0, 0.1);
        let ctx0 = self.res0.forward(tape, store, m0);
        [ctx0, ctx1, ctx2]
    }
}

/// Short-term temporal context miner: decomposes the reference feature,
/// runs the structure and detail branches with their own decoded flows, and
/// sums the branch contexts per scale.
pub struct Tcm {
    structure: TcmBranch,
    detail: TcmBranch,
    factor: usize,
}

impl Tcm {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Tcm {
            structure: TcmBranch::new(store, &format!("{name}.structure"), cfg.cf, rng),
            detail: TcmBranch::new(store, &format!("{name}.detail"), cfg.cf, rng),
            factor: crate::sdd::SDD_FACTOR,
        }
    }

    pub fn mine_nodes(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        feature: NodeId,
        flow_s: NodeId,
        flow_d: NodeId,
    ) -> ContextNodes {
        let (fs, fd) = decompose_nodes(tape, feature, self.factor);
        let s = self.structure.forward(tape, store, fs, flow_s);
        let d = self.detail.forward(tape, store, fd, flow_d);
        ContextNodes {
            c0: tape.add(s[0], d[0]),
            c1: tape.add(s[1], d[1]),
            c2: tape.add(s[2], d[2]),
        }
    }

    /// Pure wrapper over [`Tcm::mine_nodes`].
    pub fn mine_short_term(
        &self,
        store: &ParamStore,
        feature: &Tensor,
        flow_s: &FlowField,
        flow_d: &FlowField,
    ) -> Result<ContextSet> {
        let (_, h, w) = feature.shape();
        if flow_s.vectors.shape() != (2, h, w) || flow_d.vectors.shape() != (2, h, w) {
            return Err(CodecError::ShapeMismatch(format!(
                "mine_short_term: feature {:?} flows {:?}/{:?}",
                feature.shape(),
                flow_s.vectors.shape(),
                flow_d.vectors.shape()
            )));
        }
        let mut tape = Tape::new_infer();
        let f = tape.leaf(feature.clone());
        let vs = tape.leaf(flow_s.vectors.clone());
        let vd = tape.leaf(flow_d.vectors.clone());
        let nodes = self.mine_nodes(&mut tape, store, f, vs, vd);
        Ok(nodes.to_set(&tape))
    }
}

// ---------------------------------------------------------------------------
// ConvLSTM long-term memory
// ---------------------------------------------------------------------------

/// Single-layer ConvLSTM with 3x3 kernels. The input conv carries the gate
/// biases; gate order along channels is `[input, output, forget, candidate]`.
pub struct ConvLstm {
    wx: Conv2d,
    wh: Conv2d,
    cf: usize,
}

impl ConvLstm {
    pub fn new(store: &mut ParamStore, name: &str, cf: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvLstm {
            wx: Conv2d::new(store, &format!("{name}.wx"), cf, 4 * cf, 3, 1, Init::He, rng),
            wh: Conv2d::new_no_bias(store, &format!("{name}.wh"), cf, 4 * cf, 3, 1, Init::He, rng),
            cf,
        }
    }

    /// One recurrent update on the tape. Returns `(h_new, c_new)`; `h_new`
    /// is the long-term temporal context for the current frame.
    pub fn update_nodes(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h_prev: NodeId,
        c_prev: NodeId,
        feature: NodeId,
    ) -> (NodeId, NodeId) {
        let gx = self.wx.forward(tape, store, feature);
        let gh = self.wh.forward(tape, store, h_prev);
        let gates = tape.add(gx, gh);
        let cf = self.cf;
        let i_raw = tape.slice_c(gates, 0, cf);
        let o_raw = tape.slice_c(gates, cf, cf);
        let f_raw = tape.slice_c(gates, 2 * cf, cf);
        let g_raw = tape.slice_c(gates, 3 * cf, cf);
        let i = tape.sigmoid(i_raw);
        let o = tape.sigmoid(o_raw);
        let f = tape.sigmoid(f_raw);
        let g = tape.tanh(g_raw);
        let keep = tape.mul(f, c_prev);
        let write = tape.mul(i, g);
        let c_new = tape.add(keep, write);
        let ct = tape.tanh(c_new);
        let h_new = tape.mul(o, ct);
        (h_new, c_new)
    }

    /// Pure wrapper: next state plus the emitted long-term context.
    pub fn update_long_term(
        &self,
        store: &ParamStore,
        state: &RecurrentState,
        feature: &Tensor,
    ) -> Result<(RecurrentState, Tensor)> {
        if state.h.shape() != feature.shape() {
            return Err(CodecError::ShapeMismatch(format!(
                "update_long_term: state {:?} vs feature {:?}",
                state.h.shape(),
                feature.shape()
            )));
        }
        let mut tape = Tape::new_infer();
        let h = tape.leaf(state.h.clone());
        let c = tape.leaf(state.c.clone());
        let f = tape.leaf(feature.clone());
        let (h_new, c_new) = self.update_nodes(&mut tape, store, h, c, f);
        let next = RecurrentState {
            h: tape.value(h_new).clone(),
            c: tape.value(c_new).clone(),
        };
        let ctx = next.h.clone();
        Ok((next, ctx))
    }
}

// ---------------------------------------------------------------------------
// Long/short-term fusion
// ---------------------------------------------------------------------------

/// Extracts a hierarchy from the long-term context and fuses it with the
/// short-term contexts. The final per-scale fusion convs are
/// zero-initialized behind a residual bypass, so an untrained codec is a
/// pure short-term model.
pub struct LongTermFusion {
    e0: Conv2d,
    e1: Conv2d,
    e2: Conv2d,
    r2: ResBlock,
    m1: Conv2d,
    m0: Conv2d,
    fuse: [Conv2d; 3],
}

impl LongTermFusion {
    pub fn new(store: &mut ParamStore, name: &str, cf: usize, rng: &mut ChaCha8Rng) -> Self {
        LongTermFusion {
            e0: Conv2d::new(store, &format!("{name}.e0"), cf, cf, 3, 1, Init::He, rng),
            e1: Conv2d::new(store, &format!("{name}.e1"), cf, 2 * cf, 3, 2, Init::He, rng),
            e2: Conv2d::new(store, &format!("{name}.e2"), 2 * cf, 4 * cf, 3, 2, Init::He, rng),
            r2: ResBlock::new(store, &format!("{name}.r2"), 4 * cf, rng),
            m1: Conv2d::new(store, &format!("{name}.m1"), 6 * cf, 2 * cf, 3, 1, Init::He, rng),
            m0: Conv2d::new(store, &format!("{name}.m0"), 3 * cf, cf, 3, 1, Init::He, rng),
            fuse: [
                Conv2d::new(store, &format!("{name}.fuse0"), 2 * cf, cf, 3, 1, Init::Zero, rng),
                Conv2d::new(store, &format!("{name}.fuse1"), 4 * cf, 2 * cf, 3, 1, Init::Zero, rng),
                Conv2d::new(store, &format!("{name}.fuse2"), 8 * cf, 4 * cf, 3, 1, Init::Zero, rng),
            ],
        }
    }

    pub fn fuse_nodes(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        long_term: NodeId,
        short: &ContextNodes,
    ) -> ContextNodes {
        let h0 = self.e0.forward(tape, store, long_term);
        let h0 = tape.leaky_relu(h0, 0.1);
        let h1 = self.e1.forward(tape, store, h0);
        let h1 = tape.leaky_relu(h1, 0.1);
        let h2 = self.e2.forward(tape, store, h1);
        let h2 = tape.leaky_relu(h2, 0.1);

        let l2 = self.r2.forward(tape, store, h2);
        let (_, s1h, s1w) = tape.value(h1).shape();
        let up2 = tape.resize_bilinear(l2, s1h, s1w);
        let cat1 = tape.concat(&[up2, h1]);
        let l1 = self.m1.forward(tape, store, cat1);
        let l1 = tape.leaky_relu(l1, 0.1);
        let (_, s0h, s0w) = tape.value(h0).shape();
        let up1 = tape.resize_bilinear(l1, s0h, s0w);
        let cat0 = tape.concat(&[up1, h0]);
        let l0 = self.m0.forward(tape, store, cat0);
        let l0 = tape.leaky_relu(l0, 0.1);

        let longs = [l0, l1, l2];
        let shorts = [short.c0, short.c1, short.c2];
        let mut out = [shorts[0]; 3];
        for l in 0..3 {
            let cat = tape.concat(&[longs[l], shorts[l]]);
            let delta = self.fuse[l].forward(tape, store, cat);
            out[l] = tape.add(shorts[l], delta);
        }
        ContextNodes {
            c0: out[0],
            c1: out[1],
            c2: out[2],
        }
    }

    /// Pure wrapper over [`LongTermFusion::fuse_nodes`].
    pub fn fuse(
        &self,
        store: &ParamStore,
        long_term: &Tensor,
        short: &ContextSet,
    ) -> Result<ContextSet> {
        let (cf, h, w) = short.c0.shape();
        if long_term.shape() != (cf, h, w) {
            return Err(CodecError::ShapeMismatch(format!(
                "fuse: long-term {:?} vs c0 {:?}",
                long_term.shape(),
                short.c0.shape()
            )));
        }
        let mut tape = Tape::new_infer();
        let lt = tape.leaf(long_term.clone());
        let nodes = ContextNodes {
            c0: tape.leaf(short.c0.clone()),
            c1: tape.leaf(short.c1.clone()),
            c2: tape.leaf(short.c2.clone()),
        };
        let fused = self.fuse_nodes(&mut tape, store, lt, &nodes);
        Ok(fused.to_set(&tape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowKind;
    use rand::SeedableRng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            cf: 8,
            cy: 16,
            cm: 8,
            ch: 4,
            flow_ch: 8,
        }
    }

    fn rand_t(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(c, h, w, -1.0, 1.0, &mut rng)
    }

    #[test]
    fn context_geometry_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let c = cfg();
        let tcm = Tcm::new(&mut store, "tcm", &c, &mut rng);
        let feature = rand_t(c.cf, 32, 32, 2);
        let vs = FlowField::new(rand_t(2, 32, 32, 3), FlowKind::Structure);
        let vd = FlowField::new(rand_t(2, 32, 32, 4), FlowKind::Detail);
        let ctx = tcm.mine_short_term(&store, &feature, &vs, &vd).unwrap();
        assert_eq!(ctx.c0.shape(), (c.cf, 32, 32));
        assert_eq!(ctx.c1.shape(), (2 * c.cf, 16, 16));
        assert_eq!(ctx.c2.shape(), (4 * c.cf, 8, 8));
    }

    #[test]
    fn zeroed_detail_branch_reduces_to_structure_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let c = cfg();
        let tcm = Tcm::new(&mut store, "tcm", &c, &mut rng);
        // zero every detail-branch parameter
        let names: Vec<String> = store
            .ids()
            .map(|id| store.name(id).to_string())
            .filter(|n| n.starts_with("tcm.detail"))
            .collect();
        for n in names {
            let id = store.lookup(&n).unwrap();
            let (sc, sh, sw) = store.value(id).shape();
            store.set_value(&n, Tensor::zeros(sc, sh, sw));
        }
        let feature = rand_t(c.cf, 16, 16, 6);
        let zero_flow = FlowField::new(Tensor::zeros(2, 16, 16), FlowKind::Structure);
        let zero_flow_d = FlowField::new(Tensor::zeros(2, 16, 16), FlowKind::Detail);
        let ctx = tcm
            .mine_short_term(&store, &feature, &zero_flow, &zero_flow_d)
            .unwrap();

        // structure branch alone, at zero flow (warp is the identity)
        let mut tape = Tape::new_infer();
        let f = tape.leaf(feature.clone());
        let (fs, _) = decompose_nodes(&mut tape, f, 2);
        let flow = tape.leaf(Tensor::zeros(2, 16, 16));
        let s = tcm.structure.forward(&mut tape, &store, fs, flow);
        assert_eq!(ctx.c0.data(), tape.value(s[0]).data());
        assert_eq!(ctx.c1.data(), tape.value(s[1]).data());
        assert_eq!(ctx.c2.data(), tape.value(s[2]).data());
    }

    #[test]
    fn swapping_flows_changes_the_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let c = cfg();
        let tcm = Tcm::new(&mut store, "tcm", &c, &mut rng);
        let feature = rand_t(c.cf, 16, 16, 8);
        let vs = FlowField::new(rand_t(2, 16, 16, 9), FlowKind::Structure);
        let vd = FlowField::new(rand_t(2, 16, 16, 10), FlowKind::Detail);
        let a = tcm.mine_short_term(&store, &feature, &vs, &vd).unwrap();
        let vs2 = FlowField::new(vd.vectors.clone(), FlowKind::Structure);
        let vd2 = FlowField::new(vs.vectors.clone(), FlowKind::Detail);
        let b = tcm.mine_short_term(&store, &feature, &vs2, &vd2).unwrap();
        assert_ne!(a.c0.data(), b.c0.data());
    }

    #[test]
    fn convlstm_zero_weights_zero_state_gives_zero_context() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let lstm = ConvLstm::new(&mut store, "lstm", 4, &mut rng);
        for n in ["lstm.wx.w", "lstm.wx.b", "lstm.wh.w"] {
            let id = store.lookup(n).unwrap();
            let (sc, sh, sw) = store.value(id).shape();
            store.set_value(n, Tensor::zeros(sc, sh, sw));
        }
        let state = reset_state(4, 8, 8);
        let f = rand_t(4, 8, 8, 12);
        let (next, ctx) = lstm.update_long_term(&store, &state, &f).unwrap();
        assert_eq!(ctx.max_abs(), 0.0);
        assert_eq!(next.h.max_abs(), 0.0);
        assert_eq!(next.c.max_abs(), 0.0);
    }

    #[test]
    fn convlstm_memory_persists_with_forced_gates() {
        // zero weights, forget bias +30 (sigmoid -> 1.0 in f32), input bias -30
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut store = ParamStore::new();
        let cf = 4;
        let lstm = ConvLstm::new(&mut store, "lstm", cf, &mut rng);
        for n in ["lstm.wx.w", "lstm.wh.w"] {
            let id = store.lookup(n).unwrap();
            let (sc, sh, sw) = store.value(id).shape();
            store.set_value(n, Tensor::zeros(sc, sh, sw));
        }
        let mut bias = Tensor::zeros(4 * cf, 1, 1);
        for c in 0..cf {
            bias.data_mut()[c] = -30.0; // input gate ~ 0
            bias.data_mut()[2 * cf + c] = 30.0; // forget gate = 1
        }
        store.set_value("lstm.wx.b", bias);

        let initial_cell = rand_t(cf, 8, 8, 14);
        let mut state = RecurrentState {
            h: Tensor::zeros(cf, 8, 8),
            c: initial_cell.clone(),
        };
        for step in 0..5 {
            let f = rand_t(cf, 8, 8, 20 + step);
            let (next, _) = lstm.update_long_term(&store, &state, &f).unwrap();
            state = next;
        }
        assert_eq!(state.c.data(), initial_cell.data());
    }

    #[test]
    fn convlstm_context_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut store = ParamStore::new();
        let lstm = ConvLstm::new(&mut store, "lstm", 4, &mut rng);
        let mut state = reset_state(4, 8, 8);
        for step in 0..6 {
            let f = rand_t(4, 8, 8, 30 + step).map(|v| v * 10.0);
            let (next, ctx) = lstm.update_long_term(&store, &state, &f).unwrap();
            assert!(ctx.max_abs() <= 1.0);
            state = next;
        }
    }

    #[test]
    fn reset_state_is_zero_and_reproducible() {
        let a = reset_state(4, 8, 8);
        let b = reset_state(4, 8, 8);
        assert_eq!(a.h.max_abs(), 0.0);
        assert_eq!(a.c.max_abs(), 0.0);
        assert_eq!(a.h.data(), b.h.data());
        assert_eq!(a.c.data(), b.c.data());
    }

    #[test]
    fn fusion_is_identity_at_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut store = ParamStore::new();
        let c = cfg();
        let fusion = LongTermFusion::new(&mut store, "fusion", c.cf, &mut rng);
        let short = ContextSet {
            c0: rand_t(c.cf, 16, 16, 18),
            c1: rand_t(2 * c.cf, 8, 8, 19),
            c2: rand_t(4 * c.cf, 4, 4, 20),
        };
        let long_term = rand_t(c.cf, 16, 16, 21);
        let fused = fusion.fuse(&store, &long_term, &short).unwrap();
        assert_eq!(fused.c0.data(), short.c0.data());
        assert_eq!(fused.c1.data(), short.c1.data());
        assert_eq!(fused.c2.data(), short.c2.data());
    }

    #[test]
    fn fusion_uses_long_term_once_trained_past_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut store = ParamStore::new();
        let c = cfg();
        let fusion = LongTermFusion::new(&mut store, "fusion", c.cf, &mut rng);
        // give the zero-initialized fusion convs nonzero weights
        for l in 0..3usize {
            let name = format!("fusion.fuse{l}.w");
            let id = store.lookup(&name).unwrap();
            let (sc, sh, sw) = store.value(id).shape();
            store.set_value(&name, rand_t(sc, sh, sw, 40 + l as u64).map(|v| v * 0.1));
        }
        let short = ContextSet {
            c0: rand_t(c.cf, 16, 16, 24),
            c1: rand_t(2 * c.cf, 8, 8, 25),
            c2: rand_t(4 * c.cf, 4, 4, 26),
        };
        let lt_a = rand_t(c.cf, 16, 16, 27);
        let lt_b = lt_a.map(|v| v + 0.1);
        let fa = fusion.fuse(&store, &lt_a, &short).unwrap();
        let fb = fusion.fuse(&store, &lt_b, &short).unwrap();
        assert_ne!(fa.c0.data(), fb.c0.data());
        assert_eq!(fa.c0.shape(), short.c0.shape());
        assert_eq!(fa.c1.shape(), short.c1.shape());
        assert_eq!(fa.c2.shape(), short.c2.shape());
    }
}
