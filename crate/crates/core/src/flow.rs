//! Pyramidal optical flow for the structure and detail components, bilinear
//! warping, and multi-scale flow derivation for context mining.
//!
//! The estimator is a 3-level coarse-to-fine residual network: at each level
//! the upsampled coarse flow warps the reference, and a small conv stack
//! predicts a residual flow from (current, warped reference, upsampled flow).
//! The structure and detail estimators share this architecture but keep
//! independent weights. Flow tensors are `[2, H, W]`: plane 0 = dx, plane 1
//! = dy, in pixels at the level's resolution.

use crate::error::{CodecError, Result};
use crate::graph::{NodeId, ParamStore, Tape};
use crate::nn::{Conv2d, Init};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Which component a flow field belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    Structure,
    Detail,
}

/// Dense displacement field at full resolution.
#[derive(Clone, Debug)]
pub struct FlowField {
    pub vectors: Tensor,
    pub kind: FlowKind,
}

impl FlowField {
    pub fn new(vectors: Tensor, kind: FlowKind) -> Self {
        debug_assert_eq!(vectors.channels(), 2);
        FlowField { vectors, kind }
    }
}

/// Number of pyramid levels used by the estimator and by context mining.
pub const FLOW_LEVELS: usize = 3;

/// Coarse-to-fine residual flow estimator.
pub struct FlowNet {
    levels: Vec<[Conv2d; 5]>,
    in_channels: usize,
}

impl FlowNet {
    /// `in_channels` is the channel count of one input grid (3 for frames).
    /// The final conv of every level is zero-initialized so an untrained
    /// network estimates exactly zero flow.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut levels = Vec::new();
        for l in 0..FLOW_LEVELS {
            let p = format!("{name}.level{l}");
            let cin = 2 * in_channels + 2;
            levels.push([
                Conv2d::new(store, &format!("{p}.conv0"), cin, hidden, 3, 1, Init::He, rng),
                Conv2d::new(store, &format!("{p}.conv1"), hidden, hidden, 3, 1, Init::He, rng),
                Conv2d::new(store, &format!("{p}.conv2"), hidden, hidden, 3, 1, Init::He, rng),
                Conv2d::new(store, &format!("{p}.conv3"), hidden, hidden / 2, 3, 1, Init::He, rng),
                Conv2d::new(store, &format!("{p}.conv4"), hidden / 2, 2, 3, 1, Init::Zero, rng),
            ]);
        }
        FlowNet {
            levels,
            in_channels,
        }
    }

    /// Estimate flow on the tape such that `warp(reference, flow) ~ current`.
    pub fn estimate_nodes(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        current: NodeId,
        reference: NodeId,
    ) -> NodeId {
        let (c, h, w) = tape.value(current).shape();
        assert_eq!(c, self.in_channels, "flow input channel mismatch");
        assert_eq!(
            tape.value(reference).shape(),
            (c, h, w),
            "flow input shape mismatch"
        );
        assert!(
            h % (1 << (FLOW_LEVELS - 1)) == 0 && w % (1 << (FLOW_LEVELS - 1)) == 0,
            "flow input dims must be divisible by {}",
            1 << (FLOW_LEVELS - 1)
        );

        // image pyramids, level 0 = full resolution
        let mut cur_pyr = vec![current];
        let mut ref_pyr = vec![reference];
        for l in 1..FLOW_LEVELS {
            let (_, lh, lw) = tape.value(cur_pyr[l - 1]).shape();
            cur_pyr.push(tape.resize_bilinear(cur_pyr[l - 1], lh / 2, lw / 2));
            ref_pyr.push(tape.resize_bilinear(ref_pyr[l - 1], lh / 2, lw / 2));
        }

        let mut flow: Option<NodeId> = None;
        for l in (0..FLOW_LEVELS).rev() {
            let (_, lh, lw) = tape.value(cur_pyr[l]).shape();
            let up = match flow {
                Some(f) => {
                    let r = tape.resize_bilinear(f, lh, lw);
                    tape.mul_scalar(r, 2.0)
                }
                None => tape.leaf(Tensor::zeros(2, lh, lw)),
            };
            let warped = tape.warp(ref_pyr[l], up);
            let inp = tape.concat(&[cur_pyr[l], warped, up]);
            let convs = &self.levels[l];
            let mut hdn = inp;
            for (i, conv) in convs.iter().enumerate() {
                hdn = conv.forward(tape, store, hdn);
                if i + 1 < convs.len() {
                    hdn = tape.leaky_relu(hdn, 0.1);
                }
            }
            flow = Some(tape.add(up, hdn));
        }
        flow.unwrap()
    }

    /// Pure wrapper over [`FlowNet::estimate_nodes`].
    pub fn estimate(
        &self,
        store: &ParamStore,
        current: &Tensor,
        reference: &Tensor,
        kind: FlowKind,
    ) -> Result<FlowField> {
        if current.shape() != reference.shape() {
            return Err(CodecError::ShapeMismatch(format!(
                "estimate_flow: {:?} vs {:?}",
                current.shape(),
                reference.shape()
            )));
        }
        let mut tape = Tape::new_infer();
        let c = tape.leaf(current.clone());
        let r = tape.leaf(reference.clone());
        let f = self.estimate_nodes(&mut tape, store, c, r);
        Ok(FlowField::new(tape.value(f).clone(), kind))
    }
}

/// Backward-warp `src` by `flow` with replicate borders.
pub fn warp(src: &Tensor, flow: &FlowField) -> Result<Tensor> {
    let (_, h, w) = src.shape();
    let (fc, fh, fw) = flow.vectors.shape();
    if fc != 2 || (fh, fw) != (h, w) {
        return Err(CodecError::ShapeMismatch(format!(
            "warp: src {:?} vs flow {:?}",
            src.shape(),
            flow.vectors.shape()
        )));
    }
    let mut tape = Tape::new_infer();
    let s = tape.leaf(src.clone());
    let f = tape.leaf(flow.vectors.clone());
    let out = tape.warp(s, f);
    Ok(tape.value(out).clone())
}

/// Multi-scale flows for context mining: level l is the bilinear half-size
/// of level l-1 with magnitudes halved.
pub fn build_pyramid_nodes(tape: &mut Tape, flow: NodeId, levels: usize) -> Vec<NodeId> {
    let (_, h, w) = tape.value(flow).shape();
    assert!(
        levels >= 1 && h % (1 << (levels - 1)) == 0 && w % (1 << (levels - 1)) == 0,
        "flow dims {h}x{w} not divisible by 2^{}",
        levels - 1
    );
    let mut out = vec![flow];
    for l in 1..levels {
        let (_, ph, pw) = tape.value(out[l - 1]).shape();
        let down = tape.resize_bilinear(out[l - 1], ph / 2, pw / 2);
        out.push(tape.mul_scalar(down, 0.5));
    }
    out
}

/// Pure wrapper over [`build_pyramid_nodes`].
pub fn build_pyramid(flow: &FlowField, levels: usize) -> Result<Vec<FlowField>> {
    let (_, h, w) = flow.vectors.shape();
    if levels == 0 || h % (1 << (levels - 1)) != 0 || w % (1 << (levels - 1)) != 0 {
        return Err(CodecError::InvalidArgument(format!(
            "flow dims {h}x{w} not divisible by 2^{}",
            levels.saturating_sub(1)
        )));
    }
    let mut tape = Tape::new_infer();
    let f = tape.leaf(flow.vectors.clone());
    let ids = build_pyramid_nodes(&mut tape, f, levels);
    Ok(ids
        .into_iter()
        .map(|id| FlowField::new(tape.value(id).clone(), flow.kind))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn untrained_net_estimates_exactly_zero_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let net = FlowNet::new(&mut store, "flow_s", 3, 8, &mut rng);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let cur = Tensor::uniform(3, 16, 16, 0.0, 1.0, &mut r2);
        let refr = Tensor::uniform(3, 16, 16, 0.0, 1.0, &mut r2);
        let f = net.estimate(&store, &cur, &refr, FlowKind::Structure).unwrap();
        assert_eq!(f.vectors.max_abs(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let net = FlowNet::new(&mut store, "flow_s", 3, 8, &mut rng);
        let cur = Tensor::zeros(3, 16, 16);
        let refr = Tensor::zeros(3, 16, 12);
        assert!(net
            .estimate(&store, &cur, &refr, FlowKind::Structure)
            .is_err());
    }

    #[test]
    fn constant_flow_pyramid_scales_exactly() {
        let mut v = Tensor::zeros(2, 64, 64);
        v.plane_mut(0).fill(4.0);
        v.plane_mut(1).fill(2.0);
        let pyr = build_pyramid(&FlowField::new(v, FlowKind::Structure), 3).unwrap();
        assert_eq!(pyr[0].vectors.shape(), (2, 64, 64));
        assert_eq!(pyr[1].vectors.shape(), (2, 32, 32));
        assert_eq!(pyr[2].vectors.shape(), (2, 16, 16));
        for &(l, dx, dy) in &[(0usize, 4.0f32, 2.0f32), (1, 2.0, 1.0), (2, 1.0, 0.5)] {
            for &x in pyr[l].vectors.plane(0) {
                assert!((x - dx).abs() < 1e-6);
            }
            for &y in pyr[l].vectors.plane(1) {
                assert!((y - dy).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_flow_pyramid_is_zero_and_single_level_is_identity() {
        let v = Tensor::zeros(2, 16, 16);
        let f = FlowField::new(v.clone(), FlowKind::Detail);
        let pyr = build_pyramid(&f, 3).unwrap();
        assert!(pyr.iter().all(|p| p.vectors.max_abs() == 0.0));
        let single = build_pyramid(&f, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].vectors.data(), v.data());
    }

    #[test]
    fn warp_half_pixel_averages_neighbors() {
        // row pattern 0,1,0,1...; dx = 0.5 averages horizontal neighbors
        let w = 8;
        let mut src = Tensor::zeros(1, 2, w);
        for y in 0..2 {
            for x in 0..w {
                src.set(0, y, x, (x % 2) as f32);
            }
        }
        let mut flow = Tensor::zeros(2, 2, w);
        flow.plane_mut(0).fill(0.5);
        let out = warp(&src, &FlowField::new(flow, FlowKind::Structure)).unwrap();
        for y in 0..2 {
            for x in 0..w - 1 {
                assert!((out.at(0, y, x) - 0.5).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn warp_linearity_in_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::uniform(2, 8, 8, 0.0, 1.0, &mut rng);
        let b = Tensor::uniform(2, 8, 8, 0.0, 1.0, &mut rng);
        let fv = Tensor::uniform(2, 8, 8, -2.0, 2.0, &mut rng);
        let f = FlowField::new(fv, FlowKind::Structure);
        let combo = a.zip_map(&b, |x, y| 0.3 * x + 0.7 * y);
        let w_combo = warp(&combo, &f).unwrap();
        let wa = warp(&a, &f).unwrap();
        let wb = warp(&b, &f).unwrap();
        let w_sep = wa.zip_map(&wb, |x, y| 0.3 * x + 0.7 * y);
        for (p, q) in w_combo.data().iter().zip(w_sep.data()) {
            assert!((p - q).abs() < 1e-5);
        }
    }
}
