//! Structure and detail decomposition.
//!
//! The structure component is a bilinear down/up round trip of the input
//! (half-pixel-center convention, factor 2 by default); the detail component
//! is the remaining difference, so the pair always sums back to the input.
//! The same channel-wise routine decomposes frames and reference features.

use crate::error::{CodecError, Result};
use crate::graph::{NodeId, Tape};
use crate::tensor::Tensor;

/// Default down/up factor.
pub const SDD_FACTOR: usize = 2;

/// A structure/detail split of one grid.
#[derive(Clone, Debug)]
pub struct SddPair {
    pub structure: Tensor,
    pub detail: Tensor,
    pub factor: usize,
}

/// Decompose on the tape; used inside coding and training graphs.
pub fn decompose_nodes(tape: &mut Tape, x: NodeId, factor: usize) -> (NodeId, NodeId) {
    let (_, h, w) = tape.value(x).shape();
    assert!(
        h % factor == 0 && w % factor == 0,
        "dims {h}x{w} not divisible by factor {factor}"
    );
    let down = tape.resize_bilinear(x, h / factor, w / factor);
    let structure = tape.resize_bilinear(down, h, w);
    let detail = tape.sub(x, structure);
    (structure, detail)
}

/// Split a grid into low-frequency structure and residual detail.
pub fn decompose(g: &Tensor, factor: usize) -> Result<SddPair> {
    let (_, h, w) = g.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(CodecError::InvalidArgument(format!(
            "dims {h}x{w} not divisible by factor {factor}"
        )));
    }
    let mut tape = Tape::new_infer();
    let x = tape.leaf(g.clone());
    let (s, d) = decompose_nodes(&mut tape, x, factor);
    Ok(SddPair {
        structure: tape.value(s).clone(),
        detail: tape.value(d).clone(),
        factor,
    })
}

/// Sum the pair back together.
pub fn recompose(p: &SddPair) -> Result<Tensor> {
    if p.structure.shape() != p.detail.shape() {
        return Err(CodecError::ShapeMismatch(format!(
            "structure {:?} vs detail {:?}",
            p.structure.shape(),
            p.detail.shape()
        )));
    }
    Ok(p.structure.zip_map(&p.detail, |a, b| a + b))
}
