//! Reverse-mode autodiff tape for the codec's learned transforms.
//!
//! The tape is rebuilt per coding/training step (define-by-run). Nodes hold
//! their forward value; `backward` walks the tape in reverse and accumulates
//! gradients, including into [`ParamStore`] leaves. Everything is f32 and
//! strictly single-threaded so that repeated runs are bit-identical, which
//! the entropy-coding path relies on.
//!
//! Tensor layout conventions:
//! - activations: `[C, H, W]`
//! - conv weights: `[Cout, Cin, kh*kw]` with the op carrying `(kh, kw)`
//! - biases and per-channel parameters: `[C, 1, 1]`
//! - flow fields: `[2, H, W]` with plane 0 = dx, plane 1 = dy
//! - scalars (losses, rates): `[1, 1, 1]`

use crate::tensor::Tensor;
use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Probability floor used by every Laplace rate term: 2^-16.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Named learnable tensors plus their accumulated gradients.
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        let (c, h, w) = value.shape();
        self.names.push(name.to_string());
        self.grads.push(Tensor::zeros(c, h, w));
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn zero_grad_of(&mut self, id: ParamId) {
        self.grads[id.0].fill(0.0);
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) {
        self.grads[id.0].add_scaled(g, 1.0);
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) {
        let id = self
            .lookup(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(
            self.values[id.0].shape(),
            value.shape(),
            "shape mismatch setting {name}"
        );
        self.values[id.0] = value;
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.numel()).sum()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub usize);

enum Op {
    Leaf { param: Option<usize> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, f32),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f32),
    Softplus(NodeId),
    ClampMin(NodeId, f32),
    Clamp(NodeId, f32, f32),
    PowConst(NodeId, f32),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
        kh: usize,
        kw: usize,
    },
    Resize {
        x: NodeId,
    },
    Warp {
        src: NodeId,
        flow: NodeId,
    },
    Concat(Vec<NodeId>),
    SliceC {
        x: NodeId,
        start: usize,
    },
    BroadcastC {
        x: NodeId,
    },
    AddNoise(NodeId),
    Round,
    LaplaceBits {
        q: NodeId,
        mu: NodeId,
        b: NodeId,
    },
    Mse {
        a: NodeId,
        b: NodeId,
    },
    Mean(NodeId),
    Sum(NodeId),
    BlurValid {
        x: NodeId,
        kernel: Vec<f32>,
    },
    AvgPool2(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Quantization behavior for a coding pass.
pub enum QuantMode {
    /// Additive uniform noise in (-0.5, 0.5), drawn from a seeded stream.
    Train,
    /// Round to nearest integer, ties to even.
    Infer,
}

pub struct Tape {
    nodes: Vec<Node>,
    rng: Option<ChaCha8Rng>,
    grads: Option<Vec<Option<Tensor>>>,
}

impl Tape {
    pub fn new_infer() -> Self {
        Tape {
            nodes: Vec::new(),
            rng: None,
            grads: None,
        }
    }

    pub fn new_train(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            grads: None,
        }
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f32 {
        let t = &self.nodes[id.0].value;
        debug_assert_eq!(t.numel(), 1);
        t.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    // -- leaves -------------------------------------------------------------

    /// Constant or input tensor; gradients may flow to it (inspect via `grad`).
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf { param: None })
    }

    /// Leaf bound to a learnable parameter; `backward` accumulates into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Leaf { param: Some(id.0) })
    }

    // -- elementwise --------------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f32) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: f32) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x * c);
        self.push(v, Op::MulScalar(a, c))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f32) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(softplus_f);
        self.push(v, Op::Softplus(a))
    }

    pub fn clamp_min(&mut self, a: NodeId, c: f32) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.max(c));
        self.push(v, Op::ClampMin(a, c))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f32, hi: f32) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn pow_const(&mut self, a: NodeId, e: f32) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.powf(e));
        self.push(v, Op::PowConst(a, e))
    }

    // -- structure ----------------------------------------------------------

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let (_, h, w) = self.nodes[parts[0].0].value.shape();
        let mut c_total = 0;
        for p in parts {
            let (c, ph, pw) = self.nodes[p.0].value.shape();
            assert_eq!((ph, pw), (h, w), "concat spatial dims mismatch");
            c_total += c;
        }
        let mut data = Vec::with_capacity(c_total * h * w);
        for p in parts {
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        self.push(Tensor::from_vec(c_total, h, w, data), Op::Concat(parts.to_vec()))
    }

    pub fn slice_c(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (c, h, w) = self.nodes[x.0].value.shape();
        assert!(start + len <= c, "channel slice out of range");
        let hw = h * w;
        let data = self.nodes[x.0].value.data()[start * hw..(start + len) * hw].to_vec();
        self.push(Tensor::from_vec(len, h, w, data), Op::SliceC { x, start })
    }

    /// Replicate a `[C,1,1]` tensor across `h x w`.
    pub fn broadcast_c(&mut self, x: NodeId, h: usize, w: usize) -> NodeId {
        let (c, xh, xw) = self.nodes[x.0].value.shape();
        assert_eq!((xh, xw), (1, 1), "broadcast_c expects a [C,1,1] tensor");
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            let v = self.nodes[x.0].value.data()[ch];
            data.extend(std::iter::repeat_n(v, h * w));
        }
        self.push(Tensor::from_vec(c, h, w, data), Op::BroadcastC { x })
    }

    // -- conv / resampling ----------------------------------------------------

    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
        kh: usize,
        kw: usize,
    ) -> NodeId {
        let bias = b.map(|bb| self.nodes[bb.0].value.clone());
        let v = conv2d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            bias.as_ref(),
            stride,
            pad,
            kh,
            kw,
        );
        self.push(
            v,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                kh,
                kw,
            },
        )
    }

    /// Bilinear resize with half-pixel centers (align_corners=false) and
    /// clamped sampling.
    pub fn resize_bilinear(&mut self, x: NodeId, out_h: usize, out_w: usize) -> NodeId {
        let v = resize_forward(&self.nodes[x.0].value, out_h, out_w);
        self.push(v, Op::Resize { x })
    }

    /// Backward-warp `src` by `flow`: `out(p) = bilinear(src, p + flow(p))`
    /// with replicate borders.
    pub fn warp(&mut self, src: NodeId, flow: NodeId) -> NodeId {
        let v = warp_forward(&self.nodes[src.0].value, &self.nodes[flow.0].value);
        self.push(v, Op::Warp { src, flow })
    }

    // -- quantization ---------------------------------------------------------

    /// Quantize per the tape mode: additive uniform noise when training,
    /// round-ties-even at inference.
    pub fn quantize(&mut self, x: NodeId) -> NodeId {
        match &mut self.rng {
            Some(rng) => {
                let (c, h, w) = self.nodes[x.0].value.shape();
                let noise = Tensor::from_vec(
                    c,
                    h,
                    w,
                    (0..c * h * w).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                );
                let v = self.nodes[x.0].value.zip_map(&noise, |a, n| a + n);
                self.push(v, Op::AddNoise(x))
            }
            None => {
                let v = self.nodes[x.0].value.round_ties_even();
                self.push(v, Op::Round)
            }
        }
    }

    // -- reductions / losses --------------------------------------------------

    /// Total Laplace bit cost of `q` under per-element `(mu, b)`; scalar node.
    /// Probabilities are integrated over unit bins and floored at 2^-16.
    pub fn laplace_bits(&mut self, q: NodeId, mu: NodeId, b: NodeId) -> NodeId {
        let v = laplace_bits_forward(
            &self.nodes[q.0].value,
            &self.nodes[mu.0].value,
            &self.nodes[b.0].value,
        );
        self.push(Tensor::scalar(v as f32), Op::LaplaceBits { q, mu, b })
    }

    /// Mean squared error; scalar node.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let tb = &self.nodes[b.0].value;
        assert_eq!(ta.shape(), tb.shape(), "mse shape mismatch");
        let mut acc = 0.0f64;
        for (x, y) in ta.data().iter().zip(tb.data()) {
            let d = (*x - *y) as f64;
            acc += d * d;
        }
        let v = (acc / ta.numel() as f64) as f32;
        self.push(Tensor::scalar(v), Op::Mse { a, b })
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let t = &self.nodes[x.0].value;
        let v = (t.data().iter().map(|&a| a as f64).sum::<f64>() / t.numel() as f64) as f32;
        self.push(Tensor::scalar(v), Op::Mean(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let t = &self.nodes[x.0].value;
        let v = t.data().iter().map(|&a| a as f64).sum::<f64>() as f32;
        self.push(Tensor::scalar(v), Op::Sum(x))
    }

    /// Separable valid correlation with a symmetric 1-D kernel, per channel.
    pub fn blur_valid(&mut self, x: NodeId, kernel: &[f32]) -> NodeId {
        let v = blur_valid_forward(&self.nodes[x.0].value, kernel);
        self.push(
            v,
            Op::BlurValid {
                x,
                kernel: kernel.to_vec(),
            },
        )
    }

    /// 2x2 average pooling with floor semantics (trailing odd row/col dropped).
    pub fn avg_pool2(&mut self, x: NodeId) -> NodeId {
        let v = avg_pool2_forward(&self.nodes[x.0].value);
        self.push(v, Op::AvgPool2(x))
    }

    // -- backward ---------------------------------------------------------------

    /// Reverse sweep from `loss`; gradients for parameter leaves are
    /// accumulated into `store`. Node gradients stay inspectable via `grad`.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads, store);
            grads[i] = Some(g);
        }
        self.grads = Some(grads);
    }

    /// Gradient of the last `backward` loss w.r.t. any node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.as_ref().and_then(|g| g[id.0].as_ref())
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Tensor,
        grads: &mut Vec<Option<Tensor>>,
        store: &mut ParamStore,
    ) {
        let acc = |grads: &mut Vec<Option<Tensor>>, id: NodeId, t: Tensor| {
            match &mut grads[id.0] {
                Some(existing) => existing.add_scaled(&t, 1.0),
                slot => *slot = Some(t),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf { param } => {
                if let Some(p) = param {
                    store.accumulate_grad(ParamId(*p), g);
                }
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(&self.nodes[b.0].value, |gv, bv| gv * bv);
                let gb = g.zip_map(&self.nodes[a.0].value, |gv, av| gv * av);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Div(a, b) => {
                let bv = &self.nodes[b.0].value;
                let av = &self.nodes[a.0].value;
                let ga = g.zip_map(bv, |gv, b1| gv / b1);
                let mut gb = g.zip_map(av, |gv, a1| gv * a1);
                gb = gb.zip_map(bv, |v, b1| -v / (b1 * b1));
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::AddScalar(a) => acc(grads, *a, g.clone()),
            Op::MulScalar(a, c) => acc(grads, *a, g.map(|v| v * c)),
            Op::Sigmoid(a) => {
                let s = &self.nodes[i].value;
                acc(grads, *a, g.zip_map(s, |gv, sv| gv * sv * (1.0 - sv)));
            }
            Op::Tanh(a) => {
                let t = &self.nodes[i].value;
                acc(grads, *a, g.zip_map(t, |gv, tv| gv * (1.0 - tv * tv)));
            }
            Op::Relu(a) => {
                let x = &self.nodes[a.0].value;
                acc(grads, *a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::LeakyRelu(a, slope) => {
                let x = &self.nodes[a.0].value;
                let s = *slope;
                acc(
                    grads,
                    *a,
                    g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { s * gv }),
                );
            }
            Op::Softplus(a) => {
                let x = &self.nodes[a.0].value;
                acc(
                    grads,
                    *a,
                    g.zip_map(x, |gv, xv| gv / (1.0 + (-xv).exp())),
                );
            }
            Op::ClampMin(a, c) => {
                let x = &self.nodes[a.0].value;
                let cc = *c;
                acc(grads, *a, g.zip_map(x, |gv, xv| if xv > cc { gv } else { 0.0 }));
            }
            Op::Clamp(a, lo, hi) => {
                let x = &self.nodes[a.0].value;
                let (l, h) = (*lo, *hi);
                acc(
                    grads,
                    *a,
                    g.zip_map(x, |gv, xv| if xv > l && xv < h { gv } else { 0.0 }),
                );
            }
            Op::PowConst(a, e) => {
                let x = &self.nodes[a.0].value;
                let ee = *e;
                acc(
                    grads,
                    *a,
                    g.zip_map(x, |gv, xv| gv * ee * xv.powf(ee - 1.0)),
                );
            }
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                kh,
                kw,
            } => {
                let (gx, gw, gb) = conv2d_backward(
                    &self.nodes[x.0].value,
                    &self.nodes[w.0].value,
                    g,
                    *stride,
                    *pad,
                    *kh,
                    *kw,
                );
                acc(grads, *x, gx);
                acc(grads, *w, gw);
                if let Some(bb) = b {
                    acc(grads, *bb, gb);
                }
            }
            Op::Resize { x } => {
                let gx = resize_backward(&self.nodes[x.0].value, g);
                acc(grads, *x, gx);
            }
            Op::Warp { src, flow } => {
                let (gs, gf) = warp_backward(
                    &self.nodes[src.0].value,
                    &self.nodes[flow.0].value,
                    g,
                );
                acc(grads, *src, gs);
                acc(grads, *flow, gf);
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let (c, h, w) = self.nodes[p.0].value.shape();
                    let hw = h * w;
                    let slice = g.data()[start * hw..(start + c) * hw].to_vec();
                    acc(grads, *p, Tensor::from_vec(c, h, w, slice));
                    start += c;
                }
            }
            Op::SliceC { x, start } => {
                let (c, h, w) = self.nodes[x.0].value.shape();
                let (gc, _, _) = g.shape();
                let hw = h * w;
                let mut gx = Tensor::zeros(c, h, w);
                gx.data_mut()[start * hw..(start + gc) * hw].copy_from_slice(g.data());
                acc(grads, *x, gx);
            }
            Op::BroadcastC { x } => {
                let (c, _, _) = self.nodes[x.0].value.shape();
                let (_, h, w) = g.shape();
                let mut gx = Tensor::zeros(c, 1, 1);
                for ch in 0..c {
                    let mut s = 0.0f64;
                    for v in &g.data()[ch * h * w..(ch + 1) * h * w] {
                        s += *v as f64;
                    }
                    gx.data_mut()[ch] = s as f32;
                }
                acc(grads, *x, gx);
            }
            Op::AddNoise(x) => acc(grads, *x, g.clone()),
            Op::Round => {
                // hard quantization: no gradient path (training uses noise)
            }
            Op::LaplaceBits { q, mu, b } => {
                let (gq, gmu, gb) = laplace_bits_backward(
                    &self.nodes[q.0].value,
                    &self.nodes[mu.0].value,
                    &self.nodes[b.0].value,
                    g.data()[0],
                );
                acc(grads, *q, gq);
                acc(grads, *mu, gmu);
                acc(grads, *b, gb);
            }
            Op::Mse { a, b } => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let n = ta.numel() as f32;
                let gs = g.data()[0];
                let ga = ta.zip_map(tb, |x, y| gs * 2.0 * (x - y) / n);
                let gb = ga.map(|v| -v);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Mean(x) => {
                let t = &self.nodes[x.0].value;
                let v = g.data()[0] / t.numel() as f32;
                let (c, h, w) = t.shape();
                acc(grads, *x, Tensor::filled(c, h, w, v));
            }
            Op::Sum(x) => {
                let t = &self.nodes[x.0].value;
                let (c, h, w) = t.shape();
                acc(grads, *x, Tensor::filled(c, h, w, g.data()[0]));
            }
            Op::BlurValid { x, kernel } => {
                let gx = blur_valid_backward(&self.nodes[x.0].value, g, kernel);
                acc(grads, *x, gx);
            }
            Op::AvgPool2(x) => {
                let gx = avg_pool2_backward(&self.nodes[x.0].value, g);
                acc(grads, *x, gx);
            }
        }
    }
}

fn softplus_f(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        (1.0 + x.exp()).ln()
    }
}

// ---------------------------------------------------------------------------
// Op kernels
// ---------------------------------------------------------------------------

fn matmul(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    let a = ArrayView2::from_shape((m, k), a).unwrap();
    let b = ArrayView2::from_shape((k, n), b).unwrap();
    let mut c = ArrayViewMut2::from_shape((m, n), out).unwrap();
    general_mat_mul(1.0, &a, &b, 0.0, &mut c);
}

/// `out[m,k] = a[m,n] * b[k,n]^T`
fn matmul_abt(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    let a = ArrayView2::from_shape((m, n), a).unwrap();
    let b = ArrayView2::from_shape((k, n), b).unwrap();
    let bt = b.t();
    let mut c = ArrayViewMut2::from_shape((m, k), out).unwrap();
    general_mat_mul(1.0, &a, &bt, 0.0, &mut c);
}

/// `out[k,n] = a[m,k]^T * b[m,n]`
fn matmul_atb(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], out: &mut [f32]) {
    let a = ArrayView2::from_shape((m, k), a).unwrap();
    let at = a.t();
    let b = ArrayView2::from_shape((m, n), b).unwrap();
    let mut c = ArrayViewMut2::from_shape((k, n), out).unwrap();
    general_mat_mul(1.0, &at, &b, 0.0, &mut c);
}

fn conv_out_dim(input: usize, pad: usize, k: usize, stride: usize) -> usize {
    assert!(input + 2 * pad >= k, "conv kernel larger than padded input");
    (input + 2 * pad - k) / stride + 1
}

fn im2col(
    x: &Tensor,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let (cin, h, w) = x.shape();
    let n = oh * ow;
    let mut cols = vec![0.0f32; cin * kh * kw * n];
    let xd = x.data();
    for c in 0..cin {
        for u in 0..kh {
            for v in 0..kw {
                let row = ((c * kh) + u) * kw + v;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * stride + u) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = (c * h + iy as usize) * w;
                    let dst_row = oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + v) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[dst_row + ox] = xd[src_row + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
) -> Tensor {
    let (cin, h, win) = x.shape();
    let (cout, wcin, wk) = w.shape();
    assert_eq!(wcin, cin, "conv2d channel mismatch");
    assert_eq!(wk, kh * kw, "conv2d kernel size mismatch");
    let oh = conv_out_dim(h, pad, kh, stride);
    let ow = conv_out_dim(win, pad, kw, stride);
    let n = oh * ow;
    let k = cin * kh * kw;
    let cols = im2col(x, stride, pad, kh, kw, oh, ow);
    let mut out = vec![0.0f32; cout * n];
    matmul(cout, k, n, w.data(), &cols, &mut out);
    if let Some(bias) = b {
        assert_eq!(bias.shape(), (cout, 1, 1), "conv2d bias shape");
        for o in 0..cout {
            let bv = bias.data()[o];
            for v in &mut out[o * n..(o + 1) * n] {
                *v += bv;
            }
        }
    }
    Tensor::from_vec(cout, oh, ow, out)
}

fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, h, win) = x.shape();
    let (cout, _, _) = w.shape();
    let (gc, oh, ow) = gy.shape();
    assert_eq!(gc, cout);
    let n = oh * ow;
    let k = cin * kh * kw;

    // bias grad: row sums
    let mut gb = Tensor::zeros(cout, 1, 1);
    for o in 0..cout {
        let mut s = 0.0f64;
        for v in &gy.data()[o * n..(o + 1) * n] {
            s += *v as f64;
        }
        gb.data_mut()[o] = s as f32;
    }

    // weight grad: gy [cout,n] x cols [k,n]^T
    let cols = im2col(x, stride, pad, kh, kw, oh, ow);
    let mut gw = vec![0.0f32; cout * k];
    matmul_abt(cout, n, k, gy.data(), &cols, &mut gw);

    // input grad: w^T [k,cout] x gy [cout,n] -> col grads, then col2im
    let mut gcols = vec![0.0f32; k * n];
    matmul_atb(cout, k, n, w.data(), gy.data(), &mut gcols);
    let mut gx = Tensor::zeros(cin, h, win);
    let gxd = gx.data_mut();
    for c in 0..cin {
        for u in 0..kh {
            for v in 0..kw {
                let row = ((c * kh) + u) * kw + v;
                let src = &gcols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * stride + u) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (c * h + iy as usize) * win;
                    let src_row = oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + v) as isize - pad as isize;
                        if ix < 0 || ix >= win as isize {
                            continue;
                        }
                        gxd[dst_row + ix as usize] += src[src_row + ox];
                    }
                }
            }
        }
    }
    (gx, Tensor::from_vec(cout, cin, kh * kw, gw), gb)
}

/// Per-axis sampling plan for align_corners=false bilinear resize.
fn resize_axis(out: usize, input: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / out as f64;
    (0..out)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            let i0 = src.floor();
            let f = (src - i0) as f32;
            let a = (i0 as isize).clamp(0, input as isize - 1) as usize;
            let b = (i0 as isize + 1).clamp(0, input as isize - 1) as usize;
            (a, b, f)
        })
        .collect()
}

fn resize_forward(x: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = x.shape();
    let ys = resize_axis(out_h, h);
    let xs = resize_axis(out_w, w);
    let mut out = Tensor::zeros(c, out_h, out_w);
    for ch in 0..c {
        let plane = x.plane(ch);
        let dst = out.plane_mut(ch);
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v00 = plane[y0 * w + x0];
                let v01 = plane[y0 * w + x1];
                let v10 = plane[y1 * w + x0];
                let v11 = plane[y1 * w + x1];
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bot = v10 * (1.0 - fx) + v11 * fx;
                dst[oy * out_w + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

fn resize_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let (_, oh, ow) = gy.shape();
    let ys = resize_axis(oh, h);
    let xs = resize_axis(ow, w);
    let mut gx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let src = gy.plane(ch);
        let dst = gx.plane_mut(ch);
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let g = src[oy * ow + ox];
                dst[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                dst[y0 * w + x1] += g * (1.0 - fy) * fx;
                dst[y1 * w + x0] += g * fy * (1.0 - fx);
                dst[y1 * w + x1] += g * fy * fx;
            }
        }
    }
    gx
}

fn warp_forward(src: &Tensor, flow: &Tensor) -> Tensor {
    let (c, h, w) = src.shape();
    let (fc, fh, fw) = flow.shape();
    assert_eq!(fc, 2, "flow must have 2 channels (dx, dy)");
    assert_eq!((fh, fw), (h, w), "flow dims must match source dims");
    let dx = flow.plane(0);
    let dy = flow.plane(1);
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let plane = src.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let xx = x as f32 + dx[i];
                let yy = y as f32 + dy[i];
                let x0 = xx.floor();
                let y0 = yy.floor();
                let fx = xx - x0;
                let fy = yy - y0;
                let ix0 = (x0 as isize).clamp(0, w as isize - 1) as usize;
                let ix1 = (x0 as isize + 1).clamp(0, w as isize - 1) as usize;
                let iy0 = (y0 as isize).clamp(0, h as isize - 1) as usize;
                let iy1 = (y0 as isize + 1).clamp(0, h as isize - 1) as usize;
                let v00 = plane[iy0 * w + ix0];
                let v01 = plane[iy0 * w + ix1];
                let v10 = plane[iy1 * w + ix0];
                let v11 = plane[iy1 * w + ix1];
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bot = v10 * (1.0 - fx) + v11 * fx;
                dst[i] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

fn warp_backward(src: &Tensor, flow: &Tensor, gy: &Tensor) -> (Tensor, Tensor) {
    let (c, h, w) = src.shape();
    let dx = flow.plane(0);
    let dy = flow.plane(1);
    let mut gsrc = Tensor::zeros(c, h, w);
    let mut gflow = Tensor::zeros(2, h, w);
    for ch in 0..c {
        let plane = src.plane(ch);
        let gout = gy.plane(ch);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let g = gout[i];
                if g == 0.0 {
                    continue;
                }
                let xx = x as f32 + dx[i];
                let yy = y as f32 + dy[i];
                let x0 = xx.floor();
                let y0 = yy.floor();
                let fx = xx - x0;
                let fy = yy - y0;
                let ix0 = (x0 as isize).clamp(0, w as isize - 1) as usize;
                let ix1 = (x0 as isize + 1).clamp(0, w as isize - 1) as usize;
                let iy0 = (y0 as isize).clamp(0, h as isize - 1) as usize;
                let iy1 = (y0 as isize + 1).clamp(0, h as isize - 1) as usize;
                let v00 = plane[iy0 * w + ix0];
                let v01 = plane[iy0 * w + ix1];
                let v10 = plane[iy1 * w + ix0];
                let v11 = plane[iy1 * w + ix1];
                {
                    let gs = gsrc.plane_mut(ch);
                    gs[iy0 * w + ix0] += g * (1.0 - fy) * (1.0 - fx);
                    gs[iy0 * w + ix1] += g * (1.0 - fy) * fx;
                    gs[iy1 * w + ix0] += g * fy * (1.0 - fx);
                    gs[iy1 * w + ix1] += g * fy * fx;
                }
                let d_fx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10);
                let d_fy = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01);
                gflow.plane_mut(0)[i] += g * d_fx;
                gflow.plane_mut(1)[i] += g * d_fy;
            }
        }
    }
    (gsrc, gflow)
}

fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

fn laplace_pdf(x: f64, b: f64) -> f64 {
    (-x.abs() / b).exp() / (2.0 * b)
}

fn laplace_dcdf_db(x: f64, b: f64) -> f64 {
    -(x / b) * laplace_pdf(x, b)
}

fn laplace_bits_forward(q: &Tensor, mu: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(q.shape(), mu.shape(), "laplace_bits mu shape mismatch");
    assert_eq!(q.shape(), b.shape(), "laplace_bits b shape mismatch");
    let ln2 = std::f64::consts::LN_2;
    let mut bits = 0.0f64;
    for ((&qv, &mv), &bv) in q.data().iter().zip(mu.data()).zip(b.data()) {
        let d = qv as f64 - mv as f64;
        let bb = bv as f64;
        let p = laplace_cdf(d + 0.5, bb) - laplace_cdf(d - 0.5, bb);
        let pf = p.max(PROB_FLOOR);
        bits += -pf.ln() / ln2;
    }
    bits
}

fn laplace_bits_backward(q: &Tensor, mu: &Tensor, b: &Tensor, gs: f32) -> (Tensor, Tensor, Tensor) {
    let (c, h, w) = q.shape();
    let ln2 = std::f64::consts::LN_2;
    let mut gq = Tensor::zeros(c, h, w);
    let mut gmu = Tensor::zeros(c, h, w);
    let mut gb = Tensor::zeros(c, h, w);
    for idx in 0..q.numel() {
        let d = q.data()[idx] as f64 - mu.data()[idx] as f64;
        let bb = b.data()[idx] as f64;
        let p = laplace_cdf(d + 0.5, bb) - laplace_cdf(d - 0.5, bb);
        if p <= PROB_FLOOR {
            continue; // floored: constant bits, zero gradient
        }
        let dbits_dp = -1.0 / (p * ln2);
        let dp_dd = laplace_pdf(d + 0.5, bb) - laplace_pdf(d - 0.5, bb);
        let dp_db = laplace_dcdf_db(d + 0.5, bb) - laplace_dcdf_db(d - 0.5, bb);
        gq.data_mut()[idx] = (gs as f64 * dbits_dp * dp_dd) as f32;
        gmu.data_mut()[idx] = -(gs as f64 * dbits_dp * dp_dd) as f32;
        gb.data_mut()[idx] = (gs as f64 * dbits_dp * dp_db) as f32;
    }
    (gq, gmu, gb)
}

fn blur_valid_forward(x: &Tensor, kernel: &[f32]) -> Tensor {
    let (c, h, w) = x.shape();
    let k = kernel.len();
    assert!(h >= k && w >= k, "blur window larger than input");
    let ow = w - k + 1;
    let oh = h - k + 1;
    // horizontal then vertical
    let mut tmp = vec![0.0f32; c * h * ow];
    for ch in 0..c {
        let plane = x.plane(ch);
        for y in 0..h {
            for ox in 0..ow {
                let mut s = 0.0f32;
                for (t, &kv) in kernel.iter().enumerate() {
                    s += plane[y * w + ox + t] * kv;
                }
                tmp[(ch * h + y) * ow + ox] = s;
            }
        }
    }
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        let dst = out.plane_mut(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0f32;
                for (t, &kv) in kernel.iter().enumerate() {
                    s += tmp[(ch * h + oy + t) * ow + ox] * kv;
                }
                dst[oy * ow + ox] = s;
            }
        }
    }
    out
}

fn blur_valid_backward(x: &Tensor, gy: &Tensor, kernel: &[f32]) -> Tensor {
    let (c, h, w) = x.shape();
    let (_, oh, ow) = gy.shape();
    // scatter through vertical stage then horizontal stage
    let mut gtmp = vec![0.0f32; c * h * ow];
    for ch in 0..c {
        let gsrc = gy.plane(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gsrc[oy * ow + ox];
                for (t, &kv) in kernel.iter().enumerate() {
                    gtmp[(ch * h + oy + t) * ow + ox] += g * kv;
                }
            }
        }
    }
    let mut gx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let dst = gx.plane_mut(ch);
        for y in 0..h {
            for ox in 0..ow {
                let g = gtmp[(ch * h + y) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                for (t, &kv) in kernel.iter().enumerate() {
                    dst[y * w + ox + t] += g * kv;
                }
            }
        }
    }
    gx
}

fn avg_pool2_forward(x: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let oh = h / 2;
    let ow = w / 2;
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        let plane = x.plane(ch);
        let dst = out.plane_mut(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = 2 * oy;
                let x0 = 2 * ox;
                dst[oy * ow + ox] = 0.25
                    * (plane[y0 * w + x0]
                        + plane[y0 * w + x0 + 1]
                        + plane[(y0 + 1) * w + x0]
                        + plane[(y0 + 1) * w + x0 + 1]);
            }
        }
    }
    out
}

fn avg_pool2_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let (_, oh, ow) = gy.shape();
    let mut gx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let gsrc = gy.plane(ch);
        let dst = gx.plane_mut(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let g = 0.25 * gsrc[oy * ow + ox];
                let y0 = 2 * oy;
                let x0 = 2 * ox;
                dst[y0 * w + x0] += g;
                dst[y0 * w + x0 + 1] += g;
                dst[(y0 + 1) * w + x0] += g;
                dst[(y0 + 1) * w + x0 + 1] += g;
            }
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
