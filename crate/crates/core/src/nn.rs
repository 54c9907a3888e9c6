//! Layer wrappers over the autodiff tape: convolutions, residual blocks,
//! and weight initialization.

use crate::graph::{NodeId, ParamId, ParamStore, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Weight initialization for a conv layer.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform He initialization scaled by fan-in.
    He,
    /// All-zero weights and bias; used where a layer must start as identity
    /// or silence (flow heads, long/short fusion convs).
    Zero,
}

/// 3x3 (or kxk) convolution with bias.
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
    pub k: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pad = k / 2;
        let w = match init {
            Init::He => {
                let fan_in = (cin * k * k) as f32;
                let bound = (6.0 / fan_in).sqrt();
                Tensor::from_vec(
                    cout,
                    cin,
                    k * k,
                    (0..cout * cin * k * k)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect(),
                )
            }
            Init::Zero => Tensor::zeros(cout, cin, k * k),
        };
        let w = store.register(&format!("{name}.w"), w);
        let b = store.register(&format!("{name}.b"), Tensor::zeros(cout, 1, 1));
        Conv2d {
            w,
            b: Some(b),
            stride,
            pad,
            k,
        }
    }

    /// Convolution without bias (used for the recurrent half of LSTM gates).
    #[allow(clippy::too_many_arguments)]
    pub fn new_no_bias(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pad = k / 2;
        let w = match init {
            Init::He => {
                let fan_in = (cin * k * k) as f32;
                let bound = (6.0 / fan_in).sqrt();
                Tensor::from_vec(
                    cout,
                    cin,
                    k * k,
                    (0..cout * cin * k * k)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect(),
                )
            }
            Init::Zero => Tensor::zeros(cout, cin, k * k),
        };
        Conv2d {
            w: store.register(&format!("{name}.w"), w),
            b: None,
            stride,
            pad,
            k,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let w = tape.param(store, self.w);
        let b = self.b.map(|b| tape.param(store, b));
        tape.conv2d(x, w, b, self.stride, self.pad, self.k, self.k)
    }
}

/// Two 3x3 convs with a ReLU between and an additive skip. The second conv
/// starts at zero so the block is the identity at initialization and
/// activation magnitudes stay bounded through deep chains.
pub struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResBlock {
    pub fn new(store: &mut ParamStore, name: &str, ch: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), ch, ch, 3, 1, Init::He, rng),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), ch, ch, 3, 1, Init::Zero, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let h = self.conv1.forward(tape, store, x);
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, store, h);
        tape.add(x, h)
    }
}

/// Stride-2 downsampling conv followed by a residual block.
pub struct DownBlock {
    conv: Conv2d,
    res: ResBlock,
}

impl DownBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        DownBlock {
            conv: Conv2d::new(store, &format!("{name}.down"), cin, cout, 3, 2, Init::He, rng),
            res: ResBlock::new(store, &format!("{name}.res"), cout, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let h = self.conv.forward(tape, store, x);
        let h = tape.leaky_relu(h, 0.1);
        self.res.forward(tape, store, h)
    }
}

/// Bilinear x2 upsampling followed by a conv and a residual block.
pub struct UpBlock {
    conv: Conv2d,
    res: ResBlock,
}

impl UpBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        UpBlock {
            conv: Conv2d::new(store, &format!("{name}.up"), cin, cout, 3, 1, Init::He, rng),
            res: ResBlock::new(store, &format!("{name}.res"), cout, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let (_, h, w) = tape.value(x).shape();
        let up = tape.resize_bilinear(x, h * 2, w * 2);
        let h = self.conv.forward(tape, store, up);
        let h = tape.leaky_relu(h, 0.1);
        self.res.forward(tape, store, h)
    }
}
