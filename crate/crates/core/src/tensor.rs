//! Dense `C x H x W` float tensor used throughout the codec.
//!
//! Values are stored row-major per channel (`data[c*h*w + y*w + x]`), which
//! keeps im2col gathering and the bitstream quantizers simple and
//! deterministic. All learned-network math runs in f32; evaluation metrics
//! that need tighter accumulation use f64 internally.

use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            shape: [c, h, w],
            data: vec![0.0; c * h * w],
        }
    }

    pub fn filled(c: usize, h: usize, w: usize, v: f32) -> Self {
        Tensor {
            shape: [c, h, w],
            data: vec![v; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length mismatch");
        Tensor {
            shape: [c, h, w],
            data,
        }
    }

    /// Scalar wrapped as a 1x1x1 tensor (loss values live on the graph too).
    pub fn scalar(v: f32) -> Self {
        Tensor {
            shape: [1, 1, 1],
            data: vec![v],
        }
    }

    pub fn uniform<R: Rng>(c: usize, h: usize, w: usize, lo: f32, hi: f32, rng: &mut R) -> Self {
        let data = (0..c * h * w).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor {
            shape: [c, h, w],
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2])
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.shape[1] + y) * self.shape[2] + x] = v;
    }

    /// Borrow one channel plane as a slice.
    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.shape[1] * self.shape[2];
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let hw = self.shape[1] * self.shape[2];
        &mut self.data[c * hw..(c + 1) * hw]
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor, alpha: f32) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn fill(&mut self, v: f32) {
        self.data.fill(v);
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &v| m.max(v.abs()))
    }

    pub fn mean_abs(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let s: f64 = self.data.iter().map(|&v| v.abs() as f64).sum();
        s / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Round every element to the nearest integer, ties to even.
    pub fn round_ties_even(&self) -> Tensor {
        self.map(|v| v.round_ties_even())
    }

    /// Clamp every element into `[lo, hi]`.
    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }
}
