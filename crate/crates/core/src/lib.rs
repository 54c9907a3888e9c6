//! SDDC: a toy learned video codec.
//!
//! The codec decomposes frames into low-frequency structure and
//! high-frequency detail components, estimates and codes one motion field
//! per component, mines multi-scale short-term temporal contexts from the
//! propagated reference feature, accumulates long-term memory with a
//! convolutional LSTM, and conditions a contextual frame codec on the fused
//! contexts. Entropy coding uses Laplace models with hyper and temporal
//! priors over a binary range coder, producing real decodable bitstreams.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`frames_io`]: raw YUV / image-directory ingestion and padding
//! - [`sdd`]: structure/detail decomposition
//! - [`flow`]: pyramidal flow estimation and warping
//! - [`motion_codec`]: joint compression of the two motion fields
//! - [`context`]: short-term context mining, ConvLSTM memory, fusion
//! - [`frame_codec`]: conditional contextual encoder/decoder and intra path
//! - [`entropy`]: quantization, Laplace modeling, range coder
//! - [`training`]: rate-distortion losses, optimizer, training loop
//! - [`metrics`]: PSNR, MS-SSIM, BD-rate
//! - [`container`], [`session`]: bitstream format and coding sessions

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod context;
pub mod entropy;
pub mod flow;
pub mod frame_codec;
pub mod error;
pub mod frames_io;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod motion_codec;
pub mod nn;
pub mod sdd;
pub mod session;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{CodecError, Result};
pub use tensor::Tensor;
