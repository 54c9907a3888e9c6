//! Model and rate-distortion configuration.

/// Lagrangian multipliers selectable via `--lambda-index`.
pub const LAMBDAS: [f32; 4] = [85.0, 170.0, 380.0, 840.0];

/// Hierarchical per-frame weights, cycled by GOP-relative inter index.
pub const FRAME_WEIGHT_CYCLE: [f32; 4] = [0.5, 1.2, 0.5, 0.9];

/// Spatial stride every coded frame is padded to. Three halvings feed the
/// multi-scale contexts and the latents sit at 1/16 with hyper latents at
/// another 1/4, so 64 covers every grid in the pipeline.
pub const CODEC_STRIDE: usize = 64;

/// Channel widths of the learned transforms.
///
/// `default()` is the reference configuration; `desk_small()` trades width
/// for speed so CPU-only training runs stay in budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Reference feature channels (`C_f`); contexts use `C_f`, `2C_f`, `4C_f`.
    pub cf: usize,
    /// Contextual (frame) latent channels.
    pub cy: usize,
    /// Motion latent channels.
    pub cm: usize,
    /// Hyper latent channels (both codecs).
    pub ch: usize,
    /// Hidden width of each flow-estimation level.
    pub flow_ch: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cf: 48,
            cy: 96,
            cm: 64,
            ch: 32,
            flow_ch: 32,
        }
    }
}

impl ModelConfig {
    /// Narrow configuration for single-core training runs and CI.
    pub fn desk_small() -> Self {
        ModelConfig {
            cf: 16,
            cy: 48,
            cm: 32,
            ch: 16,
            flow_ch: 16,
        }
    }
}

/// Distortion metric for the RD loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distortion {
    Mse,
    OneMinusMsSsim,
}

/// Rate-distortion training configuration.
#[derive(Clone, Debug)]
pub struct RdConfig {
    pub lambda: f32,
    pub weights_cycle: [f32; 4],
    /// Cascaded clip length (coded inter frames per cascaded step).
    pub clip_len: usize,
    pub distortion: Distortion,
}

impl RdConfig {
    pub fn new(lambda_index: usize) -> Self {
        RdConfig {
            lambda: LAMBDAS[lambda_index],
            weights_cycle: FRAME_WEIGHT_CYCLE,
            clip_len: 5,
            distortion: Distortion::Mse,
        }
    }

    /// Weight for the inter frame at GOP-relative index `t` (0-based),
    /// cycling past four frames.
    pub fn frame_weight(&self, t: usize) -> f32 {
        self.weights_cycle[t % self.weights_cycle.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_cycle_extends_periodically() {
        let cfg = RdConfig::new(3);
        let w: Vec<f32> = (0..5).map(|t| cfg.frame_weight(t)).collect();
        assert_eq!(w, vec![0.5, 1.2, 0.5, 0.9, 0.5]);
        assert_eq!(cfg.lambda, 840.0);
    }

    #[test]
    fn lambda_set_matches_configuration() {
        assert_eq!(LAMBDAS, [85.0, 170.0, 380.0, 840.0]);
    }
}
