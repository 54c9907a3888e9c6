//! Rate-distortion losses, the optimizer, and the staged training loop.
//!
//! The per-frame loss is `w_t * lambda * D_t + R_t` with the rate in
//! bits-per-pixel (bits divided by `H*W`), so the published lambda values
//! are meaningful against MSE on [0,1] pixels. Cascaded fine-tuning averages
//! the per-frame losses over a clip, cycling the hierarchical weights.
//!
//! Training runs in three stages: a motion warm-up (flow + motion codec
//! against the warped-prediction error), single-frame training of the full
//! model, and cascaded multi-frame fine-tuning with gradients flowing
//! through the recurrent state inside each clip (state is detached at clip
//! boundaries).

use crate::config::{Distortion, RdConfig};
use crate::entropy::BitEstimate;
use crate::error::{CodecError, Result};
use crate::frames_io::quantize_frame_8bit;
use crate::graph::{NodeId, ParamStore, Tape};
use crate::metrics::{ms_ssim, msssim_scales};
use crate::model::{AblationFlags, SddcModel, StateNodes};
use crate::sdd::{decompose_nodes, SDD_FACTOR};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

// ---------------------------------------------------------------------------
// Loss reports (pure arithmetic)
// ---------------------------------------------------------------------------

/// Per-frame ingredients of a cascaded loss.
#[derive(Clone, Copy, Debug)]
pub struct FrameLossInput {
    pub distortion: f64,
    pub rate_bits: f64,
    /// Pixel count (H*W) of the coded frame.
    pub pixels: usize,
}

#[derive(Clone, Debug)]
pub struct LossReport {
    pub total: f64,
    pub distortion: f64,
    pub rate_bits: f64,
    pub per_frame: Vec<f64>,
}

/// Single-frame rate-distortion loss.
pub fn rd_loss(
    x: &Tensor,
    x_hat: &Tensor,
    rate: BitEstimate,
    w: f32,
    cfg: &RdConfig,
) -> Result<LossReport> {
    if x.shape() != x_hat.shape() {
        return Err(CodecError::ShapeMismatch(format!(
            "rd_loss: {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let distortion = match cfg.distortion {
        Distortion::Mse => {
            let mut acc = 0.0f64;
            for (&a, &b) in x.data().iter().zip(x_hat.data()) {
                let d = a as f64 - b as f64;
                acc += d * d;
            }
            acc / x.numel() as f64
        }
        Distortion::OneMinusMsSsim => 1.0 - ms_ssim(x, x_hat)?,
    };
    let pixels = x.height() * x.width();
    let total = w as f64 * cfg.lambda as f64 * distortion + rate.bits / pixels as f64;
    Ok(LossReport {
        total,
        distortion,
        rate_bits: rate.bits,
        per_frame: vec![total],
    })
}

/// Cascaded loss: mean of per-frame RD losses over a clip of exactly
/// `cfg.clip_len` coded frames, hierarchical weights cycled by index.
pub fn cascaded_loss(frames: &[FrameLossInput], cfg: &RdConfig) -> Result<LossReport> {
    if frames.len() != cfg.clip_len {
        return Err(CodecError::InvalidArgument(format!(
            "cascaded_loss expects {} frames, got {}",
            cfg.clip_len,
            frames.len()
        )));
    }
    let mut per_frame = Vec::with_capacity(frames.len());
    let mut dist = 0.0;
    let mut rate = 0.0;
    for (t, f) in frames.iter().enumerate() {
        let w = cfg.frame_weight(t) as f64;
        let term = w * cfg.lambda as f64 * f.distortion + f.rate_bits / f.pixels as f64;
        per_frame.push(term);
        dist += f.distortion;
        rate += f.rate_bits;
    }
    let total = per_frame.iter().sum::<f64>() / frames.len() as f64;
    Ok(LossReport {
        total,
        distortion: dist / frames.len() as f64,
        rate_bits: rate,
        per_frame,
    })
}

// ---------------------------------------------------------------------------
// Differentiable MS-SSIM
// ---------------------------------------------------------------------------

fn gaussian_kernel_f32() -> Vec<f32> {
    let sigma = 1.5f64;
    let n = 11;
    let c = (n / 2) as f64;
    let mut k: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c) * (i as f64 - c)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

/// MS-SSIM as a tape node, for the 1-MS-SSIM distortion variant.
pub fn ms_ssim_node(tape: &mut Tape, a: NodeId, b: NodeId) -> NodeId {
    let (_, h, w) = tape.value(a).shape();
    let scales = msssim_scales(h, w);
    assert!(scales >= 1, "frame too small for the SSIM window");
    const WEIGHTS: [f32; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let wsum: f32 = WEIGHTS[..scales].iter().sum();
    let kernel = gaussian_kernel_f32();
    let c1 = 0.01f32 * 0.01;
    let c2 = 0.03f32 * 0.03;

    let mut xa = a;
    let mut xb = b;
    let mut result: Option<NodeId> = None;
    #[allow(clippy::needless_range_loop)]
    for l in 0..scales {
        let mu_a = tape.blur_valid(xa, &kernel);
        let mu_b = tape.blur_valid(xb, &kernel);
        let aa = tape.mul(xa, xa);
        let bb = tape.mul(xb, xb);
        let ab = tape.mul(xa, xb);
        let e_aa = tape.blur_valid(aa, &kernel);
        let e_bb = tape.blur_valid(bb, &kernel);
        let e_ab = tape.blur_valid(ab, &kernel);
        let mu_aa = tape.mul(mu_a, mu_a);
        let mu_bb = tape.mul(mu_b, mu_b);
        let mu_ab = tape.mul(mu_a, mu_b);
        let var_a = tape.sub(e_aa, mu_aa);
        let var_b = tape.sub(e_bb, mu_bb);
        let cov = tape.sub(e_ab, mu_ab);

        let cs_num0 = tape.mul_scalar(cov, 2.0);
        let cs_num = tape.add_scalar(cs_num0, c2);
        let cs_den0 = tape.add(var_a, var_b);
        let cs_den = tape.add_scalar(cs_den0, c2);
        let cs_map = tape.div(cs_num, cs_den);

        let factor = if l + 1 == scales {
            let l_num0 = tape.mul_scalar(mu_ab, 2.0);
            let l_num = tape.add_scalar(l_num0, c1);
            let l_den0 = tape.add(mu_aa, mu_bb);
            let l_den = tape.add_scalar(l_den0, c1);
            let l_map = tape.div(l_num, l_den);
            let ssim_map = tape.mul(l_map, cs_map);
            tape.mean(ssim_map)
        } else {
            tape.mean(cs_map)
        };
        let clamped = tape.clamp_min(factor, 1e-6);
        let powed = tape.pow_const(clamped, WEIGHTS[l] / wsum);
        result = Some(match result {
            Some(r) => tape.mul(r, powed),
            None => powed,
        });
        if l + 1 < scales {
            xa = tape.avg_pool2(xa);
            xb = tape.avg_pool2(xb);
        }
    }
    result.unwrap()
}

// ---------------------------------------------------------------------------
// Tape-level loss builders
// ---------------------------------------------------------------------------

pub struct InterLossNodes {
    pub loss: NodeId,
    pub distortion: NodeId,
    pub rate_bits: NodeId,
    pub state: StateNodes,
}

/// Full-pipeline loss for one inter frame on the tape.
pub fn inter_frame_loss(
    model: &SddcModel,
    tape: &mut Tape,
    x: NodeId,
    state: &StateNodes,
    weight: f32,
    rd: &RdConfig,
    flags: AblationFlags,
) -> InterLossNodes {
    let store = &model.store;
    let (_, h, w) = tape.value(x).shape();
    let (vs, vd) = model.estimate_motion(tape, x, state.prev_frame, flags);
    let m = model.motion.analyze(tape, store, vs, vd);
    let m_q = tape.quantize(m);
    let mh = model.motion.hyper_analyze(tape, store, m);
    let mh_q = tape.quantize(mh);
    let (m_mu, m_b) = model.motion_params_stage(tape, mh_q);
    let bits_m = tape.laplace_bits(m_q, m_mu, m_b);
    let bits_mh = hyper_bits(model, tape, mh_q, true);

    let stage = model.context_stage(tape, m_q, state, flags);
    let y = model.frame.analyze(tape, store, x, &stage.contexts);
    let y_q = tape.quantize(y);
    let fh = model.frame.hyper_analyze(tape, store, y);
    let fh_q = tape.quantize(fh);
    let (f_mu, f_b) = model.frame_params_stage(tape, fh_q, stage.contexts.c2);
    let bits_y = tape.laplace_bits(y_q, f_mu, f_b);
    let bits_fh = hyper_bits(model, tape, fh_q, false);

    let (raw, clamped, feature) = model.reconstruction_stage(tape, y_q, &stage.contexts);
    let distortion = match rd.distortion {
        Distortion::Mse => tape.mse(x, raw),
        Distortion::OneMinusMsSsim => {
            let ms = ms_ssim_node(tape, x, raw);
            let neg = tape.mul_scalar(ms, -1.0);
            tape.add_scalar(neg, 1.0)
        }
    };
    let s1 = tape.add(bits_m, bits_mh);
    let s2 = tape.add(bits_y, bits_fh);
    let rate_bits = tape.add(s1, s2);
    let bpp = tape.mul_scalar(rate_bits, 1.0 / (h * w) as f32);
    let weighted = tape.mul_scalar(distortion, weight * rd.lambda);
    let loss = tape.add(weighted, bpp);

    InterLossNodes {
        loss,
        distortion,
        rate_bits,
        state: StateNodes {
            prev_frame: clamped,
            feature,
            lstm_h: stage.lstm_h,
            lstm_c: stage.lstm_c,
        },
    }
}

fn hyper_bits(model: &SddcModel, tape: &mut Tape, hq: NodeId, motion: bool) -> NodeId {
    let (c, h, w) = tape.value(hq).shape();
    let zeros = tape.leaf(Tensor::zeros(c, h, w));
    let b = if motion {
        model.motion.hyper_scales.node(tape, &model.store, h, w)
    } else {
        model.frame.hyper_scales.node(tape, &model.store, h, w)
    };
    tape.laplace_bits(hq, zeros, b)
}

/// Motion-only warm-up loss: distortion of the SDD warped prediction plus
/// the motion rate.
pub fn warmup_loss(
    model: &SddcModel,
    tape: &mut Tape,
    x: NodeId,
    prev: NodeId,
    rd: &RdConfig,
) -> NodeId {
    let store = &model.store;
    let (_, h, w) = tape.value(x).shape();
    let (vs, vd) = model.estimate_motion(tape, x, prev, AblationFlags::default());
    let m = model.motion.analyze(tape, store, vs, vd);
    let m_q = tape.quantize(m);
    let mh = model.motion.hyper_analyze(tape, store, m);
    let mh_q = tape.quantize(mh);
    let (m_mu, m_b) = model.motion_params_stage(tape, mh_q);
    let bits_m = tape.laplace_bits(m_q, m_mu, m_b);
    let bits_mh = hyper_bits(model, tape, mh_q, true);

    let (vs_hat, vd_hat) = model.motion.synthesize(tape, store, m_q);
    let (ps, pd) = decompose_nodes(tape, prev, SDD_FACTOR);
    let warped_s = tape.warp(ps, vs_hat);
    let warped_d = tape.warp(pd, vd_hat);
    let pred = tape.add(warped_s, warped_d);
    let dist = tape.mse(pred, x);

    let bits = tape.add(bits_m, bits_mh);
    let bpp = tape.mul_scalar(bits, 1.0 / (h * w) as f32);
    let weighted = tape.mul_scalar(dist, rd.lambda);
    tape.add(weighted, bpp)
}

/// Cascaded clip loss over `frames` (first frame is the reference, the rest
/// are coded). Returns the loss node plus per-frame (distortion, bits).
pub fn clip_loss_nodes(
    model: &SddcModel,
    tape: &mut Tape,
    frames: &[Tensor],
    rd: &RdConfig,
    flags: AblationFlags,
) -> (NodeId, Vec<(NodeId, NodeId)>) {
    assert!(frames.len() >= 2, "clip needs a reference and a coded frame");
    let r0 = tape.leaf(quantize_frame_8bit(&frames[0]));
    let mut state = model.bootstrap_state(tape, r0);
    let mut per_frame = Vec::new();
    let mut total: Option<NodeId> = None;
    for (t, frame) in frames.iter().enumerate().skip(1) {
        let x = tape.leaf(frame.clone());
        let out = inter_frame_loss(model, tape, x, &state, rd.frame_weight(t - 1), rd, flags);
        state = out.state;
        per_frame.push((out.distortion, out.rate_bits));
        total = Some(match total {
            Some(acc) => tape.add(acc, out.loss),
            None => out.loss,
        });
    }
    let sum = total.unwrap();
    let mean = tape.mul_scalar(sum, 1.0 / (frames.len() - 1) as f32);
    (mean, per_frame)
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with decoupled weight decay.
pub struct AdamW {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f32, weight_decay: f32) -> Self {
        let m = store
            .ids()
            .map(|id| {
                let (c, h, w) = store.value(id).shape();
                Tensor::zeros(c, h, w)
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamW {
            m,
            v,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).clone();
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            for i in 0..g.numel() {
                let gi = g.data()[i];
                m.data_mut()[i] = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                v.data_mut()[i] = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
            }
            let p = store.value_mut(id);
            for i in 0..p.numel() {
                let m_hat = m.data()[i] / bc1;
                let v_hat = v.data()[i] / bc2;
                let update = m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * p.data()[i];
                p.data_mut()[i] -= self.lr * update;
            }
        }
    }
}

/// Scale all gradients so the global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f32) -> f32 {
    let mut sq = 0.0f64;
    for id in store.ids().collect::<Vec<_>>() {
        for &g in store.grad(id).data() {
            sq += (g as f64) * (g as f64);
        }
    }
    let norm = sq.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).clone().map(|v| v * scale);
            store.zero_grad_of(id);
            store.accumulate_grad(id, &g);
        }
    }
    norm
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub rd: RdConfig,
    pub lr: f32,
    pub weight_decay: f32,
    pub grad_clip: f32,
    pub seed: u64,
    pub warmup_steps: usize,
    pub single_steps: usize,
    pub cascaded_steps: usize,
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(lambda_index: usize) -> Self {
        TrainConfig {
            rd: RdConfig::new(lambda_index),
            lr: 1e-3,
            weight_decay: 0.0,
            grad_clip: 1.0,
            seed: 0,
            warmup_steps: 200,
            single_steps: 600,
            cascaded_steps: 200,
            log_every: 25,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.warmup_steps + self.single_steps + self.cascaded_steps
    }
}

#[derive(Clone, Debug)]
pub struct TrainLogRow {
    pub step: usize,
    pub phase: &'static str,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_distortion: f64,
    pub eval_rate_bits: f64,
}

const EVAL_SEED: u64 = 0xE7A1_5EED;

fn step_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fixed-seed cascaded evaluation loss on the first clip; constant across
/// steps when the optimizer is a no-op.
pub fn eval_clip_loss(
    model: &SddcModel,
    clip: &[Tensor],
    rd: &RdConfig,
) -> Result<LossReport> {
    if clip.len() < 2 {
        return Err(CodecError::InvalidArgument(
            "evaluation clip needs at least 2 frames".into(),
        ));
    }
    let t_frames = clip.len().min(rd.clip_len + 1);
    let mut tape = Tape::new_train(EVAL_SEED);
    let (_, per_frame) = clip_loss_nodes(model, &mut tape, &clip[..t_frames], rd, AblationFlags::default());
    let pixels = clip[0].height() * clip[0].width();
    let inputs: Vec<FrameLossInput> = per_frame
        .iter()
        .map(|&(d, r)| FrameLossInput {
            distortion: tape.scalar_value(d) as f64,
            rate_bits: tape.scalar_value(r) as f64,
            pixels,
        })
        .collect();
    let mut rd_eval = rd.clone();
    rd_eval.clip_len = inputs.len();
    cascaded_loss(&inputs, &rd_eval)
}

/// Staged training over a set of clips (each a list of padded frames).
/// Returns the log rows; on divergence the model may be left mid-flight but
/// nothing is written to disk.
pub fn train(
    model: &mut SddcModel,
    clips: &[Vec<Tensor>],
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogRow>> {
    if clips.is_empty() || clips.iter().any(|c| c.len() < 2) {
        return Err(CodecError::EmptyInput(
            "training needs at least one clip of >= 2 frames".into(),
        ));
    }
    for clip in clips {
        for f in clip {
            let (c, h, w) = f.shape();
            if c != 3 || h % 64 != 0 || w % 64 != 0 {
                return Err(CodecError::InvalidArgument(
                    "training frames must be 3-channel with dims multiples of 64".into(),
                ));
            }
        }
    }
    let mut opt = AdamW::new(&model.store, cfg.lr, cfg.weight_decay);
    let mut rows = Vec::new();

    for step in 0..cfg.total_steps() {
        let seed = step_seed(cfg.seed, step);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clip = &clips[rng.gen_range(0..clips.len())];
        let phase = if step < cfg.warmup_steps {
            "warmup"
        } else if step < cfg.warmup_steps + cfg.single_steps {
            "single"
        } else {
            "cascaded"
        };

        let mut tape = Tape::new_train(seed);
        let loss_node = match phase {
            "warmup" => {
                let t = rng.gen_range(1..clip.len());
                let x = tape.leaf(clip[t].clone());
                let prev = tape.leaf(clip[t - 1].clone());
                warmup_loss(model, &mut tape, x, prev, &cfg.rd)
            }
            "single" => {
                let t = rng.gen_range(1..clip.len());
                let x = tape.leaf(clip[t].clone());
                let r = tape.leaf(quantize_frame_8bit(&clip[t - 1]));
                let state = model.bootstrap_state(&mut tape, r);
                let out = inter_frame_loss(
                    model,
                    &mut tape,
                    x,
                    &state,
                    cfg.rd.frame_weight(t - 1),
                    &cfg.rd,
                    AblationFlags::default(),
                );
                out.loss
            }
            _ => {
                let window = cfg.rd.clip_len.min(clip.len() - 1);
                let start = rng.gen_range(0..=(clip.len() - 1 - window));
                let (loss, _) = clip_loss_nodes(
                    model,
                    &mut tape,
                    &clip[start..start + window + 1],
                    &cfg.rd,
                    AblationFlags::default(),
                );
                loss
            }
        };

        let train_loss = tape.scalar_value(loss_node) as f64;
        if !train_loss.is_finite() {
            return Err(CodecError::TrainingDiverged(format!(
                "non-finite loss at step {step} ({phase})"
            )));
        }
        model.store.zero_grads();
        tape.backward(loss_node, &mut model.store);
        clip_grad_norm(&mut model.store, cfg.grad_clip);
        opt.step(&mut model.store);

        if step % cfg.log_every == 0 || step + 1 == cfg.total_steps() {
            let eval = eval_clip_loss(model, &clips[0], &cfg.rd)?;
            if !eval.total.is_finite() {
                return Err(CodecError::TrainingDiverged(format!(
                    "non-finite evaluation loss at step {step}"
                )));
            }
            rows.push(TrainLogRow {
                step,
                phase,
                train_loss,
                eval_loss: eval.total,
                eval_distortion: eval.distortion,
                eval_rate_bits: eval.rate_bits,
            });
        }
    }
    Ok(rows)
}

/// Train, then write the checkpoint and CSV log only on success.
pub fn train_and_save(
    model: &mut SddcModel,
    clips: &[Vec<Tensor>],
    cfg: &TrainConfig,
    checkpoint_path: &Path,
    log_path: Option<&Path>,
) -> Result<Vec<TrainLogRow>> {
    let rows = train(model, clips, cfg)?;
    crate::checkpoint::save(model, checkpoint_path)?;
    if let Some(lp) = log_path {
        let mut f = std::fs::File::create(lp).map_err(|e| CodecError::io(lp, e))?;
        writeln!(f, "step,phase,train_loss,eval_loss,eval_distortion,eval_rate_bits")
            .map_err(|e| CodecError::io(lp, e))?;
        for r in &rows {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                r.step, r.phase, r.train_loss, r.eval_loss, r.eval_distortion, r.eval_rate_bits
            )
            .map_err(|e| CodecError::io(lp, e))?;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::synthetic::synthetic_clip;

    fn tiny_model(seed: u64) -> SddcModel {
        SddcModel::new(
            ModelConfig {
                cf: 8,
                cy: 16,
                cm: 8,
                ch: 4,
                flow_ch: 8,
            },
            seed,
        )
    }

    #[test]
    fn rd_loss_formula_arithmetic() {
        let cfg = RdConfig::new(0); // lambda 85
        let x = Tensor::filled(3, 8, 8, 0.5);

        // zero distortion, zero rate -> zero loss
        let r = rd_loss(&x, &x, BitEstimate { bits: 0.0 }, 1.0, &cfg).unwrap();
        assert_eq!(r.total, 0.0);

        // D = 0.01, lambda 85, w 1, R = 1000 bits over 64 pixels
        let x_hat = x.map(|v| v + 0.1);
        let r = rd_loss(&x_hat, &x, BitEstimate { bits: 1000.0 }, 1.0, &cfg).unwrap();
        let expect = 85.0 * 0.010000000000000002 + 1000.0 / 64.0;
        assert!((r.total - expect).abs() < 1e-6, "{} vs {expect}", r.total);

        // doubling w doubles the distortion term only
        let r2 = rd_loss(&x_hat, &x, BitEstimate { bits: 1000.0 }, 2.0, &cfg).unwrap();
        assert!((r2.total - (2.0 * 85.0 * 0.01 + 1000.0 / 64.0)).abs() < 1e-6);
        assert_eq!(r2.rate_bits, r.rate_bits);
    }

    #[test]
    fn cascaded_loss_cycles_weights() {
        let cfg = RdConfig::new(3); // lambda 840, T=5
        let frames: Vec<FrameLossInput> = (0..5)
            .map(|_| FrameLossInput {
                distortion: 0.01,
                rate_bits: 640.0,
                pixels: 64,
            })
            .collect();
        let r = cascaded_loss(&frames, &cfg).unwrap();
        let weights = [0.5f32, 1.2, 0.5, 0.9, 0.5];
        let expect: f64 = weights
            .iter()
            .map(|&w| w as f64 * 840.0 * 0.01 + 10.0)
            .sum::<f64>()
            / 5.0;
        assert!((r.total - expect).abs() < 1e-9);
        for (t, &w) in weights.iter().enumerate() {
            assert!((r.per_frame[t] - (w as f64 * 840.0 * 0.01 + 10.0)).abs() < 1e-9);
        }

        // identical per-frame losses average to themselves
        let uniform: Vec<FrameLossInput> = (0..5)
            .map(|_| FrameLossInput {
                distortion: 0.0,
                rate_bits: 0.0,
                pixels: 64,
            })
            .collect();
        assert_eq!(cascaded_loss(&uniform, &cfg).unwrap().total, 0.0);

        // wrong length is rejected
        assert!(cascaded_loss(&frames[..4], &cfg).is_err());
    }

    #[test]
    fn msssim_node_matches_pure_metric() {
        let clip = synthetic_clip(2, 64, 64, 3);
        let mut tape = Tape::new_infer();
        let a = tape.leaf(clip[0].clone());
        let b = tape.leaf(clip[1].clone());
        let node = ms_ssim_node(&mut tape, a, b);
        let graph_val = tape.scalar_value(node) as f64;
        let pure = ms_ssim(&clip[0], &clip[1]).unwrap();
        assert!(
            (graph_val - pure).abs() < 1e-4,
            "graph {graph_val} vs metric {pure}"
        );
    }

    #[test]
    fn two_runs_same_seed_identical_loss_sequences() {
        let clips = vec![synthetic_clip(3, 64, 64, 5)];
        let mut cfg = TrainConfig::new(3);
        cfg.warmup_steps = 4;
        cfg.single_steps = 4;
        cfg.cascaded_steps = 2;
        cfg.log_every = 1;
        cfg.seed = 11;
        let mut m1 = tiny_model(1);
        let rows1 = train(&mut m1, &clips, &cfg).unwrap();
        let mut m2 = tiny_model(1);
        let rows2 = train(&mut m2, &clips, &cfg).unwrap();
        let l1: Vec<f64> = rows1.iter().map(|r| r.train_loss).collect();
        let l2: Vec<f64> = rows2.iter().map(|r| r.train_loss).collect();
        assert_eq!(l1, l2);
    }

    #[test]
    fn zero_lr_keeps_params_and_eval_loss_constant() {
        let clips = vec![synthetic_clip(3, 64, 64, 7)];
        let mut cfg = TrainConfig::new(0);
        cfg.warmup_steps = 0;
        cfg.single_steps = 3;
        cfg.cascaded_steps = 0;
        cfg.log_every = 1;
        cfg.lr = 0.0;
        let mut model = tiny_model(2);
        let before: Vec<Vec<f32>> = model
            .store
            .ids()
            .map(|id| model.store.value(id).data().to_vec())
            .collect();
        let rows = train(&mut model, &clips, &cfg).unwrap();
        let evals: Vec<f64> = rows.iter().map(|r| r.eval_loss).collect();
        assert!(evals.windows(2).all(|w| w[0] == w[1]), "{evals:?}");
        for (id, orig) in model.store.ids().zip(&before) {
            assert_eq!(model.store.value(id).data(), orig.as_slice());
        }
    }

    #[test]
    fn nan_in_weights_aborts_without_checkpoint() {
        let clips = vec![synthetic_clip(2, 64, 64, 9)];
        let mut cfg = TrainConfig::new(0);
        cfg.warmup_steps = 0;
        cfg.single_steps = 1;
        cfg.cascaded_steps = 0;
        let mut model = tiny_model(3);
        let poisoned = model.store.value(crate::graph::ParamId(0)).map(|_| f32::NAN);
        let name = model.store.name(crate::graph::ParamId(0)).to_string();
        model.store.set_value(&name, poisoned);
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("model.sdck");
        let err = train_and_save(&mut model, &clips, &cfg, &ckpt, None);
        assert!(matches!(err, Err(CodecError::TrainingDiverged(_))));
        assert!(!ckpt.exists());
    }

    #[test]
    fn msssim_distortion_variant_trains() {
        let clips = vec![synthetic_clip(3, 64, 64, 15)];
        let mut cfg = TrainConfig::new(3);
        cfg.rd.distortion = crate::config::Distortion::OneMinusMsSsim;
        cfg.warmup_steps = 0;
        cfg.single_steps = 3;
        cfg.cascaded_steps = 1;
        cfg.log_every = 1;
        let mut model = tiny_model(6);
        let rows = train(&mut model, &clips, &cfg).unwrap();
        assert!(rows.iter().all(|r| r.train_loss.is_finite()));
        assert!(rows.iter().all(|r| r.eval_loss.is_finite()));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut model = tiny_model(4);
        let cfg = TrainConfig::new(0);
        assert!(matches!(
            train(&mut model, &[], &cfg),
            Err(CodecError::EmptyInput(_))
        ));
    }

    #[test]
    fn gradients_reach_every_parameter_group_after_warmup_updates() {
        // A fresh model holds exact-zero layers by design (flow heads,
        // fusion convs, residual tails), which silence their upstream
        // parameters at step 0; the chains are at most three zeros deep, so
        // after three optimizer steps a backward pass must touch every
        // parameter group.
        let clips = vec![synthetic_clip(3, 64, 64, 13)];
        let mut cfg = TrainConfig::new(3);
        cfg.warmup_steps = 0;
        cfg.single_steps = 3;
        cfg.cascaded_steps = 0;
        cfg.log_every = 10;
        let mut model = tiny_model(5);
        train(&mut model, &clips, &cfg).unwrap();

        let rd = RdConfig::new(3);
        let mut tape = Tape::new_train(99);
        let (loss, _) = clip_loss_nodes(
            &model,
            &mut tape,
            &clips[0][..3],
            &rd,
            AblationFlags::default(),
        );
        model.store.zero_grads();
        tape.backward(loss, &mut model.store);

        let mut total_params = 0usize;
        let mut covered = 0usize;
        let mut silent = Vec::new();
        for id in model.store.ids().collect::<Vec<_>>() {
            let n = model.store.value(id).numel();
            total_params += n;
            if model.store.grad(id).max_abs() > 0.0 {
                covered += n;
            } else {
                silent.push(model.store.name(id).to_string());
            }
        }
        let coverage = covered as f64 / total_params as f64;
        assert!(
            coverage >= 0.99,
            "gradient coverage {coverage:.4} (silent groups: {silent:?})"
        );
    }
}
