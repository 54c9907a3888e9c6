//! Encoding and decoding sessions: per-sequence state, GOP scheduling, and
//! entropy coding of the pipeline latents into container records.
//!
//! A session owns its recurrent state; independent sessions may run in
//! parallel. Within a session coding is strictly sequential. The decoder
//! reconstructs from bitstream bytes and its own state only; encoder-side
//! reconstructions are produced by the same decode-path functions on the
//! same quantized integers, so both sides stay bit-identical per machine.

use crate::config::CODEC_STRIDE;
use crate::container::{Container, FrameRecord};
use crate::context::{reset_state, RecurrentState};
use crate::entropy::{self, LaplaceParams};
use crate::error::{CodecError, Result};
use crate::frame_codec::{intra_decode, intra_encode};
use crate::frames_io::{crop_to, pad_to_stride, Frame, PadInfo, Sequence, SourceFormat};
use crate::graph::Tape;
use crate::metrics::{ms_ssim, psnr};
use crate::model::{AblationFlags, SddcModel, StateNodes};
use crate::tensor::Tensor;

/// Session state carried between frames.
pub struct CodingState {
    pub prev_frame: Tensor,
    pub feature: Tensor,
    pub lstm: RecurrentState,
}

#[derive(Clone, Copy, Debug)]
pub struct FrameStats {
    pub index: usize,
    pub is_intra: bool,
    /// Serialized record size in bits.
    pub bits: usize,
    pub psnr_db: f64,
    pub msssim: f64,
}

#[derive(Clone, Debug)]
pub struct EncoderConfig {
    pub lambda_index: u8,
    pub intra_period: usize,
    pub flags: AblationFlags,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            lambda_index: 0,
            intra_period: 32,
            flags: AblationFlags::default(),
        }
    }
}

pub struct EncodeResult {
    pub container: Container,
    pub stats: Vec<FrameStats>,
    /// Encoder-side reconstructions, cropped to the original geometry.
    pub recons: Vec<Tensor>,
}

/// Bits-per-pixel of a serialized container over the original geometry.
pub fn container_bpp(container: &Container) -> f64 {
    if container.frames.is_empty() {
        return 0.0;
    }
    let pixels =
        container.frames.len() as f64 * container.width as f64 * container.height as f64;
    container.byte_len() as f64 * 8.0 / pixels
}

fn intra_state(model: &SddcModel, recon_padded: &Tensor) -> CodingState {
    let (_, ph, pw) = recon_padded.shape();
    let mut tape = Tape::new_infer();
    let r = tape.leaf(recon_padded.clone());
    let feat = model.feature_extractor.forward(&mut tape, &model.store, r);
    CodingState {
        prev_frame: recon_padded.clone(),
        feature: tape.value(feat).clone(),
        lstm: reset_state(model.cfg.cf, ph, pw),
    }
}

struct InterCoded {
    record: FrameRecord,
    recon_padded: Tensor,
    state: CodingState,
}

fn encode_inter(
    model: &SddcModel,
    state: &CodingState,
    x_padded: &Tensor,
    flags: AblationFlags,
) -> InterCoded {
    let store = &model.store;
    let mut tape = Tape::new_infer();
    let x = tape.leaf(x_padded.clone());
    let prev = tape.leaf(state.prev_frame.clone());
    let feature = tape.leaf(state.feature.clone());
    let lstm_h = tape.leaf(state.lstm.h.clone());
    let lstm_c = tape.leaf(state.lstm.c.clone());
    let nodes = StateNodes {
        prev_frame: prev,
        feature,
        lstm_h,
        lstm_c,
    };

    let (vs, vd) = model.estimate_motion(&mut tape, x, prev, flags);
    let m = model.motion.analyze(&mut tape, store, vs, vd);
    let m_q = tape.quantize(m);
    let mh = model.motion.hyper_analyze(&mut tape, store, m);
    let mh_q = tape.quantize(mh);
    let (m_mu, m_b) = model.motion_params_stage(&mut tape, mh_q);

    let stage = model.context_stage(&mut tape, m_q, &nodes, flags);
    let y = model.frame.analyze(&mut tape, store, x, &stage.contexts);
    let y_q = tape.quantize(y);
    let fh = model.frame.hyper_analyze(&mut tape, store, y);
    let fh_q = tape.quantize(fh);
    let (f_mu, f_b) = model.frame_params_stage(&mut tape, fh_q, stage.contexts.c2);
    let (_, clamped, new_feature) = model.reconstruction_stage(&mut tape, y_q, &stage.contexts);

    // entropy coding
    let (_, mh_h, mh_w) = tape.value(mh_q).shape();
    let mh_params =
        LaplaceParams::per_channel(&model.motion.hyper_scales.values(store), mh_h, mh_w);
    let seg_mh = entropy::encode_grid(tape.value(mh_q), &mh_params);
    let m_params = LaplaceParams::new(tape.value(m_mu).clone(), tape.value(m_b).clone());
    let seg_m = entropy::encode_grid(tape.value(m_q), &m_params);
    let (_, fh_h, fh_w) = tape.value(fh_q).shape();
    let fh_params =
        LaplaceParams::per_channel(&model.frame.hyper_scales.values(store), fh_h, fh_w);
    let seg_fh = entropy::encode_grid(tape.value(fh_q), &fh_params);
    let f_params = LaplaceParams::new(tape.value(f_mu).clone(), tape.value(f_b).clone());
    let seg_y = entropy::encode_grid(tape.value(y_q), &f_params);

    let recon_padded = tape.value(clamped).clone();
    InterCoded {
        record: FrameRecord::Inter {
            motion_hyper: seg_mh,
            motion_y: seg_m,
            frame_hyper: seg_fh,
            frame_y: seg_y,
        },
        state: CodingState {
            prev_frame: recon_padded.clone(),
            feature: tape.value(new_feature).clone(),
            lstm: RecurrentState {
                h: tape.value(stage.lstm_h).clone(),
                c: tape.value(stage.lstm_c).clone(),
            },
        },
        recon_padded,
    }
}

fn decode_inter(
    model: &SddcModel,
    state: &CodingState,
    record: &FrameRecord,
    flags: AblationFlags,
) -> Result<(Tensor, CodingState)> {
    let FrameRecord::Inter {
        motion_hyper,
        motion_y,
        frame_hyper,
        frame_y,
    } = record
    else {
        return Err(CodecError::CorruptBitstream(
            "expected inter frame record".into(),
        ));
    };
    let store = &model.store;
    let (_, ph, pw) = state.prev_frame.shape();
    let mut tape = Tape::new_infer();
    let prev = tape.leaf(state.prev_frame.clone());
    let feature = tape.leaf(state.feature.clone());
    let lstm_h = tape.leaf(state.lstm.h.clone());
    let lstm_c = tape.leaf(state.lstm.c.clone());
    let nodes = StateNodes {
        prev_frame: prev,
        feature,
        lstm_h,
        lstm_c,
    };

    // motion hyper -> motion latent
    let (mh_h, mh_w) = (ph / 64, pw / 64);
    let mh_params =
        LaplaceParams::per_channel(&model.motion.hyper_scales.values(store), mh_h, mh_w);
    let mh_q_t = entropy::decode_grid(motion_hyper, &mh_params)?;
    let mh_q = tape.leaf(mh_q_t);
    let (m_mu, m_b) = model.motion_params_stage(&mut tape, mh_q);
    let m_params = LaplaceParams::new(tape.value(m_mu).clone(), tape.value(m_b).clone());
    let m_q_t = entropy::decode_grid(motion_y, &m_params)?;
    let m_q = tape.leaf(m_q_t);

    let stage = model.context_stage(&mut tape, m_q, &nodes, flags);

    // frame hyper -> contextual latent
    let (fh_h, fh_w) = (ph / 64, pw / 64);
    let fh_params =
        LaplaceParams::per_channel(&model.frame.hyper_scales.values(store), fh_h, fh_w);
    let fh_q_t = entropy::decode_grid(frame_hyper, &fh_params)?;
    let fh_q = tape.leaf(fh_q_t);
    let (f_mu, f_b) = model.frame_params_stage(&mut tape, fh_q, stage.contexts.c2);
    let f_params = LaplaceParams::new(tape.value(f_mu).clone(), tape.value(f_b).clone());
    let y_q_t = entropy::decode_grid(frame_y, &f_params)?;
    let y_q = tape.leaf(y_q_t);

    let (_, clamped, new_feature) = model.reconstruction_stage(&mut tape, y_q, &stage.contexts);
    let recon_padded = tape.value(clamped).clone();
    let new_state = CodingState {
        prev_frame: recon_padded.clone(),
        feature: tape.value(new_feature).clone(),
        lstm: RecurrentState {
            h: tape.value(stage.lstm_h).clone(),
            c: tape.value(stage.lstm_c).clone(),
        },
    };
    Ok((recon_padded, new_state))
}

/// Encode a sequence into a container, reporting per-frame stats and the
/// encoder-side reconstructions.
pub fn encode_sequence(
    model: &SddcModel,
    seq: &Sequence,
    cfg: &EncoderConfig,
) -> Result<EncodeResult> {
    if cfg.intra_period == 0 || cfg.intra_period > 255 {
        return Err(CodecError::InvalidArgument(
            "intra_period must be in 1..=255".into(),
        ));
    }
    if cfg.lambda_index > 3 {
        return Err(CodecError::InvalidArgument(
            "lambda_index must be in 0..=3".into(),
        ));
    }
    let (width, height) = if seq.is_empty() {
        (0u16, 0u16)
    } else {
        let (_, h, w) = seq.frames[0].pixels.shape();
        if w > u16::MAX as usize || h > u16::MAX as usize {
            return Err(CodecError::InvalidArgument("frame too large".into()));
        }
        (w as u16, h as u16)
    };

    let mut container = Container {
        width,
        height,
        intra_period: cfg.intra_period as u8,
        lambda_index: cfg.lambda_index,
        flags: cfg.flags,
        frames: Vec::new(),
    };
    let mut stats = Vec::new();
    let mut recons = Vec::new();
    let mut state: Option<CodingState> = None;

    for (idx, frame) in seq.frames.iter().enumerate() {
        let (record, recon_padded, pad) = if idx % cfg.intra_period == 0 {
            let payload = intra_encode(&frame.pixels);
            let recon = intra_decode(&payload)?;
            let (recon_padded, pad) = pad_to_stride(&recon, CODEC_STRIDE);
            state = Some(intra_state(model, &recon_padded));
            (FrameRecord::Intra { payload }, recon_padded, pad)
        } else {
            let (x_padded, pad) = pad_to_stride(&frame.pixels, CODEC_STRIDE);
            let coded = encode_inter(
                model,
                state.as_ref().expect("inter frame before intra"),
                &x_padded,
                cfg.flags,
            );
            state = Some(coded.state);
            (coded.record, coded.recon_padded, pad)
        };
        let recon = crop_to(&recon_padded, pad);
        let bits = record.byte_len() * 8;
        stats.push(FrameStats {
            index: idx,
            is_intra: record.is_intra(),
            bits,
            psnr_db: psnr(&frame.pixels, &recon)?,
            msssim: ms_ssim(&frame.pixels, &recon)?,
        });
        container.frames.push(record);
        recons.push(recon);
    }

    Ok(EncodeResult {
        container,
        stats,
        recons,
    })
}

/// Decode a container back to a sequence of frames.
pub fn decode_sequence(model: &SddcModel, container: &Container) -> Result<Sequence> {
    let pad = PadInfo {
        height: container.height as usize,
        width: container.width as usize,
    };
    let mut frames = Vec::with_capacity(container.frames.len());
    let mut state: Option<CodingState> = None;
    let intra_period = container.intra_period.max(1) as usize;

    for (idx, record) in container.frames.iter().enumerate() {
        let expect_intra = idx % intra_period == 0;
        if expect_intra != record.is_intra() {
            return Err(CodecError::CorruptBitstream(format!(
                "frame {idx}: type does not match intra period schedule"
            )));
        }
        let recon_padded = match record {
            FrameRecord::Intra { payload } => {
                let recon = intra_decode(payload)?;
                let (c, h, w) = recon.shape();
                if c != 3 || h != pad.height || w != pad.width {
                    return Err(CodecError::CorruptBitstream(
                        "intra frame geometry mismatch".into(),
                    ));
                }
                let (recon_padded, _) = pad_to_stride(&recon, CODEC_STRIDE);
                state = Some(intra_state(model, &recon_padded));
                recon_padded
            }
            inter => {
                let st = state.as_ref().ok_or_else(|| {
                    CodecError::CorruptBitstream("inter frame before any intra frame".into())
                })?;
                let (recon_padded, new_state) =
                    decode_inter(model, st, inter, container.flags)?;
                state = Some(new_state);
                recon_padded
            }
        };
        frames.push(Frame::new(crop_to(&recon_padded, pad), idx));
    }

    Ok(Sequence {
        frames,
        frame_rate: 30.0,
        source_format: SourceFormat::ImageDir,
    })
}
