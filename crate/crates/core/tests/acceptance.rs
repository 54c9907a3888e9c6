//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values. Several criteria share one trained toy checkpoint,
//! built on first use.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sddc::config::ModelConfig;
use sddc::container::Container;
use sddc::context::{reset_state, ConvLstm, RecurrentState};
use sddc::entropy::{laplace_bits, LaplaceParams};
use sddc::entropy::range_coder::{decode_laplace, encode_laplace};
use sddc::frames_io::{quantize_frame_8bit, read_sequence, write_sequence, Frame, Sequence, SourceFormat};
use sddc::graph::{ParamStore, Tape};
use sddc::metrics::{bd_rate, ms_ssim, psnr, Pchip};
use sddc::model::{AblationFlags, SddcModel};
use sddc::sdd::{decompose, recompose};
use sddc::session::{container_bpp, decode_sequence, encode_sequence, EncoderConfig};
use sddc::synthetic::synthetic_clip;
use sddc::tensor::Tensor;
use sddc::checkpoint;
use sddc::training::{eval_clip_loss, train, TrainConfig};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

// ---------------------------------------------------------------------------
// Shared trained fixture (criteria 6, 7, 8, 11)
// ---------------------------------------------------------------------------

struct Fixture {
    _dir: tempfile::TempDir,
    ckpt_path: PathBuf,
    clip_dir: PathBuf,
    /// 9 frames, 8-bit-quantized, 64x64.
    clip9: Vec<Tensor>,
    /// First 7 frames: the overfit training clip.
    train_clip: Vec<Tensor>,
    model: SddcModel,
    initial_loss: f64,
    final_loss: f64,
    train_secs: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let start = Instant::now();
        let clip9: Vec<Tensor> = synthetic_clip(9, 64, 64, 42)
            .into_iter()
            .map(|f| quantize_frame_8bit(&f))
            .collect();
        let train_clip: Vec<Tensor> = clip9[..7].to_vec();

        let mut model = SddcModel::new(ModelConfig::desk_small(), 42);
        let mut cfg = TrainConfig::new(3); // lambda = 840
        cfg.seed = 42;
        cfg.warmup_steps = 300;
        cfg.single_steps = 700;
        cfg.cascaded_steps = 60;
        cfg.log_every = 100;
        let initial_loss = eval_clip_loss(&model, &train_clip, &cfg.rd)
            .expect("initial loss")
            .total;
        train(&mut model, &[train_clip.clone()], &cfg).expect("overfit training");
        let final_loss = eval_clip_loss(&model, &train_clip, &cfg.rd)
            .expect("final loss")
            .total;
        let train_secs = start.elapsed().as_secs_f64();

        let dir = tempfile::tempdir().expect("tempdir");
        let ckpt_path = dir.path().join("overfit.sdck");
        checkpoint::save(&model, &ckpt_path).expect("save checkpoint");
        let clip_dir = dir.path().join("clip");
        let seq = Sequence {
            frames: clip9
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, t)| Frame::new(t, i))
                .collect(),
            frame_rate: 30.0,
            source_format: SourceFormat::ImageDir,
        };
        write_sequence(&seq, &clip_dir, SourceFormat::ImageDir).expect("write clip");

        Fixture {
            _dir: dir,
            ckpt_path,
            clip_dir,
            clip9,
            train_clip,
            model,
            initial_loss,
            final_loss,
            train_secs,
        }
    })
}

fn clip_sequence(frames: &[Tensor]) -> Sequence {
    Sequence {
        frames: frames
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| Frame::new(t, i))
            .collect(),
        frame_rate: 30.0,
        source_format: SourceFormat::ImageDir,
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: SDD exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_sdd_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f32;
    for _ in 0..200 {
        let x = Tensor::uniform(3, 64, 64, 0.0, 1.0, &mut rng);
        let pair = decompose(&x, 2).unwrap();
        let r = recompose(&pair).unwrap();
        for (a, b) in r.data().iter().zip(x.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    for x in synthetic_clip(10, 64, 64, 2) {
        let pair = decompose(&x, 2).unwrap();
        let r = recompose(&pair).unwrap();
        for (a, b) in r.data().iter().zip(x.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-6, "max |x - (s+d)| = {worst}");
    println!(
        "ACCEPTANCE 01 sdd-exactness: PASS (max error {:.2e}, {:.1}s)",
        worst,
        start.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: warp oracles
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_warp_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // zero flow is the exact identity
    let src = Tensor::uniform(3, 16, 20, 0.0, 1.0, &mut rng);
    let out = warp_tensor(&src, &Tensor::zeros(2, 16, 20));
    assert_eq!(out.data(), src.data(), "zero-flow warp must be exact");

    // integer shift equals a replicate-border shift
    let (dx, dy) = (2i64, -1i64);
    let mut flow = Tensor::zeros(2, 16, 20);
    flow.plane_mut(0).fill(dx as f32);
    flow.plane_mut(1).fill(dy as f32);
    let shifted = warp_tensor(&src, &flow);
    for c in 0..3 {
        for y in 0..16i64 {
            for x in 0..20i64 {
                let sy = (y + dy).clamp(0, 15) as usize;
                let sx = (x + dx).clamp(0, 19) as usize;
                assert_eq!(
                    shifted.at(c, y as usize, x as usize),
                    src.at(c, sy, sx),
                    "integer shift mismatch at ({c},{y},{x})"
                );
            }
        }
    }

    // fractional flows against the f64 scalar oracle
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let src = Tensor::uniform(1, 12, 12, 0.0, 1.0, &mut rng);
        let flow = Tensor::uniform(2, 12, 12, -3.0, 3.0, &mut rng);
        let got = warp_tensor(&src, &flow);
        let src64: Vec<f64> = src.data().iter().map(|&v| v as f64).collect();
        let dx64: Vec<f64> = flow.plane(0).iter().map(|&v| v as f64).collect();
        let dy64: Vec<f64> = flow.plane(1).iter().map(|&v| v as f64).collect();
        let expect = oracle::warp(&src64, 12, 12, &dx64, &dy64);
        for (g, e) in got.data().iter().zip(&expect) {
            worst = worst.max((*g as f64 - e).abs());
        }
    }
    assert!(worst <= 1e-6, "fractional warp vs oracle: {worst}");
    println!(
        "ACCEPTANCE 02 warp-oracles: PASS (max fractional error {:.2e}, {:.1}s)",
        worst,
        start.elapsed().as_secs_f64()
    );
}

fn warp_tensor(src: &Tensor, flow: &Tensor) -> Tensor {
    let mut tape = Tape::new_infer();
    let s = tape.leaf(src.clone());
    let f = tape.leaf(flow.clone());
    let o = tape.warp(s, f);
    tape.value(o).clone()
}

// ---------------------------------------------------------------------------
// Criterion 3: gradient checks against f64 finite differences
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_gradient_checks() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-4f64;

    // warp: loss = sum (warp(src, flow) - tgt)^2, gradients w.r.t. flow and src
    let src = Tensor::uniform(1, 8, 8, 0.0, 1.0, &mut rng);
    let flow = Tensor::from_vec(
        2,
        8,
        8,
        (0..128).map(|_| rng.gen_range(-1.5f32..1.5) + 0.27).collect(),
    );
    let tgt = Tensor::uniform(1, 8, 8, 0.0, 1.0, &mut rng);

    let mut store = ParamStore::new();
    let mut tape = Tape::new_infer();
    let s = tape.leaf(src.clone());
    let f = tape.leaf(flow.clone());
    let t = tape.leaf(tgt.clone());
    let w = tape.warp(s, f);
    let d = tape.sub(w, t);
    let sq = tape.mul(d, d);
    let loss = tape.sum(sq);
    tape.backward(loss, &mut store);
    let g_flow = tape.grad(f).unwrap().clone();
    let g_src = tape.grad(s).unwrap().clone();

    let warp_loss = |src64: &[f64], dx: &[f64], dy: &[f64]| -> f64 {
        let out = oracle::warp(src64, 8, 8, dx, dy);
        out.iter()
            .zip(tgt.data())
            .map(|(o, &t)| (o - t as f64) * (o - t as f64))
            .sum()
    };
    let src64: Vec<f64> = src.data().iter().map(|&v| v as f64).collect();
    let dx64: Vec<f64> = flow.plane(0).iter().map(|&v| v as f64).collect();
    let dy64: Vec<f64> = flow.plane(1).iter().map(|&v| v as f64).collect();

    let mut fd_flow = vec![0.0f64; 128];
    for i in 0..64 {
        for (plane, base) in [(0usize, 0usize), (1, 64)] {
            let mut lo = (src64.clone(), dx64.clone(), dy64.clone());
            let mut hi = (src64.clone(), dx64.clone(), dy64.clone());
            match plane {
                0 => {
                    lo.1[i] -= h;
                    hi.1[i] += h;
                }
                _ => {
                    lo.2[i] -= h;
                    hi.2[i] += h;
                }
            }
            fd_flow[base + i] = (warp_loss(&hi.0, &hi.1, &hi.2) - warp_loss(&lo.0, &lo.1, &lo.2))
                / (2.0 * h);
        }
    }
    let mut fd_src = vec![0.0f64; 64];
    for (i, slot) in fd_src.iter_mut().enumerate() {
        let mut lo = src64.clone();
        let mut hi = src64.clone();
        lo[i] -= h;
        hi[i] += h;
        *slot = (warp_loss(&hi, &dx64, &dy64) - warp_loss(&lo, &dx64, &dy64)) / (2.0 * h);
    }
    let rel_flow = normwise_error(g_flow.data(), &fd_flow);
    let rel_src = normwise_error(g_src.data(), &fd_src);
    assert!(rel_flow < 1e-3, "warp flow gradient error {rel_flow}");
    assert!(rel_src < 1e-3, "warp src gradient error {rel_src}");

    // SDD composite: loss = sum (structure(x) - t1)^2 + sum (detail(x) - t2)^2
    let x = Tensor::uniform(1, 8, 8, 0.0, 1.0, &mut rng);
    let t1 = Tensor::uniform(1, 8, 8, 0.0, 1.0, &mut rng);
    let t2 = Tensor::uniform(1, 8, 8, -0.3, 0.3, &mut rng);
    let mut tape = Tape::new_infer();
    let xn = tape.leaf(x.clone());
    let (sn, dn) = sddc::sdd::decompose_nodes(&mut tape, xn, 2);
    let t1n = tape.leaf(t1.clone());
    let t2n = tape.leaf(t2.clone());
    let e1 = tape.sub(sn, t1n);
    let e1s = tape.mul(e1, e1);
    let e2 = tape.sub(dn, t2n);
    let e2s = tape.mul(e2, e2);
    let l1 = tape.sum(e1s);
    let l2 = tape.sum(e2s);
    let loss = tape.add(l1, l2);
    tape.backward(loss, &mut store);
    let g_x = tape.grad(xn).unwrap().clone();

    let sdd_loss = |xv: &[f64]| -> f64 {
        let s = oracle::sdd_structure(xv, 8, 8, 2);
        let mut acc = 0.0;
        for i in 0..64 {
            let det = xv[i] - s[i];
            let es = s[i] - t1.data()[i] as f64;
            let ed = det - t2.data()[i] as f64;
            acc += es * es + ed * ed;
        }
        acc
    };
    let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let mut fd_x = vec![0.0f64; 64];
    for (i, slot) in fd_x.iter_mut().enumerate() {
        let mut lo = x64.clone();
        let mut hi = x64.clone();
        lo[i] -= h;
        hi[i] += h;
        *slot = (sdd_loss(&hi) - sdd_loss(&lo)) / (2.0 * h);
    }
    let rel_sdd = normwise_error(g_x.data(), &fd_x);
    assert!(rel_sdd < 1e-3, "sdd composite gradient error {rel_sdd}");

    println!(
        "ACCEPTANCE 03 gradient-checks: PASS (warp flow {:.2e}, warp src {:.2e}, sdd {:.2e}, {:.1}s)",
        rel_flow,
        rel_src,
        rel_sdd,
        start.elapsed().as_secs_f64()
    );
}

fn normwise_error(analytic: &[f32], fd: &[f64]) -> f64 {
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for (&a, &f) in analytic.iter().zip(fd) {
        diff += (a as f64 - f) * (a as f64 - f);
        norm += f * f;
    }
    (diff / norm.max(1e-30)).sqrt()
}

// ---------------------------------------------------------------------------
// Criterion 4: ConvLSTM unit suite
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_convlstm_gate_equations() {
    let start = Instant::now();
    let cf = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let lstm = ConvLstm::new(&mut store, "lstm", cf, &mut rng);

    // zero weights + zero state: every gate sits at sigma(0)/tanh(0)
    for n in ["lstm.wx.w", "lstm.wx.b", "lstm.wh.w"] {
        let id = store.lookup(n).unwrap();
        let (c, h, w) = store.value(id).shape();
        store.set_value(n, Tensor::zeros(c, h, w));
    }
    let feature = Tensor::uniform(cf, 8, 8, -2.0, 2.0, &mut rng);
    let (next, ctx) = lstm
        .update_long_term(&store, &reset_state(cf, 8, 8), &feature)
        .unwrap();
    assert_eq!(ctx.max_abs(), 0.0);
    assert_eq!(next.c.max_abs(), 0.0);

    // forget gate forced to 1 and input gate to 0: memory persists exactly
    let mut bias = Tensor::zeros(4 * cf, 1, 1);
    for c in 0..cf {
        bias.data_mut()[c] = -30.0;
        bias.data_mut()[2 * cf + c] = 30.0;
    }
    store.set_value("lstm.wx.b", bias);
    let cell = Tensor::uniform(cf, 8, 8, -0.9, 0.9, &mut rng);
    let mut state = RecurrentState {
        h: Tensor::zeros(cf, 8, 8),
        c: cell.clone(),
    };
    for step in 0..8 {
        let f = Tensor::uniform(cf, 8, 8, -3.0, 3.0, &mut ChaCha8Rng::seed_from_u64(step));
        let (next, _) = lstm.update_long_term(&store, &state, &f).unwrap();
        state = next;
    }
    assert_eq!(state.c.data(), cell.data(), "cell state must persist exactly");

    // random weights: |H| < 1 always
    let mut store2 = ParamStore::new();
    let lstm2 = ConvLstm::new(&mut store2, "lstm", cf, &mut rng);
    let mut state = reset_state(cf, 8, 8);
    let mut max_h = 0.0f32;
    for step in 0..6 {
        let f = Tensor::uniform(cf, 8, 8, -10.0, 10.0, &mut ChaCha8Rng::seed_from_u64(100 + step));
        let (next, ctx) = lstm2.update_long_term(&store2, &state, &f).unwrap();
        max_h = max_h.max(ctx.max_abs());
        state = next;
    }
    assert!(max_h < 1.0, "|H| = {max_h}");

    println!(
        "ACCEPTANCE 04 convlstm-gates: PASS (max |H| {:.4}, {:.1}s)",
        max_h,
        start.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: entropy stack
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_entropy_stack() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // laplace_bits against the independent piecewise oracle
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let q = rng.gen_range(-20i32..20) as f32;
        let mu = rng.gen_range(-5.0f32..5.0);
        let b = rng.gen_range(0.02f32..6.0);
        let got = laplace_bits(
            &Tensor::scalar(q),
            &LaplaceParams::new(Tensor::scalar(mu), Tensor::scalar(b)),
        )
        .bits;
        let expect = oracle::laplace_bits(q as f64, mu as f64, b as f64);
        worst = worst.max((got - expect).abs());
    }
    // frozen high-precision value for q=0, mu=0, b=1
    let frozen = laplace_bits(
        &Tensor::scalar(0.0),
        &LaplaceParams::new(Tensor::scalar(0.0), Tensor::scalar(1.0)),
    )
    .bits;
    worst = worst.max((frozen - 1.3456768717052028).abs());
    assert!(worst <= 1e-6, "laplace_bits vs oracle: {worst}");

    // range coder round trip on 10^6 symbols
    let n = 1_000_000;
    let mut symbols = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let scale = rng.gen_range(0.05f32..4.0);
        let mean = rng.gen_range(-2.0f32..2.0);
        let u: f64 = rng.gen_range(-0.4999..0.4999);
        let value = mean.round() as i32
            + (-(scale as f64) * (1.0 - 2.0 * u.abs()).ln() * u.signum()).round() as i32;
        symbols.push(value);
        mu.push(mean);
        b.push(scale);
    }
    let bytes = encode_laplace(&symbols, &mu, &b);
    let back = decode_laplace(&bytes, &mu, &b).unwrap();
    assert_eq!(back, symbols, "range coder round trip must be exact");

    // actual bytes vs estimate on 50 seeded latents
    let mut worst_gap = 0.0f64;
    for case in 0..50 {
        let mut cr = ChaCha8Rng::seed_from_u64(1000 + case);
        let m = 1500;
        let mut qs = Vec::with_capacity(m);
        let mut mus = Vec::with_capacity(m);
        let mut bs = Vec::with_capacity(m);
        for _ in 0..m {
            let scale = cr.gen_range(0.1f32..3.0);
            let mean = cr.gen_range(-1.5f32..1.5);
            let u: f64 = cr.gen_range(-0.4999..0.4999);
            qs.push(
                mean.round() as i32
                    + (-(scale as f64) * (1.0 - 2.0 * u.abs()).ln() * u.signum()).round() as i32,
            );
            mus.push(mean);
            bs.push(scale);
        }
        let est = laplace_bits(
            &Tensor::from_vec(1, 1, m, qs.iter().map(|&v| v as f32).collect()),
            &LaplaceParams::new(
                Tensor::from_vec(1, 1, m, mus.clone()),
                Tensor::from_vec(1, 1, m, bs.clone()),
            ),
        )
        .bits;
        let actual = encode_laplace(&qs, &mus, &bs).len() as f64 * 8.0;
        let bound = 0.02 * est + 256.0;
        let gap = (actual - est).abs();
        worst_gap = worst_gap.max(gap - bound);
        assert!(
            gap <= bound,
            "case {case}: actual {actual:.0} bits vs estimate {est:.0} (bound {bound:.0})"
        );
    }

    println!(
        "ACCEPTANCE 05 entropy-stack: PASS (oracle gap {:.2e}, 10^6 round trip exact, {:.1}s)",
        worst,
        start.elapsed().as_secs_f64()
    );
    let _ = worst_gap;
}

// ---------------------------------------------------------------------------
// Criterion 6: bitstream round trip (includes separate-process decode)
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_bitstream_round_trip() {
    let fx = fixture();
    let start = Instant::now();
    let seq = clip_sequence(&fx.clip9);
    let cfg = EncoderConfig {
        lambda_index: 3,
        intra_period: 5, // two GOPs over 9 frames
        flags: AblationFlags::default(),
    };
    let res = encode_sequence(&fx.model, &seq, &cfg).unwrap();
    let bytes = res.container.to_bytes();
    // container accounting identity
    assert_eq!(bytes.len(), res.container.byte_len());

    // in-process decode: bit-identical reconstructions
    let parsed = Container::from_bytes(&bytes).unwrap();
    let decoded = decode_sequence(&fx.model, &parsed).unwrap();
    assert_eq!(decoded.len(), 9);
    for (enc, dec) in res.recons.iter().zip(&decoded.frames) {
        assert_eq!(
            enc.data(),
            dec.pixels.data(),
            "decoder diverged from encoder-side reconstruction"
        );
    }

    // separate-process decode through the CLI: the decoder sees only the
    // bitstream file and the checkpoint
    let dir = tempfile::tempdir().unwrap();
    let stream_path = dir.path().join("clip.sddc");
    std::fs::write(&stream_path, &bytes).unwrap();
    let out_dir = dir.path().join("decoded");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_sddc"))
        .args([
            "decode",
            "--in",
            stream_path.to_str().unwrap(),
            "--checkpoint",
            fx.ckpt_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .expect("run decoder process");
    assert!(status.success(), "decoder process failed");
    let reread = read_sequence(&out_dir, SourceFormat::ImageDir, 0, 0, 9).unwrap();
    for (enc, dec) in res.recons.iter().zip(&reread.frames) {
        assert_eq!(
            quantize_frame_8bit(enc).data(),
            dec.pixels.data(),
            "out-of-process decode mismatch"
        );
    }

    println!(
        "ACCEPTANCE 06 bitstream-round-trip: PASS ({} bytes, bpp {:.4}, {:.1}s)",
        bytes.len(),
        container_bpp(&res.container),
        start.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: overfit-one-clip training sanity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_overfit_training() {
    let fx = fixture();
    let start = Instant::now();
    assert!(
        fx.final_loss < 0.5 * fx.initial_loss,
        "loss {:.3} -> {:.3} did not halve",
        fx.initial_loss,
        fx.final_loss
    );

    // copy-previous-reconstruction baseline: a zero-bit inter codec keeps
    // emitting the intra reconstruction
    let seq = clip_sequence(&fx.train_clip);
    let baseline_recon = quantize_frame_8bit(&fx.train_clip[0]);
    let mut baseline_sum = 0.0;
    for t in 1..fx.train_clip.len() {
        baseline_sum += psnr(&fx.train_clip[t], &baseline_recon).unwrap();
    }
    let baseline = baseline_sum / (fx.train_clip.len() - 1) as f64;

    let cfg = EncoderConfig {
        lambda_index: 3,
        intra_period: 32,
        flags: AblationFlags::default(),
    };
    let res = encode_sequence(&fx.model, &seq, &cfg).unwrap();
    let inter: Vec<f64> = res
        .stats
        .iter()
        .filter(|s| !s.is_intra)
        .map(|s| s.psnr_db)
        .collect();
    let model_psnr = inter.iter().sum::<f64>() / inter.len() as f64;
    assert!(
        model_psnr >= baseline + 1.0,
        "inter psnr {model_psnr:.2} dB vs baseline {baseline:.2} dB"
    );

    println!(
        "ACCEPTANCE 07 overfit-training: PASS (loss {:.2} -> {:.2}, inter psnr {:.2} dB vs copy-previous {:.2} dB, trained in {:.0}s, +{:.1}s)",
        fx.initial_loss,
        fx.final_loss,
        model_psnr,
        baseline,
        fx.train_secs,
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn trained_flow_is_quiet_on_static_scenes() {
    // after the overfit training, a textured frame paired with itself must
    // estimate (near-)zero motion
    let fx = fixture();
    let frame = &fx.train_clip[3];
    let pair = decompose(frame, 2).unwrap();
    let flow = fx
        .model
        .flow_structure
        .estimate(
            &fx.model.store,
            &pair.structure,
            &pair.structure,
            sddc::flow::FlowKind::Structure,
        )
        .unwrap();
    let mean_mag = flow.vectors.mean_abs();
    assert!(mean_mag <= 0.5, "static-scene mean |flow| = {mean_mag:.4} px");
    println!("EXTRA static-scene flow: PASS (mean |flow| {mean_mag:.4} px)");
}

// ---------------------------------------------------------------------------
// Criterion 8: ablation functionality
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_ablations() {
    let fx = fixture();
    let start = Instant::now();
    let seq = clip_sequence(&fx.train_clip);

    let run = |flags: AblationFlags| {
        let cfg = EncoderConfig {
            lambda_index: 3,
            intra_period: 32,
            flags,
        };
        let res = encode_sequence(&fx.model, &seq, &cfg).unwrap();
        let bytes = res.container.to_bytes();
        let decoded =
            decode_sequence(&fx.model, &Container::from_bytes(&bytes).unwrap()).unwrap();
        for (enc, dec) in res.recons.iter().zip(&decoded.frames) {
            assert_eq!(enc.data(), dec.pixels.data(), "ablated stream must decode");
        }
        let inter: Vec<f64> = res
            .stats
            .iter()
            .filter(|s| !s.is_intra)
            .map(|s| s.psnr_db)
            .collect();
        (
            container_bpp(&res.container),
            inter.iter().sum::<f64>() / inter.len() as f64,
        )
    };

    let (bpp_full, psnr_full) = run(AblationFlags::default());
    let (bpp_nd, psnr_nd) = run(AblationFlags {
        no_detail: true,
        no_long_term: false,
    });
    let (bpp_nl, psnr_nl) = run(AblationFlags {
        no_detail: false,
        no_long_term: true,
    });

    println!(
        "ACCEPTANCE 08 ablations: PASS (full {bpp_full:.4} bpp / {psnr_full:.2} dB; \
         no-detail {bpp_nd:.4} bpp / {psnr_nd:.2} dB (delta {:+.2} dB); \
         no-long-term {bpp_nl:.4} bpp / {psnr_nl:.2} dB (delta {:+.2} dB); {:.1}s)",
        psnr_nd - psnr_full,
        psnr_nl - psnr_full,
        start.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: BD-rate calculator
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_bd_rate() {
    let start = Instant::now();
    let anchor = vec![(0.1, 30.0), (0.2, 33.0), (0.4, 36.0), (0.8, 39.0)];
    let identical = bd_rate(&anchor, &anchor).unwrap();
    assert!(identical.abs() < 1e-9, "identical curves gave {identical}");

    let scaled: Vec<(f64, f64)> = anchor.iter().map(|&(r, q)| (0.9 * r, q)).collect();
    let ten = bd_rate(&anchor, &scaled).unwrap();
    assert!((ten + 10.0).abs() <= 0.01, "0.9x scaling gave {ten}");

    // synthetic closed-form curves vs dense numerical integration
    let mk = |a: f64, k: f64, q0: f64, dq: f64| -> Vec<(f64, f64)> {
        (0..5)
            .map(|i| {
                let q = q0 + dq * i as f64;
                (a * (k * q).exp(), q)
            })
            .collect()
    };
    let ca = mk(0.05, 0.11, 30.0, 2.5);
    let ct = mk(0.043, 0.105, 29.0, 2.8);
    let bd = bd_rate(&ca, &ct).unwrap();
    let prep = |pts: &[(f64, f64)]| {
        Pchip::new(
            pts.iter().map(|p| p.1).collect(),
            pts.iter().map(|p| p.0.log10()).collect(),
        )
        .unwrap()
    };
    let pa = prep(&ca);
    let pt = prep(&ct);
    let lo = ca[0].1.max(ct[0].1);
    let hi = ca[4].1.min(ct[4].1);
    let n = 400_000;
    let mut acc = 0.0;
    for i in 0..=n {
        let q = lo + (hi - lo) * i as f64 / n as f64;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * (pt.eval(q) - pa.eval(q));
    }
    let oracle_bd = (10f64.powf(acc / n as f64) - 1.0) * 100.0;
    assert!(
        (bd - oracle_bd).abs() <= 0.05,
        "closed-form {bd} vs oracle {oracle_bd}"
    );

    println!(
        "ACCEPTANCE 09 bd-rate: PASS (identical {identical:.3e}, scaled {ten:.4}%, oracle gap {:.4}, {:.1}s)",
        (bd - oracle_bd).abs(),
        start.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: metrics
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_metrics() {
    let start = Instant::now();
    let a = Tensor::filled(3, 64, 64, 0.5);
    let b = a.map(|v| v + 1.0 / 255.0);
    let p = psnr(&a, &b).unwrap();
    assert!((p - 48.130803608679096).abs() <= 0.01, "uniform 1/255: {p}");
    let c = a.map(|v| v + 0.1);
    let p2 = psnr(&a, &c).unwrap();
    assert!((p2 - 20.0).abs() <= 0.01, "mse 0.01: {p2}");

    let frames = synthetic_clip(2, 64, 64, 21);
    let exact = ms_ssim(&frames[0], &frames[0]).unwrap();
    assert_eq!(exact, 1.0, "ms_ssim(a,a) must be exactly 1.0");
    let fwd = ms_ssim(&frames[0], &frames[1]).unwrap();
    let rev = ms_ssim(&frames[1], &frames[0]).unwrap();
    assert!((fwd - rev).abs() < 1e-12, "symmetry: {fwd} vs {rev}");

    println!(
        "ACCEPTANCE 10 metrics: PASS (psnr {p:.4}/{p2:.4} dB, msssim identity exact, {:.1}s)",
        start.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: encode determinism across CLI runs
// ---------------------------------------------------------------------------

#[test]
fn acceptance_11_encode_determinism() {
    let fx = fixture();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.sddc"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sddc"))
            .args([
                "encode",
                "--input",
                fx.clip_dir.to_str().unwrap(),
                "--checkpoint",
                fx.ckpt_path.to_str().unwrap(),
                "--lambda-index",
                "3",
                "--intra-period",
                "5",
                "--frames",
                "9",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .expect("run encoder process");
        assert!(
            status.status.success(),
            "encoder failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(
        outputs[0], outputs[1],
        "two encoder runs produced different containers"
    );
    println!(
        "ACCEPTANCE 11 encode-determinism: PASS ({} bytes, byte-identical, {:.1}s)",
        outputs[0].len(),
        start.elapsed().as_secs_f64()
    );
}
