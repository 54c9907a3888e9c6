//! Command-line tools for the codec: encode/decode, training, RD analysis,
//! and debug dumps of the decomposition and temporal contexts.

use clap::{Args, Parser, Subcommand};
use sddc::config::{ModelConfig, LAMBDAS};
use sddc::container::Container;
use sddc::error::{CodecError, Result};
use sddc::frames_io::{
    detect_format, pad_to_stride, read_image, read_sequence, write_png, write_sequence, Frame,
    Sequence, SourceFormat,
};
use sddc::graph::Tape;
use sddc::metrics::{bd_rate, msssim_db, QualityMetric};
use sddc::model::{AblationFlags, SddcModel, StateNodes};
use sddc::session::{container_bpp, decode_sequence, encode_sequence, EncoderConfig};
use sddc::synthetic::synthetic_clip;
use sddc::tensor::Tensor;
use sddc::training::{train_and_save, TrainConfig};
use sddc::{checkpoint, sdd};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "sddc", about = "Toy learned video codec with structure/detail motion and long/short-term context fusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputGeometry {
    /// Input width (raw YUV only)
    #[arg(long, default_value_t = 0)]
    width: usize,
    /// Input height (raw YUV only)
    #[arg(long, default_value_t = 0)]
    height: usize,
    /// Number of frames to read (clamped to what is available)
    #[arg(long, default_value_t = 96)]
    frames: usize,
    /// Input format: yuv420 | yuv444 | image_dir (inferred when omitted)
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a sequence to a bitstream
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        lambda_index: u8,
        #[arg(long, default_value_t = 32)]
        intra_period: usize,
        #[arg(long)]
        out: PathBuf,
        /// Force the detail motion field to zero
        #[arg(long)]
        no_detail_branch: bool,
        /// Skip long-term context fusion
        #[arg(long)]
        no_long_term: bool,
        /// Append an RD CSV row (sequence,lambda,bpp,psnr,msssim)
        #[arg(long)]
        report: Option<PathBuf>,
        /// Sequence name used in the RD CSV
        #[arg(long, default_value = "sequence")]
        sequence: String,
        #[command(flatten)]
        geometry: InputGeometry,
    },
    /// Decode a bitstream to frames
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output format: image_dir | yuv444 | yuv420
        #[arg(long, default_value = "image_dir")]
        format: String,
    },
    /// Train a model on clips from a sequence (or synthetic content)
    Train {
        /// Input sequence path, or "synthetic" for generated content
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        lambda_index: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        warmup_steps: usize,
        #[arg(long, default_value_t = 600)]
        single_steps: usize,
        #[arg(long, default_value_t = 200)]
        cascaded_steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f32,
        /// Crop size for training clips (multiple of 64)
        #[arg(long, default_value_t = 64)]
        crop: usize,
        /// Number of clips sampled from the input
        #[arg(long, default_value_t = 4)]
        clips: usize,
        /// Model width preset: small | default
        #[arg(long, default_value = "small")]
        model: String,
        /// Distortion metric: mse | msssim
        #[arg(long, default_value = "mse")]
        distortion: String,
        #[command(flatten)]
        geometry: InputGeometry,
    },
    /// BD-rate between two RD CSV files
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Quality axis: psnr | msssim
        #[arg(long, default_value = "psnr")]
        metric: String,
    },
    /// Plot RD curves from CSV files (emits CSV always, plus a PNG chart)
    Plot {
        /// Comma-separated RD CSV files
        #[arg(long)]
        curves: String,
        /// Output path prefix (writes <prefix>.csv and <prefix>.png)
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the structure/detail decomposition of one image
    SddDump {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        factor: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Dump short-term vs fused temporal context channels for one frame
    ContextDump {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input sequence (or "synthetic")
        #[arg(long)]
        input: String,
        /// Inter frame index to inspect (>= 1)
        #[arg(long, default_value_t = 1)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        geometry: InputGeometry,
    },
    /// Generate a synthetic test clip as PNG frames
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 9)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_input(path: &Path, geo: &InputGeometry) -> Result<Sequence> {
    let format = match &geo.format {
        Some(f) => SourceFormat::parse(f)?,
        None => detect_format(path)?,
    };
    let count = match format {
        SourceFormat::ImageDir => {
            let available = std::fs::read_dir(path)
                .map_err(|e| CodecError::io(path, e))?
                .filter_map(|e| e.ok())
                .filter(|e| {
                    matches!(
                        e.path().extension().and_then(|x| x.to_str()),
                        Some("png") | Some("ppm")
                    )
                })
                .count();
            geo.frames.min(available)
        }
        raw => {
            if geo.width == 0 || geo.height == 0 {
                return Err(CodecError::InvalidArgument(
                    "raw YUV input needs --width and --height".into(),
                ));
            }
            let len = std::fs::metadata(path)
                .map_err(|e| CodecError::io(path, e))?
                .len();
            let stride = raw.frame_bytes(geo.width, geo.height) as u64;
            geo.frames.min((len / stride) as usize)
        }
    };
    read_sequence(path, format, geo.width, geo.height, count)
}

/// Seeded random crops: `clips` windows of `clip_len` frames at `crop` px.
fn sample_crops(
    seq: &Sequence,
    crop: usize,
    clips: usize,
    clip_len: usize,
    seed: u64,
) -> Result<Vec<Vec<Tensor>>> {
    use rand::{Rng, SeedableRng};
    if seq.len() < 2 {
        return Err(CodecError::EmptyInput(
            "training input needs at least 2 frames".into(),
        ));
    }
    let (_, h, w) = seq.frames[0].pixels.shape();
    if h < crop || w < crop {
        return Err(CodecError::InvalidArgument(format!(
            "input {w}x{h} smaller than crop {crop}"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let len = clip_len.min(seq.len());
    let mut out = Vec::with_capacity(clips);
    for _ in 0..clips {
        let start = rng.gen_range(0..=(seq.len() - len));
        let oy = rng.gen_range(0..=(h - crop));
        let ox = rng.gen_range(0..=(w - crop));
        let mut clip = Vec::with_capacity(len);
        for t in 0..len {
            let src = &seq.frames[start + t].pixels;
            let mut dst = Tensor::zeros(3, crop, crop);
            for c in 0..3 {
                for y in 0..crop {
                    for x in 0..crop {
                        dst.set(c, y, x, src.at(c, oy + y, ox + x));
                    }
                }
            }
            clip.push(dst);
        }
        out.push(clip);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode {
            input,
            checkpoint,
            lambda_index,
            intra_period,
            out,
            no_detail_branch,
            no_long_term,
            report,
            sequence,
            geometry,
        } => {
            let model = checkpoint::load(&checkpoint)?;
            let seq = load_input(&input, &geometry)?;
            let cfg = EncoderConfig {
                lambda_index,
                intra_period,
                flags: AblationFlags {
                    no_detail: no_detail_branch,
                    no_long_term,
                },
            };
            let res = encode_sequence(&model, &seq, &cfg)?;
            let bytes = res.container.to_bytes();
            std::fs::write(&out, &bytes).map_err(|e| CodecError::io(&out, e))?;

            println!("frame  type   bits      psnr(db)   ms-ssim");
            let mut psnr_sum = 0.0;
            let mut ms_sum = 0.0;
            for s in &res.stats {
                println!(
                    "{:>5}  {}  {:>8}  {:>9.3}  {:.5}",
                    s.index,
                    if s.is_intra { "intra" } else { "inter" },
                    s.bits,
                    s.psnr_db,
                    s.msssim
                );
                psnr_sum += s.psnr_db;
                ms_sum += s.msssim;
            }
            let n = res.stats.len().max(1) as f64;
            let bpp = container_bpp(&res.container);
            let mean_psnr = psnr_sum / n;
            let mean_ms = ms_sum / n;
            println!(
                "total {} bytes | bpp {:.5} | mean psnr {:.3} dB | mean ms-ssim {:.5}",
                bytes.len(),
                bpp,
                mean_psnr,
                mean_ms
            );
            if let Some(rp) = report {
                append_rd_row(
                    &rp,
                    &sequence,
                    LAMBDAS[lambda_index as usize],
                    bpp,
                    mean_psnr,
                    mean_ms,
                )?;
            }
            Ok(())
        }
        Command::Decode {
            input,
            checkpoint,
            out,
            format,
        } => {
            let model = checkpoint::load(&checkpoint)?;
            let bytes = std::fs::read(&input).map_err(|e| CodecError::io(&input, e))?;
            let container = Container::from_bytes(&bytes)?;
            let seq = decode_sequence(&model, &container)?;
            if seq.is_empty() {
                println!("decoded 0 frames; nothing to write");
                return Ok(());
            }
            let fmt = SourceFormat::parse(&format)?;
            write_sequence(&seq, &out, fmt)?;
            println!("decoded {} frames to {}", seq.len(), out.display());
            Ok(())
        }
        Command::Train {
            data,
            out,
            log,
            lambda_index,
            seed,
            warmup_steps,
            single_steps,
            cascaded_steps,
            lr,
            crop,
            clips,
            model,
            distortion,
            geometry,
        } => {
            if crop == 0 || crop % 64 != 0 {
                return Err(CodecError::InvalidArgument(
                    "--crop must be a positive multiple of 64".into(),
                ));
            }
            let model_cfg = match model.as_str() {
                "small" => ModelConfig::desk_small(),
                "default" => ModelConfig::default(),
                other => {
                    return Err(CodecError::InvalidArgument(format!(
                        "unknown model preset {other}"
                    )))
                }
            };
            let mut cfg = TrainConfig::new(lambda_index);
            cfg.seed = seed;
            cfg.lr = lr;
            cfg.warmup_steps = warmup_steps;
            cfg.single_steps = single_steps;
            cfg.cascaded_steps = cascaded_steps;
            cfg.rd.distortion = match distortion.as_str() {
                "mse" => sddc::config::Distortion::Mse,
                "msssim" => sddc::config::Distortion::OneMinusMsSsim,
                other => {
                    return Err(CodecError::InvalidArgument(format!(
                        "unknown distortion {other}"
                    )))
                }
            };

            let clip_len = cfg.rd.clip_len + 1;
            let training_clips: Vec<Vec<Tensor>> = if data == "synthetic" {
                (0..clips.max(1))
                    .map(|i| synthetic_clip(clip_len.max(7), crop, crop, seed ^ (i as u64 + 1)))
                    .collect()
            } else {
                let seq = load_input(Path::new(&data), &geometry)?;
                sample_crops(&seq, crop, clips.max(1), clip_len, seed)?
            };

            let mut m = SddcModel::new(model_cfg, seed);
            let rows = train_and_save(&mut m, &training_clips, &cfg, &out, log.as_deref())?;
            if let Some(last) = rows.last() {
                println!(
                    "trained {} steps | final eval loss {:.4} (distortion {:.6}, rate {:.1} bits)",
                    cfg.total_steps(),
                    last.eval_loss,
                    last.eval_distortion,
                    last.eval_rate_bits
                );
            }
            println!("checkpoint written to {}", out.display());
            Ok(())
        }
        Command::Bdrate {
            anchor,
            test,
            metric,
        } => {
            let metric = match metric.as_str() {
                "psnr" => QualityMetric::Psnr,
                "msssim" => QualityMetric::MsSsim,
                other => {
                    return Err(CodecError::InvalidArgument(format!(
                        "unknown metric {other}"
                    )))
                }
            };
            let a = read_rd_csv(&anchor)?;
            let t = read_rd_csv(&test)?;
            let mut results = Vec::new();
            for (name, apts) in &a {
                if let Some(tpts) = t.get(name) {
                    let curve = |pts: &[RdRow]| -> Vec<(f64, f64)> {
                        pts.iter()
                            .map(|r| {
                                let q = match metric {
                                    QualityMetric::Psnr => r.psnr,
                                    QualityMetric::MsSsim => msssim_db(r.msssim),
                                };
                                (r.bpp, q)
                            })
                            .collect()
                    };
                    let bd = bd_rate(&curve(apts), &curve(tpts))?;
                    println!("{name}: {bd:+.3}%");
                    results.push(bd);
                }
            }
            if results.is_empty() {
                return Err(CodecError::InvalidArgument(
                    "no common sequences between the two CSV files".into(),
                ));
            }
            let mean = results.iter().sum::<f64>() / results.len() as f64;
            println!("average: {mean:+.3}%");
            Ok(())
        }
        Command::Plot { curves, out } => {
            let files: Vec<&str> = curves.split(',').collect();
            let mut all = Vec::new();
            for f in &files {
                let rows = read_rd_csv(Path::new(f))?;
                all.push((f.to_string(), rows));
            }
            // CSV always
            let csv_path = out.with_extension("csv");
            let mut body = String::from("curve,sequence,lambda,bpp,psnr,msssim\n");
            for (name, rows) in &all {
                for (seq, pts) in rows {
                    for p in pts {
                        body.push_str(&format!(
                            "{name},{seq},{},{},{},{}\n",
                            p.lambda, p.bpp, p.psnr, p.msssim
                        ));
                    }
                }
            }
            std::fs::write(&csv_path, body).map_err(|e| CodecError::io(&csv_path, e))?;
            println!("wrote {}", csv_path.display());

            let png_path = out.with_extension("png");
            match render_rd_chart(&all, &png_path) {
                Ok(()) => println!("wrote {}", png_path.display()),
                Err(e) => eprintln!("warning: chart rendering unavailable ({e}); CSV emitted"),
            }
            Ok(())
        }
        Command::SddDump { input, factor, out } => {
            let img = read_image(&input)?;
            let (padded, _) = pad_to_stride(&img, factor.max(1));
            let pair = sdd::decompose(&padded, factor)?;
            std::fs::create_dir_all(&out).map_err(|e| CodecError::io(&out, e))?;
            write_png(&pair.structure, &out.join("structure.png"))?;
            // detail visualized as 255 - |d|
            let detail_vis = pair.detail.map(|v| 1.0 - v.abs().min(1.0));
            write_png(&detail_vis, &out.join("detail.png"))?;
            println!("wrote structure.png and detail.png to {}", out.display());
            Ok(())
        }
        Command::ContextDump {
            checkpoint,
            input,
            frame,
            out,
            geometry,
        } => {
            let model = checkpoint::load(&checkpoint)?;
            let seq = if input == "synthetic" {
                let frames = synthetic_clip(frame + 1, 64, 64, 1);
                Sequence {
                    frames: frames
                        .into_iter()
                        .enumerate()
                        .map(|(i, t)| Frame::new(t, i))
                        .collect(),
                    frame_rate: 30.0,
                    source_format: SourceFormat::ImageDir,
                }
            } else {
                load_input(Path::new(&input), &geometry)?
            };
            if frame == 0 || frame >= seq.len() {
                return Err(CodecError::InvalidArgument(format!(
                    "--frame must be an inter index in 1..{}",
                    seq.len()
                )));
            }
            context_dump(&model, &seq, frame, &out)
        }
        Command::Synth {
            out,
            frames,
            width,
            height,
            seed,
        } => {
            let clip = synthetic_clip(frames, height, width, seed);
            let seq = Sequence {
                frames: clip
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| Frame::new(t, i))
                    .collect(),
                frame_rate: 30.0,
                source_format: SourceFormat::ImageDir,
            };
            write_sequence(&seq, &out, SourceFormat::ImageDir)?;
            println!("wrote {frames} frames to {}", out.display());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// RD CSV
// ---------------------------------------------------------------------------

struct RdRow {
    lambda: f32,
    bpp: f64,
    psnr: f64,
    msssim: f64,
}

fn append_rd_row(
    path: &Path,
    sequence: &str,
    lambda: f32,
    bpp: f64,
    psnr: f64,
    msssim: f64,
) -> Result<()> {
    let mut body = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| CodecError::io(path, e))?
    } else {
        String::from("sequence,lambda,bpp,psnr,msssim\n")
    };
    body.push_str(&format!("{sequence},{lambda},{bpp},{psnr},{msssim}\n"));
    std::fs::write(path, body).map_err(|e| CodecError::io(path, e))
}

fn read_rd_csv(path: &Path) -> Result<BTreeMap<String, Vec<RdRow>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CodecError::io(path, e))?;
    let mut out: BTreeMap<String, Vec<RdRow>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("sequence")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CodecError::InvalidArgument(format!(
                "{}:{}: expected 5 CSV fields",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| CodecError::InvalidArgument(format!("bad number {s}")))
        };
        out.entry(fields[0].to_string()).or_default().push(RdRow {
            lambda: parse(fields[1])? as f32,
            bpp: parse(fields[2])?,
            psnr: parse(fields[3])?,
            msssim: parse(fields[4])?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Chart rendering (minimal built-in backend)
// ---------------------------------------------------------------------------

type CurveSet = [(String, BTreeMap<String, Vec<RdRow>>)];

fn render_rd_chart(curves: &CurveSet, path: &Path) -> Result<()> {
    const W: u32 = 800;
    const H: u32 = 600;
    const M: f64 = 60.0;
    let mut img = image::RgbImage::from_pixel(W, H, image::Rgb([255, 255, 255]));
    let palette = [
        [214u8, 69, 65],
        [31, 119, 180],
        [44, 160, 44],
        [148, 103, 189],
        [255, 127, 14],
        [23, 190, 207],
    ];

    let mut pts: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for (id, (_, rows)) in curves.iter().enumerate() {
        for pts_per_seq in rows.values() {
            let mut v: Vec<(f64, f64)> = pts_per_seq.iter().map(|r| (r.bpp, r.psnr)).collect();
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            pts.push((id, v));
        }
    }
    if pts.is_empty() {
        return Err(CodecError::EmptyInput("no RD points to plot".into()));
    }
    let all: Vec<(f64, f64)> = pts.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (mut x0, mut x1) = (f64::MAX, f64::MIN);
    let (mut y0, mut y1) = (f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 - x0).is_finite() || !(y1 - y0).is_finite() {
        return Err(CodecError::InvalidArgument("non-finite RD points".into()));
    }
    let xr = (x1 - x0).max(1e-9);
    let yr = (y1 - y0).max(1e-9);
    let map = |x: f64, y: f64| -> (f64, f64) {
        (
            M + (x - x0) / xr * (W as f64 - 2.0 * M),
            H as f64 - M - (y - y0) / yr * (H as f64 - 2.0 * M),
        )
    };

    // gridlines and axes
    let gray = image::Rgb([200u8, 200, 200]);
    let black = image::Rgb([0u8, 0, 0]);
    for i in 0..=10 {
        let gx = (M + i as f64 / 10.0 * (W as f64 - 2.0 * M)) as u32;
        let gy = (M + i as f64 / 10.0 * (H as f64 - 2.0 * M)) as u32;
        for y in M as u32..(H as f64 - M) as u32 {
            img.put_pixel(gx, y, gray);
        }
        for x in M as u32..(W as f64 - M) as u32 {
            img.put_pixel(x, gy, gray);
        }
    }
    for x in M as u32..=(W as f64 - M) as u32 {
        img.put_pixel(x, (H as f64 - M) as u32, black);
    }
    for y in M as u32..=(H as f64 - M) as u32 {
        img.put_pixel(M as u32, y, black);
    }

    for (cid, v) in &pts {
        let color = image::Rgb(palette[cid % palette.len()]);
        for pair in v.windows(2) {
            let a = map(pair[0].0, pair[0].1);
            let b = map(pair[1].0, pair[1].1);
            let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()) as usize).max(1);
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let x = a.0 + t * (b.0 - a.0);
                let y = a.1 + t * (b.1 - a.1);
                for dy in -1i32..=0 {
                    for dx in -1i32..=0 {
                        let px = (x as i32 + dx).clamp(0, W as i32 - 1) as u32;
                        let py = (y as i32 + dy).clamp(0, H as i32 - 1) as u32;
                        img.put_pixel(px, py, color);
                    }
                }
            }
        }
        for &(x, y) in v {
            let (px, py) = map(x, y);
            for dy in -2i32..=2 {
                for dx in -2i32..=2 {
                    let qx = (px as i32 + dx).clamp(0, W as i32 - 1) as u32;
                    let qy = (py as i32 + dy).clamp(0, H as i32 - 1) as u32;
                    img.put_pixel(qx, qy, color);
                }
            }
        }
    }

    img.save(path)
        .map_err(|e| CodecError::UnsupportedFormat(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Context dump
// ---------------------------------------------------------------------------

fn normalize_channel(data: &[f32], h: usize, w: usize) -> Tensor {
    let mut lo = f32::MAX;
    let mut hi = f32::MIN;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = (hi - lo).max(1e-9);
    let norm: Vec<f32> = data.iter().map(|&v| (v - lo) / range).collect();
    let mut t = Tensor::zeros(3, h, w);
    for c in 0..3 {
        t.plane_mut(c).copy_from_slice(&norm);
    }
    t
}

/// Tile every channel of a feature map into one grayscale mosaic PNG.
fn dump_channels(t: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = t.shape();
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let mut canvas = Tensor::zeros(3, rows * (h + 2), cols * (w + 2));
    for ch in 0..c {
        let tile = normalize_channel(t.plane(ch), h, w);
        let oy = (ch / cols) * (h + 2);
        let ox = (ch % cols) * (w + 2);
        for cc in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    canvas.set(cc, oy + y, ox + x, tile.at(cc, y, x));
                }
            }
        }
    }
    write_png(&canvas, path)
}

fn context_dump(model: &SddcModel, seq: &Sequence, frame_idx: usize, out: &Path) -> Result<()> {
    use sddc::frame_codec::{intra_decode, intra_encode};

    std::fs::create_dir_all(out).map_err(|e| CodecError::io(out, e))?;
    // run the coding pipeline up to the requested frame to build real state
    let (first_padded, _) = pad_to_stride(
        &intra_decode(&intra_encode(&seq.frames[0].pixels))?,
        sddc::config::CODEC_STRIDE,
    );
    let mut tape = Tape::new_infer();
    let r0 = tape.leaf(first_padded);
    let mut state = model.bootstrap_state(&mut tape, r0);
    let mut dumped = None;
    for t in 1..=frame_idx {
        let (x_padded, _) = pad_to_stride(&seq.frames[t].pixels, sddc::config::CODEC_STRIDE);
        let x = tape.leaf(x_padded);
        let (vs, vd) =
            model.estimate_motion(&mut tape, x, state.prev_frame, AblationFlags::default());
        let m = model.motion.analyze(&mut tape, &model.store, vs, vd);
        let m_q = tape.quantize(m);
        let stage = model.context_stage(&mut tape, m_q, &state, AblationFlags::default());
        // recover the pre-fusion short-term contexts for comparison
        let short = model.tcm.mine_nodes(
            &mut tape,
            &model.store,
            state.feature,
            stage.flow_s,
            stage.flow_d,
        );
        dumped = Some((short, stage.contexts));
        let y = model.frame.analyze(&mut tape, &model.store, x, &stage.contexts);
        let y_q = tape.quantize(y);
        let (_, clamped, feature) = model.reconstruction_stage(&mut tape, y_q, &stage.contexts);
        state = StateNodes {
            prev_frame: clamped,
            feature,
            lstm_h: stage.lstm_h,
            lstm_c: stage.lstm_c,
        };
    }
    let (short, fused) = dumped.expect("frame_idx >= 1");
    dump_channels(tape.value(short.c0), &out.join("short_term_c0.png"))?;
    dump_channels(tape.value(fused.c0), &out.join("fused_c0.png"))?;
    println!(
        "wrote short_term_c0.png and fused_c0.png (frame {frame_idx}) to {}",
        out.display()
    );
    Ok(())
}
