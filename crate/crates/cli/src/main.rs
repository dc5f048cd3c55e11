//! `nervpp`: encode, decode and evaluate videos with the NeRV++ codec.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nervpp::codec::{self, EncodeOptions, Stage};
use nervpp::compression::{CompressOptions, CompressedModel};
use nervpp::config::CodecConfig;
use nervpp::fsio::write_atomic;
use nervpp::metrics::{self, bd_psnr, bd_rate, rd_curve, read_rd_csv, write_rd_csv, RdQuality, RdRow};
use nervpp::model::{count_macs_per_pixel, count_params, ArchConfig, SizePreset};
use nervpp::training::TrainConfig;
use nervpp::video::{read_frames, write_frames, FrameFormat, RawGeometry, VideoFrames};
use nervpp::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "nervpp", version, about = "NeRV++ implicit neural video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Overfit a model to a clip and write the compressed .nrv stream
    Encode(EncodeArgs),
    /// Reconstruct frames from an .nrv stream
    Decode(DecodeArgs),
    /// Per-frame PSNR / SSIM / MS-SSIM between two clips
    Eval(EvalArgs),
    /// Encode a clip at several model sizes and write an RD csv
    RdSweep(SweepArgs),
    /// BD-rate and BD-PSNR of a test RD csv against an anchor
    Bdrate(BdrateArgs),
    /// Print the header of an .nrv stream
    Info(InfoArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Input clip: a raw planar rgb24 file or a directory of PNGs
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "raw-rgb24")]
    format: FrameFormat,
    /// Frame count (raw input only)
    #[arg(long)]
    frames: Option<usize>,
    /// Frame height (raw input only)
    #[arg(long)]
    height: Option<usize>,
    /// Frame width (raw input only)
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Model size preset
    #[arg(long, conflicts_with = "config")]
    size: Option<SizePreset>,
    /// TOML codec config; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training epochs; fine-tuning runs for a tenth of this
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, env = "NRVPP_SEED", default_value_t = 0)]
    seed: u64,
    /// Fraction of conv weights zeroed before fine-tuning; 0 skips both
    #[arg(long)]
    prune_ratio: Option<f64>,
    /// Double the expansion ratio of every post-upsample SCRB
    #[arg(long)]
    star: bool,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    output: PathBuf,
    /// Per-epoch training log (csv)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "raw-rgb24")]
    format: FrameFormat,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    reference: InputArgs,
    /// Clip to compare against the reference (same format and geometry)
    #[arg(long)]
    distorted: PathBuf,
    /// Metrics csv; printed to stdout when absent
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated size presets
    #[arg(long, value_delimiter = ',', default_value = "xsmall,small,medium,large")]
    sizes: Vec<SizePreset>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BdrateArgs {
    #[arg(long)]
    anchor: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::RdSweep(a) => rd_sweep(a),
        Command::Bdrate(a) => bdrate(a),
        Command::Info(a) => info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_DATA })
        }
    }
}

fn load_video(a: &InputArgs) -> nervpp::Result<VideoFrames> {
    let raw = match (a.frames, a.height, a.width) {
        (Some(frames), Some(height), Some(width)) => Some(RawGeometry { frames, height, width }),
        _ => None,
    };
    read_frames(&a.input, a.format, raw)
}

/// Architecture and encoder settings for `video`, from a config file or a
/// size preset plus flags.
fn resolve(t: &TrainArgs, size: Option<SizePreset>, video: &VideoFrames) -> nervpp::Result<(ArchConfig, EncodeOptions)> {
    let (h, w) = (video.height(), video.width());
    let (mut arch, mut train, mut compress) = match &t.config {
        Some(path) => {
            let cfg = CodecConfig::load(path)?;
            if (cfg.video.height, cfg.video.width) != (h, w) {
                return Err(Error::Config(format!(
                    "config is for {}x{} frames but the input is {h}x{w}",
                    cfg.video.height, cfg.video.width
                )));
            }
            (cfg.arch()?, cfg.train_config(t.seed)?, cfg.compress_options()?)
        }
        None => {
            let size = size.or(t.size).unwrap_or(SizePreset::XSmall);
            let train = TrainConfig {
                seed: t.seed,
                ..TrainConfig::default()
            };
            (ArchConfig::preset(size, h, w)?, train, CompressOptions::default())
        }
    };
    if t.star {
        arch.variant_star = true;
    }
    if let Some(n) = t.epochs {
        train.epochs = n;
        train.finetune_epochs = (n / 10).max(1);
    }
    if let Some(r) = t.prune_ratio {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Config(format!("--prune-ratio must lie in [0, 1), got {r}")));
        }
        compress.prune_ratio = r;
    }
    Ok((arch, EncodeOptions { train, compress }))
}

fn encode(a: EncodeArgs) -> nervpp::Result<()> {
    let video = load_video(&a.input)?;
    let (arch, opts) = resolve(&a.train, None, &video)?;
    let total = opts.train.epochs;
    let enc = codec::encode_with(&video, &arch, &opts, &mut |stage, r| {
        if r.epoch % 25 == 0 || (stage == Stage::Train && r.epoch == total) {
            let name = if stage == Stage::Train { "train" } else { "finetune" };
            eprintln!("{name} epoch {:>4}: loss {:.5} psnr {:.2} dB", r.epoch, r.loss, r.psnr);
        }
    })?;
    write_atomic(&a.output, &enc.bytes)?;
    if let Some(log) = &a.log {
        let mut text = enc.report.train_log.to_csv();
        if let Some(ft) = &enc.report.finetune_log {
            // fine-tune epochs continue the numbering
            for line in ft.to_csv().lines().skip(1) {
                let (epoch, rest) = line.split_once(',').unwrap_or((line, ""));
                let epoch: usize = epoch.parse().unwrap_or(0);
                text.push_str(&format!("{},{rest}\n", epoch + total));
            }
        }
        write_atomic(log, text.as_bytes())?;
    }
    let r = &enc.report;
    println!("params: {}", count_params(&enc.arch));
    println!("float psnr: {:.4} dB", r.float_psnr);
    if let (Some(p), Some(f)) = (r.pruned_psnr, r.finetuned_psnr) {
        println!("pruned: {} of {} conv weights", r.pruned_weights, r.conv_weights);
        println!("pruned psnr: {p:.4} dB");
        println!("finetuned psnr: {f:.4} dB");
    }
    println!("bytes: {}", r.bytes);
    println!("bpp: {:.6}", r.bpp);
    println!("model psnr: {:.6} dB", r.quantized_psnr);
    // what `decode` writes: the model output rounded to 8-bit samples
    println!("psnr: {:.6} dB", r.output_psnr);
    Ok(())
}

fn decode(a: DecodeArgs) -> nervpp::Result<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| Error::Data(format!("{}: {e}", a.input.display())))?;
    let dec = codec::decode(&bytes)?;
    write_frames(&dec.video, &a.output, a.format)?;
    let fps = if dec.seconds > 0.0 { dec.video.frames() as f64 / dec.seconds } else { f64::INFINITY };
    println!(
        "decoded {} frames of {}x{} in {:.3}s ({:.1} fps)",
        dec.video.frames(),
        dec.video.height(),
        dec.video.width(),
        dec.seconds,
        fps
    );
    Ok(())
}

fn metrics_csv(reference: &VideoFrames, distorted: &VideoFrames) -> nervpp::Result<String> {
    let mut out = String::from("frame,psnr,ssim,msssim\n");
    for i in 0..reference.frames() {
        let (x, y) = (reference.frame(i), distorted.frame(i));
        out.push_str(&format!(
            "{i},{},{},{}\n",
            metrics::psnr(&x, &y)?,
            metrics::ssim(&x, &y)?,
            metrics::ms_ssim(&x, &y)?
        ));
    }
    let (x, y) = (reference.to_tensor(), distorted.to_tensor());
    out.push_str(&format!(
        "all,{},{},{}\n",
        metrics::psnr(&x, &y)?,
        metrics::ssim(&x, &y)?,
        metrics::ms_ssim(&x, &y)?
    ));
    Ok(out)
}

fn eval(a: EvalArgs) -> nervpp::Result<()> {
    let reference = load_video(&a.reference)?;
    let distorted = load_video(&InputArgs {
        input: a.distorted.clone(),
        ..a.reference.clone()
    })?;
    if (reference.frames(), reference.height(), reference.width()) != (distorted.frames(), distorted.height(), distorted.width()) {
        return Err(Error::Data("reference and distorted clips differ in geometry".into()));
    }
    let csv = metrics_csv(&reference, &distorted)?;
    match &a.output {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn rd_sweep(a: SweepArgs) -> nervpp::Result<()> {
    let video = load_video(&a.input)?;
    let mut rows = Vec::new();
    for &size in &a.sizes {
        let (arch, opts) = resolve(&a.train, Some(size), &video)?;
        eprintln!("rd-sweep: encoding {size} ({} params)", count_params(&arch));
        let enc = codec::encode(&video, &arch, &opts)?;
        let dec = codec::decode(&enc.bytes)?;
        let (x, y) = (video.to_tensor(), dec.video.to_tensor());
        let row = RdRow {
            label: if arch.variant_star { format!("{size}*") } else { size.to_string() },
            bpp: enc.report.bpp,
            psnr: metrics::psnr(&x, &y)?,
            msssim: metrics::ms_ssim(&x, &y)?,
        };
        println!("{},{},{},{}", row.label, row.bpp, row.psnr, row.msssim);
        rows.push(row);
    }
    write_rd_csv(&a.output, &rows)
}

fn bdrate(a: BdrateArgs) -> nervpp::Result<()> {
    let anchor = read_rd_csv(&a.anchor)?;
    let test = read_rd_csv(&a.test)?;
    for (name, q) in [("psnr", RdQuality::Psnr), ("msssim", RdQuality::MsSsimDb)] {
        let (ca, ct) = (rd_curve(&anchor, q)?, rd_curve(&test, q)?);
        println!("bd-rate ({name}): {:.4}%", bd_rate(&ca, &ct)?);
        println!("bd-psnr ({name}): {:.4} dB", bd_psnr(&ca, &ct)?);
    }
    Ok(())
}

fn info(a: InfoArgs) -> nervpp::Result<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| Error::Data(format!("{}: {e}", a.input.display())))?;
    let m = CompressedModel::deserialize(&bytes)?;
    print!("{}", info_text(&m, bytes.len(), &a.input)?);
    Ok(())
}

fn info_text(m: &CompressedModel, size: usize, path: &Path) -> nervpp::Result<String> {
    let a = &m.arch;
    let d = m.dims;
    let mut s = String::new();
    s.push_str(&format!("file: {}\n", path.display()));
    s.push_str(&format!("bytes: {size}\n"));
    s.push_str(&format!("frames: {}\nheight: {}\nwidth: {}\n", d.frames, d.height, d.width));
    s.push_str(&format!("bpp: {}\n", metrics::bpp(size, d.frames, d.height, d.width)?));
    s.push_str(&format!("variant_star: {}\n", a.variant_star));
    s.push_str(&format!("pe_base: {}\npe_levels: {}\nstem_hidden: {}\n", a.pe_base, a.pe_levels, a.stem_hidden));
    s.push_str(&format!("base_grid: {}x{}\nbase_channels: {}\n", a.base_grid.0, a.base_grid.1, a.base_channels));
    for (i, b) in a.blocks.iter().enumerate() {
        s.push_str(&format!(
            "block {i}: stride {} out_channels {} dw_kernel {} expansion {}\n",
            b.stride, b.out_channels, b.dw_kernel, b.expansion
        ));
    }
    s.push_str(&format!("head_kernel: {}\n", a.head_kernel));
    s.push_str(&format!("tensors: {}\n", m.tensors.len()));
    s.push_str(&format!("params: {}\n", count_params(a)));
    s.push_str(&format!("macs_per_pixel: {:.3}\n", count_macs_per_pixel(a)));
    s.push_str(&format!("huffman_symbols: {}\n", m.table.entries().len()));
    s.push_str(&format!("payload_bits: {}\n", m.payload_bits));
    Ok(s)
}
