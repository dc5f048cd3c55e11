//! End-to-end encode and decode of a clip.

use std::time::Instant;

use crate::compression::{compress_pipeline, decompress, prune_l1_global, CompressOptions, CompressedModel, VideoDims};
use crate::error::Result;
use crate::metrics::{bpp, psnr};
use crate::model::{ArchConfig, ParameterStore};
use crate::training::{evaluate_psnr, finetune_with, render, train_with, EpochRecord, TrainConfig, TrainLog};
use crate::video::VideoFrames;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Train,
    Finetune,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodeOptions {
    pub train: TrainConfig,
    pub compress: CompressOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeReport {
    /// After training, before pruning.
    pub float_psnr: f64,
    pub pruned_psnr: Option<f64>,
    pub finetuned_psnr: Option<f64>,
    /// Of the decoded stream's model output; what `decode` reproduces.
    pub quantized_psnr: f64,
    /// Of that output rounded to 8-bit samples, as `write_frames` stores it.
    pub output_psnr: f64,
    pub pruned_weights: usize,
    pub conv_weights: usize,
    pub bytes: usize,
    pub bpp: f64,
    pub train_log: TrainLog,
    pub finetune_log: Option<TrainLog>,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub model: CompressedModel,
    pub arch: ArchConfig,
    /// Float weights right before quantization.
    pub params: ParameterStore,
    pub report: EncodeReport,
}

/// `pe_base` is stored as f32; training uses the stored value so the
/// decoder sees the same network.
pub fn canonical_arch(arch: &ArchConfig) -> ArchConfig {
    ArchConfig {
        pe_base: arch.pe_base as f32 as f64,
        ..arch.clone()
    }
}

pub fn encode(video: &VideoFrames, arch: &ArchConfig, opts: &EncodeOptions) -> Result<Encoded> {
    encode_with(video, arch, opts, &mut |_, _| {})
}

/// Train, prune, fine-tune, quantize, entropy-code. A zero prune ratio
/// skips the mask and fine-tune stages.
pub fn encode_with(
    video: &VideoFrames,
    arch: &ArchConfig,
    opts: &EncodeOptions,
    on_epoch: &mut dyn FnMut(Stage, &EpochRecord),
) -> Result<Encoded> {
    let arch = canonical_arch(arch);
    let dims = VideoDims {
        frames: video.frames(),
        height: video.height(),
        width: video.width(),
    };
    let (trained, train_log) = train_with(video, &arch, &opts.train, &mut |r| on_epoch(Stage::Train, r))?;
    let float_psnr = evaluate_psnr(video, &arch, &trained)?;

    let ratio = opts.compress.prune_ratio;
    let mask = prune_l1_global(&trained, ratio)?;
    let (params, pruned_psnr, finetuned_psnr, finetune_log) = if ratio > 0.0 {
        let mut pruned = trained;
        mask.apply(&mut pruned)?;
        let pruned_psnr = evaluate_psnr(video, &arch, &pruned)?;
        let (tuned, log) = finetune_with(video, &arch, &opts.train, &pruned, &mask, &mut |r| on_epoch(Stage::Finetune, r))?;
        let tuned_psnr = evaluate_psnr(video, &arch, &tuned)?;
        (tuned, Some(pruned_psnr), Some(tuned_psnr), Some(log))
    } else {
        (trained, None, None, None)
    };

    // weights are already masked, so the final stage only quantizes and codes
    let stage = CompressOptions {
        prune_ratio: 0.0,
        ..opts.compress
    };
    let model = compress_pipeline(&params, &arch, dims, &stage)?;
    let bytes = model.serialize()?;
    let (_, dequant) = decompress(&model)?;
    let recon = render(&arch, &dequant, dims.frames)?;
    let quantized_psnr = psnr(&video.to_tensor(), &recon.to_tensor())?;
    let rounded = VideoFrames::from_bytes(dims.frames, dims.height, dims.width, &recon.to_bytes())?;
    let output_psnr = psnr(&video.to_tensor(), &rounded.to_tensor())?;
    let report = EncodeReport {
        float_psnr,
        pruned_psnr,
        finetuned_psnr,
        quantized_psnr,
        output_psnr,
        pruned_weights: mask.pruned(),
        conv_weights: mask.prunable(),
        bytes: bytes.len(),
        bpp: bpp(bytes.len(), dims.frames, dims.height, dims.width)?,
        train_log,
        finetune_log,
    };
    Ok(Encoded {
        bytes,
        model,
        arch,
        params,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub video: VideoFrames,
    pub arch: ArchConfig,
    pub params: ParameterStore,
    /// Wall-clock seconds spent in the forward passes; informational.
    pub seconds: f64,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    decode_model(&CompressedModel::deserialize(bytes)?)
}

pub fn decode_model(model: &CompressedModel) -> Result<Decoded> {
    let (arch, params) = decompress(model)?;
    arch.check_frame(model.dims.height, model.dims.width)?;
    let start = Instant::now();
    let video = render(&arch, &params, model.dims.frames)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Decoded {
        video,
        arch,
        params,
        seconds,
    })
}
