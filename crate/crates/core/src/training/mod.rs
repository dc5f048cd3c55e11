//! Overfitting a model to a clip.
//!
//! One step is one frame: forward, loss, backward, Adam. Each epoch visits
//! every frame once in a seeded shuffled order, so a run is reproducible
//! bit-for-bit from `(seed, arch, config, video)`.

mod loss;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use loss::{loss, loss_tape, ssim_tape, DEFAULT_W_MAE, DEFAULT_W_SSIM};
pub use optim::{adam_step, cosine_lr, AdamConfig, OptimizerState};

use crate::compression::PruneMask;
use crate::error::{Error, Result};
use crate::metrics::{self, psnr_from_mse};
use crate::model::{init_params, model_forward, model_forward_tape, time_coord, ArchConfig, ParameterStore};
use crate::tensor::{Tape, Tensor};
use crate::video::VideoFrames;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss_w_mae: f64,
    pub loss_w_ssim: f64,
    pub finetune_epochs: usize,
    pub finetune_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr0: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            loss_w_mae: DEFAULT_W_MAE,
            loss_w_ssim: DEFAULT_W_SSIM,
            finetune_epochs: 30,
            finetune_lr_scale: 0.1,
        }
    }
}

impl TrainConfig {
    /// Default config with the fine-tune length tied to 10% of `epochs`.
    pub fn with_epochs(epochs: usize) -> Self {
        Self {
            epochs,
            finetune_epochs: (epochs / 10).max(1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if (self.loss_w_mae + self.loss_w_ssim - 1.0).abs() > 1e-12 || self.loss_w_mae < 0.0 || self.loss_w_ssim < 0.0 {
            return bad(format!(
                "loss weights must be non-negative and sum to 1, got {} + {}",
                self.loss_w_mae, self.loss_w_ssim
            ));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if !(self.finetune_lr_scale > 0.0) {
            return bad("finetune_lr_scale must be positive".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub loss: f64,
    /// Mean per-frame PSNR of the predictions seen during the epoch.
    pub psnr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,lr,loss,psnr`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss,psnr\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.lr, r.loss, r.psnr));
        }
        out
    }
}

enum Schedule {
    Cosine { lr0: f64, total: usize },
    Constant(f64),
}

impl Schedule {
    fn lr(&self, step: usize) -> Result<f64> {
        match *self {
            Schedule::Cosine { lr0, total } => cosine_lr(step, total, lr0),
            Schedule::Constant(lr) => Ok(lr),
        }
    }
}

fn check_geometry(video: &VideoFrames, arch: &ArchConfig) -> Result<()> {
    arch.validate()?;
    arch.check_frame(video.height(), video.width())
}

/// Runs `epochs` passes over the clip, updating `params` in place.
fn fit(
    video: &VideoFrames,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    params: &mut ParameterStore,
    epochs: usize,
    schedule: Schedule,
    mask: Option<&PruneMask>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainLog> {
    let frames = video.frames();
    let targets: Vec<Tensor> = (0..frames).map(|i| video.frame(i)).collect();
    let adam = cfg.adam();
    let mut state = OptimizerState::new(params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..frames).collect();
    let mut log = TrainLog::default();
    let mut step = 0;

    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut psnr_sum, mut lr) = (0.0, 0.0, 0.0);
        for &i in &order {
            lr = schedule.lr(step)?;
            let mut tape = Tape::new();
            let (vars, model) = crate::model::bind(&mut tape, arch, params, true)?;
            let pred = model_forward_tape(&mut tape, time_coord(i, frames), arch, &model).map_err(|e| diverged(e, epoch, step))?;
            let target = tape.constant(targets[i].clone());
            let l = loss_tape(&mut tape, pred, target, cfg.loss_w_mae, cfg.loss_w_ssim).map_err(|e| diverged(e, epoch, step))?;
            let loss_value = tape.value(l).data()[0];
            psnr_sum += psnr_from_mse(metrics::mse(tape.value(pred), &targets[i])?).min(100.0);
            loss_sum += loss_value;

            let mut grads = tape.backward(l)?;
            let grads: Vec<Tensor> = vars
                .iter()
                .zip(params.tensors())
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            adam_step(params.tensors_mut(), &grads, &mut state, lr, &adam)?;
            if let Some(mask) = mask {
                mask.apply(params)?;
            }
            if params.tensors().iter().any(|t| !t.is_finite()) {
                return Err(Error::Diverged(format!("non-finite parameters after epoch {epoch}, step {step}")));
            }
            step += 1;
        }
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / frames as f64,
            psnr: psnr_sum / frames as f64,
        };
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(log)
}

fn diverged(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(op) => Error::Diverged(format!("{op} produced NaN/Inf at epoch {epoch}, step {step}")),
        other => other,
    }
}

/// Overfits a freshly initialized model to `video`.
pub fn train(video: &VideoFrames, arch: &ArchConfig, cfg: &TrainConfig) -> Result<(ParameterStore, TrainLog)> {
    train_with(video, arch, cfg, &mut |_| {})
}

pub fn train_with(
    video: &VideoFrames,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(ParameterStore, TrainLog)> {
    cfg.validate()?;
    check_geometry(video, arch)?;
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    let mut params = init_params(arch, cfg.seed)?;
    let schedule = Schedule::Cosine {
        lr0: cfg.lr0,
        total: cfg.epochs * video.frames(),
    };
    let log = fit(video, arch, cfg, &mut params, cfg.epochs, schedule, None, on_epoch)?;
    Ok((params, log))
}

/// Continues training at a constant `lr0 · finetune_lr_scale` for
/// `finetune_epochs`, re-zeroing masked weights after every step.
pub fn finetune(
    video: &VideoFrames,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    params: &ParameterStore,
    mask: &PruneMask,
) -> Result<ParameterStore> {
    finetune_with(video, arch, cfg, params, mask, &mut |_| {}).map(|(p, _)| p)
}

pub fn finetune_with(
    video: &VideoFrames,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    params: &ParameterStore,
    mask: &PruneMask,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(ParameterStore, TrainLog)> {
    cfg.validate()?;
    check_geometry(video, arch)?;
    let mut params = params.clone();
    mask.apply(&mut params)?;
    let schedule = Schedule::Constant(cfg.lr0 * cfg.finetune_lr_scale);
    let log = fit(video, arch, cfg, &mut params, cfg.finetune_epochs, schedule, Some(mask), on_epoch)?;
    Ok((params, log))
}

/// Decodes every frame of a `frames`-long clip.
pub fn render(arch: &ArchConfig, params: &ParameterStore, frames: usize) -> Result<VideoFrames> {
    let out: Vec<Tensor> = (0..frames)
        .map(|i| model_forward(time_coord(i, frames), arch, params))
        .collect::<Result<_>>()?;
    VideoFrames::from_frames(&out)
}

/// PSNR over the whole clip of the model's reconstruction.
pub fn evaluate_psnr(video: &VideoFrames, arch: &ArchConfig, params: &ParameterStore) -> Result<f64> {
    let recon = render(arch, params, video.frames())?;
    metrics::psnr(&video.to_tensor(), &recon.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BlockSpec;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            pe_base: 1.25,
            pe_levels: 4,
            stem_hidden: 8,
            base_grid: (4, 4),
            base_channels: 4,
            blocks: vec![BlockSpec {
                stride: 4,
                out_channels: 4,
                dw_kernel: 3,
                expansion: 2,
            }],
            head_kernel: 3,
            variant_star: false,
        }
    }

    fn constant_video() -> VideoFrames {
        VideoFrames::new(1, 16, 16, vec![0.5; 3 * 256]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            loss_w_mae: 0.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_frame_is_fit() {
        let cfg = TrainConfig {
            epochs: 250,
            lr0: 5e-3,
            ..TrainConfig::default()
        };
        let (params, log) = train(&constant_video(), &tiny_arch(), &cfg).unwrap();
        assert_eq!(log.records.len(), 250);
        let psnr = evaluate_psnr(&constant_video(), &tiny_arch(), &params).unwrap();
        assert!(psnr > 40.0, "psnr {psnr}");
        assert!(log.records.last().unwrap().loss <= log.records[0].loss);
    }

    #[test]
    fn training_is_deterministic() {
        let video = crate::video::synthetic_clip(2, 16, 16);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&video, &tiny_arch(), &cfg).unwrap();
        let b = train(&video, &tiny_arch(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let video = VideoFrames::new(1, 8, 8, vec![0.5; 3 * 64]).unwrap();
        assert!(matches!(train(&video, &tiny_arch(), &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn log_csv_header() {
        let log = TrainLog {
            records: vec![EpochRecord {
                epoch: 1,
                lr: 0.5,
                loss: 0.25,
                psnr: 20.0,
            }],
        };
        assert_eq!(log.to_csv(), "epoch,lr,loss,psnr\n1,0.5,0.25,20\n");
    }
}
