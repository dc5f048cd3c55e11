//! TOML codec configuration.
//!
//! ```toml
//! [video]            # required
//! height = 64
//! width = 64
//! frames = 8         # only needed for raw input
//!
//! [arch]
//! size = "xsmall"    # preset; the fields below override it
//! variant_star = false
//! # [[arch.blocks]]
//! # stride = 2
//! # out_channels = 16
//!
//! [train]
//! epochs = 300
//! lr = 5e-4
//!
//! [compress]
//! prune_ratio = 0.2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compression::{CompressOptions, DEFAULT_BITS, DEFAULT_PRUNE_RATIO};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, BlockSpec, SizePreset};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub video: VideoSection,
    #[serde(default)]
    pub arch: ArchSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub compress: CompressSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoSection {
    pub height: usize,
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pe_base: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pe_levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem_hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_kernel: Option<usize>,
    pub variant_star: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<BlockSection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSection {
    pub stride: usize,
    pub out_channels: usize,
    #[serde(default = "default_dw_kernel")]
    pub dw_kernel: usize,
    #[serde(default = "default_expansion")]
    pub expansion: usize,
}

fn default_dw_kernel() -> usize {
    7
}

fn default_expansion() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub loss_w_mae: f64,
    pub loss_w_ssim: f64,
    pub finetune_epochs: usize,
    pub finetune_lr_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            lr: d.lr0,
            beta1: d.beta1,
            beta2: d.beta2,
            adam_eps: d.adam_eps,
            seed: None,
            loss_w_mae: d.loss_w_mae,
            loss_w_ssim: d.loss_w_ssim,
            finetune_epochs: d.finetune_epochs,
            finetune_lr_scale: d.finetune_lr_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressSection {
    pub prune_ratio: f64,
    pub bits: u32,
}

impl Default for CompressSection {
    fn default() -> Self {
        Self {
            prune_ratio: DEFAULT_PRUNE_RATIO,
            bits: DEFAULT_BITS,
        }
    }
}

impl CodecConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fully explicit config describing `arch` for `height x width` frames.
    pub fn from_arch(arch: &ArchConfig, height: usize, width: usize) -> Self {
        Self {
            video: VideoSection {
                height,
                width,
                frames: None,
            },
            arch: ArchSection {
                size: None,
                pe_base: Some(arch.pe_base),
                pe_levels: Some(arch.pe_levels),
                stem_hidden: Some(arch.stem_hidden),
                base_channels: Some(arch.base_channels),
                head_kernel: Some(arch.head_kernel),
                variant_star: arch.variant_star,
                blocks: Some(
                    arch.blocks
                        .iter()
                        .map(|b| BlockSection {
                            stride: b.stride,
                            out_channels: b.out_channels,
                            dw_kernel: b.dw_kernel,
                            expansion: b.expansion,
                        })
                        .collect(),
                ),
            },
            train: TrainSection::default(),
            compress: CompressSection::default(),
        }
    }

    pub fn size(&self) -> Result<SizePreset> {
        self.arch.size.as_deref().map_or(Ok(SizePreset::XSmall), str::parse)
    }

    /// Resolves the preset plus overrides into a validated architecture.
    pub fn arch(&self) -> Result<ArchConfig> {
        let (h, w) = (self.video.height, self.video.width);
        if h == 0 || w == 0 {
            return Err(Error::Config(format!("video geometry {h}x{w} must be positive")));
        }
        let a = &self.arch;
        let mut arch = match &a.blocks {
            None => ArchConfig::preset(self.size()?, h, w)?,
            Some(blocks) => {
                let blocks: Vec<BlockSpec> = blocks
                    .iter()
                    .map(|b| BlockSpec {
                        stride: b.stride,
                        out_channels: b.out_channels,
                        dw_kernel: b.dw_kernel,
                        expansion: b.expansion,
                    })
                    .collect();
                let s: usize = blocks.iter().map(|b| b.stride.max(1)).product();
                if h % s != 0 || w % s != 0 {
                    return Err(Error::Config(format!("frame {h}x{w} is not divisible by the total stride {s}")));
                }
                // channel defaults come from the preset table, geometry from the blocks
                let preset = ArchConfig::preset(self.size()?, 16, 16)?;
                ArchConfig {
                    base_grid: (h / s, w / s),
                    blocks,
                    ..preset
                }
            }
        };
        if let Some(v) = a.pe_base {
            arch.pe_base = v;
        }
        if let Some(v) = a.pe_levels {
            arch.pe_levels = v;
        }
        if let Some(v) = a.stem_hidden {
            arch.stem_hidden = v;
        }
        if let Some(v) = a.base_channels {
            arch.base_channels = v;
        }
        if let Some(v) = a.head_kernel {
            arch.head_kernel = v;
        }
        arch.variant_star = a.variant_star;
        arch.validate()?;
        arch.check_frame(h, w)?;
        Ok(arch)
    }

    /// Training settings; `seed` is used when the file does not set one.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            epochs: t.epochs,
            lr0: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            seed: t.seed.unwrap_or(seed),
            loss_w_mae: t.loss_w_mae,
            loss_w_ssim: t.loss_w_ssim,
            finetune_epochs: t.finetune_epochs,
            finetune_lr_scale: t.finetune_lr_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn compress_options(&self) -> Result<CompressOptions> {
        let c = &self.compress;
        if !(0.0..1.0).contains(&c.prune_ratio) {
            return Err(Error::Config(format!("prune_ratio must lie in [0, 1), got {}", c.prune_ratio)));
        }
        if !(2..=8).contains(&c.bits) {
            return Err(Error::Config(format!("bits must lie in 2..=8, got {}", c.bits)));
        }
        Ok(CompressOptions {
            prune_ratio: c.prune_ratio,
            bits: c.bits,
        })
    }
}
