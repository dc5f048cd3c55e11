//! The NeRV++ network.
//!
//! `t -> positional encoding -> MLP stem -> [NeRV++ block]* -> conv head`.
//! Each block is `SCRB -> UB -> SCRB` with a bilinear skip path projected by a
//! 1x1 conv. SCRB is depthwise kxk, pointwise expand, GELU, pointwise
//! project, plus residual. UB is 3x3 conv, pixel shuffle, GELU.

mod complexity;
mod network;
mod params;

use std::fmt;
use std::str::FromStr;

pub use complexity::{count_macs_per_pixel, count_params, variant_star_param_delta};
pub use network::{
    arrange_vars, bind, head_forward, model_forward, model_forward_tape, nervpp_block_forward, positional_encode, scrb_forward,
    stem_forward, time_coord, ub_forward, BlockParams, ConvParams, LinearParams, ScrbParams,
};
pub use params::{init_params, ModelParams, ParamKind, ParamSpec, ParameterStore};

use crate::error::{Error, Result};

/// One NeRV++ block: upsample by `stride` and map to `out_channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub stride: usize,
    pub out_channels: usize,
    pub dw_kernel: usize,
    pub expansion: usize,
}

impl BlockSpec {
    pub fn new(stride: usize, out_channels: usize) -> Self {
        Self {
            stride,
            out_channels,
            dw_kernel: 7,
            expansion: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub pe_base: f64,
    pub pe_levels: usize,
    pub stem_hidden: usize,
    pub base_grid: (usize, usize),
    pub base_channels: usize,
    pub blocks: Vec<BlockSpec>,
    pub head_kernel: usize,
    /// NeRV*++: doubles the expansion ratio of every post-upsample SCRB.
    pub variant_star: bool,
}

pub const DEFAULT_PE_BASE: f64 = 1.25;
pub const DEFAULT_PE_LEVELS: usize = 40;
pub const DEFAULT_STEM_HIDDEN: usize = 128;
pub const DEFAULT_HEAD_KERNEL: usize = 3;

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.pe_base > 1.0) || !self.pe_base.is_finite() {
            return bad(format!("pe_base must be > 1, got {}", self.pe_base));
        }
        if self.pe_levels == 0 || self.stem_hidden == 0 || self.base_channels == 0 {
            return bad("pe_levels, stem_hidden and base_channels must be positive".into());
        }
        if self.base_grid.0 == 0 || self.base_grid.1 == 0 {
            return bad(format!("base grid {:?} must be positive", self.base_grid));
        }
        if self.head_kernel % 2 == 0 {
            return bad(format!("head_kernel {} must be odd", self.head_kernel));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.stride == 0 || b.out_channels == 0 || b.expansion == 0 {
                return bad(format!("block {i}: stride, out_channels and expansion must be positive"));
            }
            if b.dw_kernel % 2 == 0 {
                return bad(format!("block {i}: dw_kernel {} must be odd", b.dw_kernel));
            }
        }
        Ok(())
    }

    /// Output frame `(H, W)`: base grid scaled by the product of strides.
    pub fn frame_size(&self) -> (usize, usize) {
        let s: usize = self.blocks.iter().map(|b| b.stride).product();
        (self.base_grid.0 * s, self.base_grid.1 * s)
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(self.base_channels, |b| b.out_channels)
    }

    pub fn pe_dim(&self) -> usize {
        2 * self.pe_levels
    }

    /// Expansion ratio used by the post-upsample SCRB of `block`.
    pub fn post_expansion(&self, block: &BlockSpec) -> usize {
        if self.variant_star {
            2 * block.expansion
        } else {
            block.expansion
        }
    }

    pub fn check_frame(&self, height: usize, width: usize) -> Result<()> {
        let (h, w) = self.frame_size();
        if (h, w) != (height, width) {
            return Err(Error::Config(format!(
                "architecture produces {h}x{w} frames but the video is {height}x{width}"
            )));
        }
        Ok(())
    }

    /// Default configuration for one of the four size presets. Frames must
    /// be divisible by 16 (four stride-2 blocks).
    pub fn preset(size: SizePreset, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0 {
            return Err(Error::Config(format!(
                "preset sizes need frame dimensions divisible by 16, got {height}x{width}"
            )));
        }
        let (c0, chans) = size.channels();
        Ok(Self {
            pe_base: DEFAULT_PE_BASE,
            pe_levels: DEFAULT_PE_LEVELS,
            stem_hidden: DEFAULT_STEM_HIDDEN,
            base_grid: (height / 16, width / 16),
            base_channels: c0,
            blocks: chans.iter().map(|&c| BlockSpec::new(2, c)).collect(),
            head_kernel: DEFAULT_HEAD_KERNEL,
            variant_star: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizePreset {
    XSmall,
    Small,
    Medium,
    Large,
}

impl SizePreset {
    pub const ALL: [SizePreset; 4] = [SizePreset::XSmall, SizePreset::Small, SizePreset::Medium, SizePreset::Large];

    /// `(C0, per-block output channels)`.
    fn channels(self) -> (usize, [usize; 4]) {
        match self {
            SizePreset::XSmall => (24, [16, 12, 8, 6]),
            SizePreset::Small => (48, [32, 24, 16, 8]),
            SizePreset::Medium => (72, [48, 32, 24, 12]),
            SizePreset::Large => (96, [64, 48, 32, 16]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizePreset::XSmall => "xsmall",
            SizePreset::Small => "small",
            SizePreset::Medium => "medium",
            SizePreset::Large => "large",
        }
    }
}

impl fmt::Display for SizePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SizePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizePreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown size '{s}' (expected xsmall|small|medium|large)")))
    }
}
