//! NeRV++ implicit neural video codec.
//!
//! A video is encoded by overfitting a coordinate network `t -> frame` to it
//! and then pruning, quantizing and Huffman-coding the network weights into a
//! `.nrv` bitstream. Decoding is a plain forward pass per frame index.
//!
//! Module map:
//! - [`tensor`]: dense tensors with a reverse-mode gradient tape
//! - [`model`]: architecture config, parameters, forward pass, complexity
//! - [`training`]: loss, Adam, cosine schedule, overfitting and fine-tuning
//! - [`compression`]: pruning, quantization, canonical Huffman, bitstream
//! - [`metrics`]: PSNR, SSIM, MS-SSIM, bpp, BD-rate
//! - [`video`] and [`config`]: frame I/O, config files and CSV exchange

pub mod codec;
pub mod compression;
pub mod config;
pub mod error;
pub mod fsio;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod training;
pub mod video;

pub use error::{Error, Result};
