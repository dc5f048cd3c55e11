//! Weights to bitstream: global L1 pruning, 8-bit per-tensor quantization,
//! one canonical Huffman table, and the `.nrv` byte layout.

mod bitstream;
pub mod huffman;
mod pipeline;
mod prune;
mod quant;

pub use bitstream::{CompressedModel, TensorHeader, VideoDims, FILE_EXTENSION, MAGIC, VERSION};
pub use huffman::{entropy_bits, histogram, huffman_build, huffman_decode, huffman_encode, HuffmanTable, MAX_CODE_LEN};
pub use pipeline::{compress_pipeline, decompress, dequantize_store, quantize_store, CompressOptions, DEFAULT_PRUNE_RATIO};
pub use prune::{prune_l1_global, PruneMask};
pub use quant::{dequant_value, quantize_per_tensor, QuantTensor, DEFAULT_BITS};
