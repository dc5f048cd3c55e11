use crate::error::{Error, Result};
use crate::model::{ArchConfig, ParameterStore};

use super::bitstream::{CompressedModel, TensorHeader, VideoDims};
use super::huffman::{histogram, huffman_build, huffman_encode};
use super::prune::prune_l1_global;
use super::quant::{quantize_per_tensor, QuantTensor, DEFAULT_BITS};

pub const DEFAULT_PRUNE_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressOptions {
    pub prune_ratio: f64,
    pub bits: u32,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self {
            prune_ratio: DEFAULT_PRUNE_RATIO,
            bits: DEFAULT_BITS,
        }
    }
}

/// Quantizes every tensor of `params` in store order.
pub fn quantize_store(params: &ParameterStore, bits: u32) -> Result<Vec<QuantTensor>> {
    params.tensors().iter().map(|t| quantize_per_tensor(t, bits)).collect()
}

/// Store of dequantized weights.
pub fn dequantize_store(arch: &ArchConfig, quant: &[QuantTensor]) -> Result<ParameterStore> {
    ParameterStore::from_tensors(arch, quant.iter().map(QuantTensor::dequantize).collect())
}

/// Prune (when `prune_ratio > 0`), quantize per tensor, then code every
/// symbol with one global canonical Huffman table.
///
/// Already-pruned weights stay zero: they are the smallest magnitudes, so a
/// second pass at the same ratio selects them again.
pub fn compress_pipeline(params: &ParameterStore, arch: &ArchConfig, dims: VideoDims, opts: &CompressOptions) -> Result<CompressedModel> {
    arch.validate()?;
    arch.check_frame(dims.height, dims.width)?;
    if dims.frames == 0 {
        return Err(Error::invalid("video must have at least one frame"));
    }
    let mut params = ParameterStore::from_tensors(arch, params.tensors().to_vec())?;
    if opts.prune_ratio > 0.0 {
        prune_l1_global(&params, opts.prune_ratio)?.apply(&mut params)?;
    } else if opts.prune_ratio < 0.0 {
        return Err(Error::invalid(format!("prune ratio must lie in [0, 1), got {}", opts.prune_ratio)));
    }
    let quant = quantize_store(&params, opts.bits)?;
    let symbols: Vec<u8> = quant.iter().flat_map(|q| q.symbols().iter().copied()).collect();
    let table = huffman_build(&histogram(&symbols))?;
    let (payload, payload_bits) = huffman_encode(&symbols, &table)?;
    Ok(CompressedModel {
        arch: arch.clone(),
        dims,
        tensors: quant
            .iter()
            .map(|q| TensorHeader {
                shape: q.shape().to_vec(),
                scale: q.scale(),
                min_val: q.min_val(),
            })
            .collect(),
        table,
        payload_bits,
        payload,
    })
}

/// Architecture and dequantized parameters.
pub fn decompress(model: &CompressedModel) -> Result<(ArchConfig, ParameterStore)> {
    let quant = model.quant_tensors()?;
    let store = dequantize_store(&model.arch, &quant).map_err(|e| Error::Bitstream(e.to_string()))?;
    Ok((model.arch.clone(), store))
}
