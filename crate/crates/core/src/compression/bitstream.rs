//! `.nrv` container. Little-endian integers, f32 floats.
//!
//! ```text
//! "NRVP" | version u8 | flags u8 | pe_base f32 | pe_levels u16 | stem_hidden u16
//! | h0 u16 | w0 u16 | C0 u16 | n_blocks u8 | {stride u8, out u16, k u8, e u8}*
//! | head_kernel u8 | T u32 | H u32 | W u32
//! | n_tensors u16 | {ndims u8, dims u32*, scale f32, min f32}*
//! | (count u8, length u8)* 0 0 | payload_bits u64 | payload
//! ```

use crate::error::{Error, Result};
use crate::model::{ArchConfig, BlockSpec};

use super::huffman::{huffman_decode, HuffmanTable, ALPHABET};
use super::quant::QuantTensor;

pub const MAGIC: &[u8; 4] = b"NRVP";
pub const VERSION: u8 = 1;
pub const FILE_EXTENSION: &str = "nrv";

const FLAG_STAR: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoDims {
    pub fn pixels(&self) -> usize {
        self.frames * self.height * self.width
    }
}

/// Shape and affine parameters of one quantized tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorHeader {
    pub shape: Vec<usize>,
    pub scale: f32,
    pub min_val: f32,
}

impl TensorHeader {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub arch: ArchConfig,
    pub dims: VideoDims,
    pub tensors: Vec<TensorHeader>,
    pub table: HuffmanTable,
    pub payload_bits: u64,
    pub payload: Vec<u8>,
}

impl CompressedModel {
    pub fn symbol_count(&self) -> usize {
        self.tensors.iter().map(TensorHeader::numel).sum()
    }

    /// Entropy-decodes the payload back into per-tensor quantized symbols.
    pub fn quant_tensors(&self) -> Result<Vec<QuantTensor>> {
        let symbols = huffman_decode(&self.payload, self.payload_bits, &self.table, self.symbol_count())?;
        let mut rest = &symbols[..];
        self.tensors
            .iter()
            .map(|h| {
                let (q, tail) = rest.split_at(h.numel());
                rest = tail;
                QuantTensor::from_parts(h.shape.clone(), q.to_vec(), h.scale, h.min_val)
                    .map_err(|e| Error::Bitstream(e.to_string()))
            })
            .collect()
    }

    pub fn serialize(&self) -> Result<Vec<u8>> {
        let a = &self.arch;
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.u8(if a.variant_star { FLAG_STAR } else { 0 });
        let pe = a.pe_base as f32;
        if pe as f64 != a.pe_base {
            return Err(Error::Config(format!("pe_base {} is not representable as f32", a.pe_base)));
        }
        w.f32(pe);
        w.u16(a.pe_levels, "pe_levels")?;
        w.u16(a.stem_hidden, "stem_hidden")?;
        w.u16(a.base_grid.0, "h0")?;
        w.u16(a.base_grid.1, "w0")?;
        w.u16(a.base_channels, "C0")?;
        w.u8_checked(a.blocks.len(), "n_blocks")?;
        for b in &a.blocks {
            w.u8_checked(b.stride, "stride")?;
            w.u16(b.out_channels, "out_channels")?;
            w.u8_checked(b.dw_kernel, "dw_kernel")?;
            w.u8_checked(b.expansion, "expansion")?;
        }
        w.u8_checked(a.head_kernel, "head_kernel")?;
        w.u32(self.dims.frames, "T")?;
        w.u32(self.dims.height, "H")?;
        w.u32(self.dims.width, "W")?;
        w.u16(self.tensors.len(), "n_tensors")?;
        for t in &self.tensors {
            w.u8_checked(t.shape.len(), "ndims")?;
            for &d in &t.shape {
                w.u32(d, "dim")?;
            }
            w.f32(t.scale);
            w.f32(t.min_val);
        }
        for (count, len) in rle(self.table.lengths()) {
            w.u8(count);
            w.u8(len);
        }
        w.u8(0);
        w.u8(0);
        if self.payload.len() as u64 != self.payload_bits.div_ceil(8) {
            return Err(Error::Bitstream(format!(
                "payload of {} bytes does not hold {} bits",
                self.payload.len(),
                self.payload_bits
            )));
        }
        w.bytes(&self.payload_bits.to_le_bytes());
        w.bytes(&self.payload);
        Ok(w.out)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Bitstream("bad magic, not an .nrv stream".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Bitstream(format!("unsupported version {version}")));
        }
        let flags = r.u8()?;
        if flags & !FLAG_STAR != 0 {
            return Err(Error::Bitstream(format!("unknown flags {flags:#04x}")));
        }
        let pe_base = r.f32()? as f64;
        let pe_levels = r.u16()?;
        let stem_hidden = r.u16()?;
        let h0 = r.u16()?;
        let w0 = r.u16()?;
        let c0 = r.u16()?;
        let n_blocks = r.u8()? as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            blocks.push(BlockSpec {
                stride: r.u8()? as usize,
                out_channels: r.u16()?,
                dw_kernel: r.u8()? as usize,
                expansion: r.u8()? as usize,
            });
        }
        let head_kernel = r.u8()? as usize;
        let arch = ArchConfig {
            pe_base,
            pe_levels,
            stem_hidden,
            base_grid: (h0, w0),
            base_channels: c0,
            blocks,
            head_kernel,
            variant_star: flags & FLAG_STAR != 0,
        };
        arch.validate().map_err(|e| Error::Bitstream(e.to_string()))?;
        let dims = VideoDims {
            frames: r.u32()?,
            height: r.u32()?,
            width: r.u32()?,
        };
        let n_tensors = r.u16()?;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let ndims = r.u8()? as usize;
            let shape = (0..ndims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            tensors.push(TensorHeader {
                shape,
                scale: r.f32()?,
                min_val: r.f32()?,
            });
        }
        let mut lengths = [0u8; ALPHABET];
        let mut filled = 0usize;
        loop {
            let (count, len) = (r.u8()? as usize, r.u8()?);
            if count == 0 {
                if len != 0 {
                    return Err(Error::Bitstream("zero-count run in code lengths".into()));
                }
                break;
            }
            if filled + count > ALPHABET {
                return Err(Error::Bitstream("code length table longer than 256 entries".into()));
            }
            lengths[filled..filled + count].fill(len);
            filled += count;
        }
        if filled != ALPHABET {
            return Err(Error::Bitstream(format!("code length table has {filled} entries, expected 256")));
        }
        let table = HuffmanTable::from_lengths(lengths)?;
        let payload_bits = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let n_bytes = usize::try_from(payload_bits.div_ceil(8)).map_err(|_| Error::Bitstream("payload too large".into()))?;
        let payload = r.take(n_bytes)?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Bitstream(format!("{} trailing bytes after payload", bytes.len() - r.pos)));
        }
        if payload_bits % 8 != 0 && payload.last().is_some_and(|&b| b & (0xFF >> (payload_bits % 8)) != 0) {
            return Err(Error::Bitstream("nonzero padding bits".into()));
        }
        Ok(Self {
            arch,
            dims,
            tensors,
            table,
            payload_bits,
            payload,
        })
    }
}

/// Runs of equal lengths, each at most 255 long.
fn rle(lengths: &[u8; ALPHABET]) -> Vec<(u8, u8)> {
    let mut runs: Vec<(u8, u8)> = Vec::new();
    for &l in lengths {
        match runs.last_mut() {
            Some((c, len)) if *len == l && *c < u8::MAX => *c += 1,
            _ => runs.push((1, l)),
        }
    }
    runs
}

#[derive(Default)]
struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.out.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    fn u8_checked(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u8::try_from(v).map_err(|_| Error::Bitstream(format!("{what} = {v} does not fit in u8")))?;
        self.u8(v);
        Ok(())
    }

    fn u16(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u16::try_from(v).map_err(|_| Error::Bitstream(format!("{what} = {v} does not fit in u16")))?;
        self.bytes(&v.to_le_bytes());
        Ok(())
    }

    fn u32(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Bitstream(format!("{what} = {v} does not fit in u32")))?;
        self.bytes(&v.to_le_bytes());
        Ok(())
    }

    fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Bitstream(format!("stream truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<usize> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
