//! Canonical, length-limited Huffman coding over byte symbols.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub const MAX_CODE_LEN: u8 = 16;
pub const ALPHABET: usize = 256;

pub type Histogram = [u64; ALPHABET];

pub fn histogram(symbols: &[u8]) -> Histogram {
    let mut h = [0u64; ALPHABET];
    for &s in symbols {
        h[s as usize] += 1;
    }
    h
}

/// Shannon entropy in bits per symbol.
pub fn entropy_bits(freqs: &Histogram) -> f64 {
    let n: u64 = freqs.iter().sum();
    if n == 0 {
        return 0.0;
    }
    freqs
        .iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Code lengths per symbol (0 = absent) plus the derived canonical codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    lengths: [u8; ALPHABET],
    codes: [u32; ALPHABET],
}

impl HuffmanTable {
    /// Rebuilds the canonical code from lengths alone.
    pub fn from_lengths(lengths: [u8; ALPHABET]) -> Result<Self> {
        if lengths.iter().all(|&l| l == 0) {
            return Err(Error::Bitstream("huffman table has no symbols".into()));
        }
        if let Some(&l) = lengths.iter().find(|&&l| l > MAX_CODE_LEN) {
            return Err(Error::Bitstream(format!("code length {l} exceeds {MAX_CODE_LEN}")));
        }
        // Kraft sum in units of 2^-MAX_CODE_LEN
        let kraft: u64 = lengths.iter().filter(|&&l| l > 0).map(|&l| 1u64 << (MAX_CODE_LEN - l)).sum();
        if kraft > 1u64 << MAX_CODE_LEN {
            return Err(Error::Bitstream("huffman lengths violate the Kraft inequality".into()));
        }
        let mut codes = [0u32; ALPHABET];
        let mut code = 0u32;
        let mut prev_len = 0u8;
        for (sym, len) in canonical_order(&lengths) {
            code <<= len - prev_len;
            codes[sym as usize] = code;
            code += 1;
            prev_len = len;
        }
        Ok(Self { lengths, codes })
    }

    pub fn lengths(&self) -> &[u8; ALPHABET] {
        &self.lengths
    }

    /// `(codeword, length)` of `symbol`, if present.
    pub fn code(&self, symbol: u8) -> Option<(u32, u8)> {
        let l = self.lengths[symbol as usize];
        (l > 0).then(|| (self.codes[symbol as usize], l))
    }

    /// `(symbol, length)` sorted by length, then symbol.
    pub fn entries(&self) -> Vec<(u8, u8)> {
        canonical_order(&self.lengths)
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().filter(|&&l| l > 0).map(|&l| 2f64.powi(-(l as i32))).sum()
    }

    /// Average code length in bits per symbol under `freqs`.
    pub fn mean_code_length(&self, freqs: &Histogram) -> f64 {
        let n: u64 = freqs.iter().sum();
        let bits: u64 = freqs.iter().zip(&self.lengths).map(|(&f, &l)| f * l as u64).sum();
        bits as f64 / n as f64
    }
}

fn canonical_order(lengths: &[u8; ALPHABET]) -> Vec<(u8, u8)> {
    let mut v: Vec<(u8, u8)> = (0..ALPHABET).filter(|&s| lengths[s] > 0).map(|s| (s as u8, lengths[s])).collect();
    v.sort_by_key(|&(s, l)| (l, s));
    v
}

/// Optimal code lengths for `freqs`, limited to `MAX_CODE_LEN` bits.
pub fn huffman_build(freqs: &Histogram) -> Result<HuffmanTable> {
    let present: Vec<usize> = (0..ALPHABET).filter(|&s| freqs[s] > 0).collect();
    let mut lengths = [0u8; ALPHABET];
    match present.len() {
        0 => return Err(Error::invalid("huffman_build needs at least one nonzero frequency")),
        1 => lengths[present[0]] = 1,
        _ => {
            let depths = tree_depths(freqs, &present);
            if depths.iter().any(|&d| d > MAX_CODE_LEN as usize) {
                let limited = package_merge(freqs, &present, MAX_CODE_LEN as usize);
                for (&s, l) in present.iter().zip(limited) {
                    lengths[s] = l as u8;
                }
            } else {
                for (&s, d) in present.iter().zip(depths) {
                    lengths[s] = d as u8;
                }
            }
        }
    }
    HuffmanTable::from_lengths(lengths)
}

/// Leaf depths of a plain Huffman tree; ties resolved by creation order.
fn tree_depths(freqs: &Histogram, present: &[usize]) -> Vec<usize> {
    let n = present.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = present.iter().enumerate().map(|(i, &s)| Reverse((freqs[s], i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    (0..n)
        .map(|mut i| {
            let mut d = 0;
            while parent[i] != usize::MAX {
                i = parent[i];
                d += 1;
            }
            d
        })
        .collect()
}

/// Package-merge: optimal lengths subject to `len <= limit`.
fn package_merge(freqs: &Histogram, present: &[usize], limit: usize) -> Vec<usize> {
    let n = present.len();
    let mut leaves: Vec<(u64, Vec<u32>)> = present
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut c = vec![0u32; n];
            c[i] = 1;
            (freqs[s], c)
        })
        .collect();
    leaves.sort_by_key(|l| l.0);

    let mut list = leaves.clone();
    for _ in 1..limit {
        let packages: Vec<(u64, Vec<u32>)> = list
            .chunks_exact(2)
            .map(|p| (p[0].0 + p[1].0, p[0].1.iter().zip(&p[1].1).map(|(a, b)| a + b).collect()))
            .collect();
        let mut merged = Vec::with_capacity(leaves.len() + packages.len());
        let (mut i, mut j) = (0, 0);
        while i < leaves.len() || j < packages.len() {
            if j >= packages.len() || (i < leaves.len() && leaves[i].0 <= packages[j].0) {
                merged.push(leaves[i].clone());
                i += 1;
            } else {
                merged.push(packages[j].clone());
                j += 1;
            }
        }
        list = merged;
    }
    let mut lengths = vec![0usize; n];
    for item in &list[..2 * n - 2] {
        for (l, &c) in lengths.iter_mut().zip(&item.1) {
            *l += c as usize;
        }
    }
    lengths
}

/// MSB-first bit packer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, code: u32, len: u8) {
        for k in (0..len).rev() {
            let bit = (code >> k) & 1;
            if self.bits % 8 == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bits % 8);
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    /// Packed bytes, zero-padded to a byte boundary.
    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bits)
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bit_len: u64) -> Result<Self> {
        if bit_len > bytes.len() as u64 * 8 {
            return Err(Error::Bitstream(format!("{bit_len} bits declared but only {} bytes", bytes.len())));
        }
        Ok(Self { bytes, bit_len, pos: 0 })
    }

    pub fn read_bit(&mut self) -> Option<u32> {
        if self.pos >= self.bit_len {
            return None;
        }
        let b = self.bytes[(self.pos / 8) as usize] >> (7 - self.pos % 8) & 1;
        self.pos += 1;
        Some(b as u32)
    }

    pub fn position(&self) -> u64 {
        self.pos
    }
}

pub fn huffman_encode(symbols: &[u8], table: &HuffmanTable) -> Result<(Vec<u8>, u64)> {
    let mut w = BitWriter::new();
    for &s in symbols {
        let (code, len) = table
            .code(s)
            .ok_or_else(|| Error::invalid(format!("symbol {s} has no code in the table")))?;
        w.write(code, len);
    }
    Ok(w.finish())
}

/// Decodes exactly `n` symbols from the first `bit_len` bits of `bytes`.
pub fn huffman_decode(bytes: &[u8], bit_len: u64, table: &HuffmanTable, n: usize) -> Result<Vec<u8>> {
    let entries = table.entries();
    let max_len = MAX_CODE_LEN as usize;
    let mut count = vec![0u32; max_len + 1];
    for &(_, l) in &entries {
        count[l as usize] += 1;
    }
    // first canonical code and its index into `entries`, per length
    let mut first_code = vec![0u32; max_len + 1];
    let mut first_index = vec![0usize; max_len + 1];
    let (mut code, mut index) = (0u32, 0usize);
    for l in 1..=max_len {
        first_code[l] = code;
        first_index[l] = index;
        code = (code + count[l]) << 1;
        index += count[l] as usize;
    }

    let mut reader = BitReader::new(bytes, bit_len)?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (mut code, mut len) = (0u32, 0usize);
        loop {
            let bit = reader
                .read_bit()
                .ok_or_else(|| Error::Bitstream(format!("payload truncated after {} of {n} symbols", out.len())))?;
            code = code << 1 | bit;
            len += 1;
            if len > max_len {
                return Err(Error::Bitstream("invalid huffman codeword".into()));
            }
            let offset = code.wrapping_sub(first_code[len]);
            if code >= first_code[len] && offset < count[len] {
                out.push(entries[first_index[len] + offset as usize].0);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_prefix_free(t: &HuffmanTable) -> bool {
        let codes: Vec<(u32, u8)> = (0..=255u8).filter_map(|s| t.code(s)).collect();
        for (i, &(a, la)) in codes.iter().enumerate() {
            for &(b, lb) in &codes[i + 1..] {
                let l = la.min(lb);
                if a >> (la - l) == b >> (lb - l) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn single_symbol_gets_one_bit() {
        let syms = vec![42u8; 13];
        let t = huffman_build(&histogram(&syms)).unwrap();
        assert_eq!(t.code(42), Some((0, 1)));
        let (bytes, bits) = huffman_encode(&syms, &t).unwrap();
        assert_eq!(bits, 13);
        assert_eq!(huffman_decode(&bytes, bits, &t, 13).unwrap(), syms);
    }

    #[test]
    fn hand_built_three_symbols() {
        let mut f = [0u64; ALPHABET];
        f[b'a' as usize] = 1;
        f[b'b' as usize] = 1;
        f[b'c' as usize] = 2;
        let t = huffman_build(&f).unwrap();
        assert_eq!(t.lengths()[b'a' as usize], 2);
        assert_eq!(t.lengths()[b'b' as usize], 2);
        assert_eq!(t.lengths()[b'c' as usize], 1);
        // canonical: c=0, a=10, b=11
        assert_eq!(t.code(b'c'), Some((0b0, 1)));
        assert_eq!(t.code(b'a'), Some((0b10, 2)));
        assert_eq!(t.code(b'b'), Some((0b11, 2)));
    }

    #[test]
    fn bit_packing_msb_first() {
        let mut w = BitWriter::new();
        w.write(0b101, 3);
        w.write(0b11111, 5);
        w.write(0b1, 1);
        let (bytes, bits) = w.finish();
        assert_eq!(bits, 9);
        assert_eq!(bytes, vec![0b1011_1111, 0b1000_0000]);
    }

    #[test]
    fn fibonacci_frequencies_are_length_limited() {
        let mut f = [0u64; ALPHABET];
        let (mut a, mut b) = (1u64, 1u64);
        for s in 0..30 {
            f[s] = a;
            (a, b) = (b, a + b);
        }
        // unrestricted depth would be 29
        let present: Vec<usize> = (0..30).collect();
        assert_eq!(tree_depths(&f, &present).into_iter().max(), Some(29));
        let t = huffman_build(&f).unwrap();
        assert!(t.lengths().iter().all(|&l| l <= MAX_CODE_LEN));
        assert!(t.kraft_sum() <= 1.0);
        assert!(is_prefix_free(&t));
    }

    #[test]
    fn package_merge_matches_huffman_cost_when_unconstrained() {
        let mut f = [0u64; ALPHABET];
        for (s, v) in [5u64, 9, 12, 13, 16, 45, 1, 1, 2].iter().enumerate() {
            f[s] = *v;
        }
        let present: Vec<usize> = (0..9).collect();
        let cost = |l: &[usize]| present.iter().zip(l).map(|(&s, &d)| f[s] * d as u64).sum::<u64>();
        let h = tree_depths(&f, &present);
        let pm = package_merge(&f, &present, 16);
        assert_eq!(cost(&h), cost(&pm));
    }

    #[test]
    fn errors() {
        assert!(huffman_build(&[0; ALPHABET]).is_err());
        let t = huffman_build(&histogram(&[1, 2, 2])).unwrap();
        assert!(huffman_encode(&[3], &t).is_err());
        let (bytes, bits) = huffman_encode(&[1, 2, 2, 1], &t).unwrap();
        assert!(huffman_decode(&bytes, bits - 1, &t, 4).is_err());
        assert!(huffman_decode(&bytes, 64, &t, 4).is_err());

        let mut bad = [0u8; ALPHABET];
        bad[..3].copy_from_slice(&[1, 1, 1]);
        assert!(HuffmanTable::from_lengths(bad).is_err());
        bad[..3].copy_from_slice(&[17, 0, 0]);
        assert!(HuffmanTable::from_lengths(bad).is_err());
    }

    #[test]
    fn incomplete_code_rejects_unused_codeword() {
        // lengths {1, 2}: codeword 11 is unassigned
        let mut l = [0u8; ALPHABET];
        l[0] = 1;
        l[1] = 2;
        let t = HuffmanTable::from_lengths(l).unwrap();
        let mut w = BitWriter::new();
        w.write(0b11, 2);
        for _ in 0..15 {
            w.write(1, 1);
        }
        let (bytes, bits) = w.finish();
        assert!(huffman_decode(&bytes, bits, &t, 1).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_entropy_bound(
            seed in any::<u64>(),
            alphabet in 1usize..=256,
            skew in 0.0f64..3.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // power-law over `alphabet` symbols
            let w: Vec<f64> = (0..alphabet).map(|i| 1.0 / ((i + 1) as f64).powf(skew)).collect();
            let total: f64 = w.iter().sum();
            let syms: Vec<u8> = (0..1000)
                .map(|_| {
                    let mut u = rng.gen::<f64>() * total;
                    for (i, wi) in w.iter().enumerate() {
                        if u < *wi { return i as u8; }
                        u -= wi;
                    }
                    (alphabet - 1) as u8
                })
                .collect();
            let freqs = histogram(&syms);
            let t = huffman_build(&freqs).unwrap();
            prop_assert!(t.kraft_sum() <= 1.0);
            prop_assert!(is_prefix_free(&t));
            let (bytes, bits) = huffman_encode(&syms, &t).unwrap();
            prop_assert_eq!(huffman_decode(&bytes, bits, &t, syms.len()).unwrap(), syms.clone());
            let h = entropy_bits(&freqs);
            let mean = t.mean_code_length(&freqs);
            prop_assert!(mean < h + 1.0 || (h == 0.0 && mean == 1.0));
            prop_assert!(mean >= h - 1e-12);
            prop_assert_eq!(HuffmanTable::from_lengths(*t.lengths()).unwrap(), t);
        }
    }
}
