use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BITS: u32 = 8;

/// Min–max affine quantization of one tensor.
///
/// `scale` and `min_val` are f32 because that is how they are stored; the
/// encoder derives `q` from the stored values so that encoder and decoder
/// reconstruct identical weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    shape: Vec<usize>,
    q: Vec<u8>,
    scale: f32,
    min_val: f32,
}

/// `q · scale + min_val`, evaluated in f64.
pub fn dequant_value(q: u8, scale: f32, min_val: f32) -> f64 {
    q as f64 * scale as f64 + min_val as f64
}

impl QuantTensor {
    pub fn from_parts(shape: Vec<usize>, q: Vec<u8>, scale: f32, min_val: f32) -> Result<Self> {
        if shape.iter().product::<usize>() != q.len() {
            return Err(Error::shape(format!("{} symbols for shape {shape:?}", q.len())));
        }
        if !(scale > 0.0) || !scale.is_finite() || !min_val.is_finite() {
            return Err(Error::invalid(format!("bad quantization parameters scale={scale} min={min_val}")));
        }
        Ok(Self { shape, q, scale, min_val })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn symbols(&self) -> &[u8] {
        &self.q
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn min_val(&self) -> f32 {
        self.min_val
    }

    pub fn dequantize(&self) -> Tensor {
        let data = self.q.iter().map(|&q| dequant_value(q, self.scale, self.min_val)).collect();
        Tensor::new(&self.shape, data).expect("shape checked on construction")
    }
}

fn f32_at_most(x: f64) -> f32 {
    let y = x as f32;
    if y as f64 > x {
        y.next_down()
    } else {
        y
    }
}

fn f32_at_least(x: f64) -> f32 {
    let y = x as f32;
    if (y as f64) < x {
        y.next_up()
    } else {
        y
    }
}

/// `scale = (max − min)/(2^bits − 1)`, `q = round_half_even((w − min)/scale)`.
/// A constant tensor gets `scale = 1` and all-zero symbols.
pub fn quantize_per_tensor(w: &Tensor, bits: u32) -> Result<QuantTensor> {
    if !(2..=8).contains(&bits) {
        return Err(Error::invalid(format!("quantization bits must be in 2..=8, got {bits}")));
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("quantize_per_tensor"));
    }
    if w.numel() == 0 {
        return Err(Error::invalid("cannot quantize an empty tensor"));
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let (lo, hi) = w.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));

    let min_val = f32_at_most(lo);
    let scale = if hi == lo && min_val as f64 == lo {
        1.0
    } else {
        // smallest f32 scale that still covers [min_val, hi]
        let mut s = f32_at_least((hi - min_val as f64) / levels).max(f32::from_bits(1));
        while dequant_value(levels as u8, s, min_val) < hi {
            s = s.next_up();
        }
        s
    };
    if !scale.is_finite() {
        return Err(Error::NonFinite("quantize_per_tensor"));
    }
    let q = w
        .data()
        .iter()
        .map(|&x| ((x - min_val as f64) / scale as f64).round_ties_even().clamp(0.0, levels) as u8)
        .collect();
    QuantTensor::from_parts(w.shape().to_vec(), q, scale, min_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_tensor() {
        let t = Tensor::full(&[2, 3], 0.25);
        let q = quantize_per_tensor(&t, 8).unwrap();
        assert!(q.symbols().iter().all(|&s| s == 0));
        assert_eq!(q.scale(), 1.0);
        assert_eq!(q.dequantize(), t);
    }

    #[test]
    fn unit_range_scale() {
        let t = Tensor::new(&[3], vec![-1.0, 0.3, 1.0]).unwrap();
        let q = quantize_per_tensor(&t, 8).unwrap();
        assert!((q.scale() as f64 - 2.0 / 255.0).abs() < 1e-9);
        assert_eq!(q.min_val(), -1.0);
        assert_eq!(q.symbols()[0], 0);
        assert_eq!(q.symbols()[2], 255);
    }

    #[test]
    fn ties_round_to_even() {
        // range [0, 3] at 2 bits: scale 1, values 0.5 and 1.5 sit on ties
        let t = Tensor::new(&[4], vec![0.0, 0.5, 1.5, 3.0]).unwrap();
        let q = quantize_per_tensor(&t, 2).unwrap();
        assert_eq!(q.scale(), 1.0);
        assert_eq!(q.symbols(), &[0, 0, 2, 3]);
    }

    #[test]
    fn rejects_bad_input() {
        let t = Tensor::new(&[2], vec![0.0, f64::NAN]).unwrap();
        assert!(quantize_per_tensor(&t, 8).is_err());
        let t = Tensor::zeros(&[2]);
        assert!(quantize_per_tensor(&t, 1).is_err());
        assert!(quantize_per_tensor(&t, 9).is_err());
        assert!(QuantTensor::from_parts(vec![3], vec![0, 1], 1.0, 0.0).is_err());
        assert!(QuantTensor::from_parts(vec![2], vec![0, 1], 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn error_within_half_step(vals in prop::collection::vec(-3.0f64..3.0, 1..200), bits in 2u32..=8) {
            let t = Tensor::new(&[vals.len()], vals.clone()).unwrap();
            let q = quantize_per_tensor(&t, bits).unwrap();
            let s = q.scale() as f64;
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let levels = ((1u32 << bits) - 1) as f64;
            let d = q.dequantize();
            for (x, y) in vals.iter().zip(d.data()) {
                prop_assert!((x - y).abs() <= s / 2.0 * (1.0 + 1e-12));
                prop_assert!(*y >= q.min_val() as f64 && *y <= q.min_val() as f64 + levels * s);
            }
            prop_assert!(q.symbols().iter().all(|&v| (v as f64) <= levels));
            if hi > lo {
                // scale is within f32 rounding of the min-max value
                let ideal = (hi - lo) / levels;
                prop_assert!(s >= ideal * (1.0 - 1e-6));
                prop_assert!(s <= ideal * (1.0 + 1e-5) + 1e-30);
            }
        }
    }
}
