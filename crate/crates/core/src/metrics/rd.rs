//! Rate metrics and Bjøntegaard deltas.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub quality: f64,
}

/// At least four points with strictly increasing rate and quality.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid(format!("RD curve needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|p| !(p.bpp > 0.0) || !p.bpp.is_finite() || !p.quality.is_finite()) {
            return Err(Error::invalid("RD points need finite positive bpp and finite quality"));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        let monotone = points
            .windows(2)
            .all(|w| w[1].bpp > w[0].bpp && w[1].quality > w[0].quality);
        if !monotone {
            return Err(Error::invalid("RD curve must be strictly increasing in both rate and quality"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn log_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.bpp.log10()).collect()
    }

    fn qualities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.quality).collect()
    }
}

/// `8·bytes / (T·H·W)`.
pub fn bpp(stream_bytes: usize, frames: usize, height: usize, width: usize) -> Result<f64> {
    let pixels = frames * height * width;
    if pixels == 0 {
        return Err(Error::invalid("bpp needs positive video dimensions"));
    }
    Ok(8.0 * stream_bytes as f64 / pixels as f64)
}

/// Least-squares cubic in a centred variable; integrates exactly.
struct Cubic {
    coeffs: [f64; 4],
    center: f64,
}

impl Cubic {
    fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let center = xs.iter().sum::<f64>() / xs.len() as f64;
        let a = DMatrix::from_fn(xs.len(), 4, |r, c| (xs[r] - center).powi(c as i32));
        let b = DVector::from_column_slice(ys);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::invalid(format!("cubic fit failed: {e}")))?;
        Ok(Self {
            coeffs: [sol[0], sol[1], sol[2], sol[3]],
            center,
        })
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let u = x - self.center;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * u.powi(k as i32 + 1) / (k + 1) as f64)
            .sum()
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

fn overlap(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = min(a).max(min(b));
    let hi = max(a).min(max(b));
    if !(hi > lo) {
        return Err(Error::invalid("RD curves do not overlap"));
    }
    Ok((lo, hi))
}

/// Average rate difference at equal quality, in percent. Negative means the
/// test curve needs fewer bits than the anchor.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (qa, qt) = (anchor.qualities(), test.qualities());
    let (lo, hi) = overlap(&qa, &qt)?;
    let fa = Cubic::fit(&qa, &anchor.log_rates())?;
    let ft = Cubic::fit(&qt, &test.log_rates())?;
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// Average quality difference at equal rate (quality units, e.g. dB).
pub fn bd_psnr(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (ra, rt) = (anchor.log_rates(), test.log_rates());
    let (lo, hi) = overlap(&ra, &rt)?;
    let fa = Cubic::fit(&ra, &anchor.qualities())?;
    let ft = Cubic::fit(&rt, &test.qualities())?;
    Ok((ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pts: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(pts.iter().map(|&(bpp, quality)| RdPoint { bpp, quality }).collect()).unwrap()
    }

    fn anchor() -> RdCurve {
        curve(&[(0.05, 28.1), (0.1, 30.4), (0.2, 32.9), (0.4, 35.0), (0.8, 36.6)])
    }

    fn scaled(c: &RdCurve, k: f64) -> RdCurve {
        RdCurve::new(c.points().iter().map(|p| RdPoint { bpp: p.bpp * k, quality: p.quality }).collect()).unwrap()
    }

    #[test]
    fn bpp_arithmetic() {
        assert_eq!(bpp(1000, 10, 100, 8).unwrap(), 1.0);
        assert_eq!(bpp(1000, 20, 100, 8).unwrap(), 0.5);
        assert!(bpp(10, 0, 4, 4).is_err());
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let a = anchor();
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(bd_psnr(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rate_shifts() {
        let a = anchor();
        assert!((bd_rate(&a, &scaled(&a, 2.0)).unwrap() - 100.0).abs() < 1e-6);
        assert!((bd_rate(&a, &scaled(&a, 0.5)).unwrap() + 50.0).abs() < 1e-6);
    }

    #[test]
    fn shift_relation_is_reciprocal() {
        let a = anchor();
        let b = scaled(&a, 1.37);
        let ab = bd_rate(&a, &b).unwrap() / 100.0;
        let ba = bd_rate(&b, &a).unwrap() / 100.0;
        assert!((ab + ba / (1.0 + ba)).abs() < 1e-9);
    }

    #[test]
    fn quality_shift_gives_bd_psnr() {
        let a = anchor();
        let b = RdCurve::new(a.points().iter().map(|p| RdPoint { bpp: p.bpp, quality: p.quality + 0.5 }).collect()).unwrap();
        assert!((bd_psnr(&a, &b).unwrap() - 0.5).abs() < 1e-9);
        assert!(bd_rate(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn invalid_curves_rejected() {
        let few = vec![RdPoint { bpp: 0.1, quality: 30.0 }; 3];
        assert!(RdCurve::new(few).is_err());
        let flat = (1..=4).map(|i| RdPoint { bpp: i as f64, quality: 30.0 }).collect();
        assert!(RdCurve::new(flat).is_err());
        let a = anchor();
        let far = curve(&[(1.0, 50.0), (2.0, 51.0), (3.0, 52.0), (4.0, 53.0)]);
        assert!(bd_rate(&a, &far).is_err());
    }
}
