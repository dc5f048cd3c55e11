//! Full-reference quality metrics on `[0, 1]` frames.
//!
//! Inputs are tensors whose last two dims are `(H, W)`; every leading index
//! (frame, channel) is treated as an independent plane and plane scores are
//! averaged.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

fn check_same(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("metric inputs differ: {:?} vs {:?}", x.shape(), y.shape())));
    }
    Ok(())
}

fn planes(t: &Tensor) -> Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() < 2 {
        return Err(Error::shape(format!("image metrics need at least 2 dims, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok((t.numel() / (h * w), h, w))
}

pub fn mse(x: &Tensor, y: &Tensor) -> Result<f64> {
    check_same(x, y)?;
    let sum: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.numel() as f64)
}

/// `-10·log10(MSE)` with unit peak; identical inputs give `+inf`.
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Valid-mode separable Gaussian filtering of one plane.
fn blur(src: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..][..w];
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().zip(&row[x..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, gi) in g.iter().enumerate() {
            let src_row = &tmp[(y + i) * ow..][..ow];
            for (o, s) in out[y * ow..][..ow].iter_mut().zip(src_row) {
                *o += gi * s;
            }
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term of one plane.
fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, g: &[f64]) -> (f64, f64) {
    let sq = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let mu_x = blur(x, h, w, g);
    let mu_y = blur(y, h, w, g);
    let e_xx = blur(&sq(x, x), h, w, g);
    let e_yy = blur(&sq(y, y), h, w, g);
    let e_xy = blur(&sq(x, y), h, w, g);
    let n = mu_x.len();
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        let cs = (2.0 * sxy + SSIM_C2) / (sxx + syy + SSIM_C2);
        let lum = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    (ssim_sum / n as f64, cs_sum / n as f64)
}

/// Single-scale SSIM: 11x11 Gaussian window (σ = 1.5), valid positions
/// only, `C1 = 0.01²`, `C2 = 0.03²`, data range 1, averaged over planes.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    check_same(x, y)?;
    let (np, h, w) = planes(x)?;
    if h.min(w) < SSIM_WINDOW {
        return Err(Error::shape(format!("SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let plane = h * w;
    let total: f64 = (0..np)
        .map(|p| ssim_plane(&x.data()[p * plane..][..plane], &y.data()[p * plane..][..plane], h, w, &g).0)
        .sum();
    Ok(total / np as f64)
}

/// Largest scale count (≤ 5) whose coarsest level still fits the window.
pub fn ms_ssim_scale_count(h: usize, w: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&m| h.min(w) >= SSIM_WINDOW << (m - 1))
        .unwrap_or(0)
}

/// First `scales` standard weights renormalized to sum to one.
pub fn ms_ssim_weights(scales: usize) -> Vec<f64> {
    let w = &MS_SSIM_WEIGHTS[..scales];
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn avg_pool2(src: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let a = src[2 * y * w + 2 * x];
            let b = src[2 * y * w + 2 * x + 1];
            let c = src[(2 * y + 1) * w + 2 * x];
            let d = src[(2 * y + 1) * w + 2 * x + 1];
            out.push((a + b + c + d) / 4.0);
        }
    }
    (out, oh, ow)
}

/// Multi-scale SSIM with the largest scale count the frame supports.
pub fn ms_ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    let (_, h, w) = planes(x)?;
    ms_ssim_with_scales(x, y, ms_ssim_scale_count(h, w))
}

/// Multi-scale SSIM over exactly `scales` dyadic levels.
///
/// Contrast-structure terms of the finer levels and the full SSIM of the
/// coarsest level are combined as a weighted geometric product; negative
/// terms are clamped to zero before exponentiation.
pub fn ms_ssim_with_scales(x: &Tensor, y: &Tensor, scales: usize) -> Result<f64> {
    check_same(x, y)?;
    let (np, h, w) = planes(x)?;
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() || h.min(w) < SSIM_WINDOW << (scales - 1) {
        return Err(Error::shape(format!("{h}x{w} frame too small for {scales}-scale MS-SSIM")));
    }
    let weights = ms_ssim_weights(scales);
    let g = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let plane = h * w;
    let mut total = 0.0;
    for p in 0..np {
        let mut a = x.data()[p * plane..][..plane].to_vec();
        let mut b = y.data()[p * plane..][..plane].to_vec();
        let (mut ch, mut cw) = (h, w);
        let mut score = 1.0;
        for (j, wj) in weights.iter().enumerate() {
            let (s, cs) = ssim_plane(&a, &b, ch, cw, &g);
            let term = if j + 1 == scales { s } else { cs };
            score *= term.max(0.0).powf(*wj);
            if j + 1 < scales {
                let (na, nh, nw) = avg_pool2(&a, ch, cw);
                let (nb, _, _) = avg_pool2(&b, ch, cw);
                a = na;
                b = nb;
                ch = nh;
                cw = nw;
            }
        }
        total += score;
    }
    Ok(total / np as f64)
}

/// MS-SSIM in decibels, `-10·log10(1 - v)`.
pub fn ms_ssim_db(v: f64) -> f64 {
    -10.0 * (1.0 - v).log10()
}
