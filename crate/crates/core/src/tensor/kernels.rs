//! Raw slice kernels behind the tape ops. All buffers are row-major NCHW.

use crate::error::{Error, Result};

/// Geometry of a grouped 2-D cross-correlation with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dGeom {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.cin % self.groups != 0 || self.cout % self.groups != 0 {
            return Err(Error::shape(format!(
                "groups={} must divide cin={} and cout={}",
                self.groups, self.cin, self.cout
            )));
        }
        if self.kh % 2 == 0 || self.kw % 2 == 0 {
            return Err(Error::shape(format!(
                "kernel {}x{} must have odd sides",
                self.kh, self.kw
            )));
        }
        if self.stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if self.h + 2 * self.padding < self.kh || self.w + 2 * self.padding < self.kw {
            return Err(Error::shape(format!(
                "kernel {}x{} larger than padded input {}x{}",
                self.kh,
                self.kw,
                self.h + 2 * self.padding,
                self.w + 2 * self.padding
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.padding - self.kw) / self.stride + 1
    }

    pub fn cin_per_group(&self) -> usize {
        self.cin / self.groups
    }

    pub fn cout_per_group(&self) -> usize {
        self.cout / self.groups
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin_per_group() * self.kh * self.kw
    }

    /// Output positions `o` in `[lo, hi)` whose source index
    /// `o * stride + k - padding` lands inside `[0, len)`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.padding as isize;
        let lo = if off >= 0 { 0 } else { (((-off) + s - 1) / s).min(out_len as isize) };
        let last = (len as isize - 1 - off).div_euclid(s);
        let hi = (last + 1).clamp(0, out_len as isize);
        (lo as usize, hi.max(lo) as usize)
    }
}

/// Forward cross-correlation (no kernel flip).
pub fn conv2d_forward(g: &Conv2dGeom, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let (cin_g, cout_g) = (g.cin_per_group(), g.cout_per_group());
    let plane_in = g.h * g.w;
    let plane_out = oh * ow;
    let mut out = vec![0.0; g.n * g.cout * plane_out];
    for n in 0..g.n {
        for oc in 0..g.cout {
            let grp = oc / cout_g;
            let o = &mut out[(n * g.cout + oc) * plane_out..][..plane_out];
            if let Some(b) = bias {
                o.fill(b[oc]);
            }
            for icg in 0..cin_g {
                let ic = grp * cin_g + icg;
                let x = &input[(n * g.cin + ic) * plane_in..][..plane_in];
                let wk = &weight[(oc * cin_g + icg) * g.kh * g.kw..][..g.kh * g.kw];
                for ky in 0..g.kh {
                    let (y0, y1) = g.valid_range(ky, g.h, oh);
                    for kx in 0..g.kw {
                        let wv = wk[ky * g.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = g.valid_range(kx, g.w, ow);
                        if x0 == x1 {
                            continue;
                        }
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - g.padding;
                            let row_in = &x[iy * g.w..][..g.w];
                            let row_out = &mut o[oy * ow..][..ow];
                            if g.stride == 1 {
                                let ix0 = x0 + kx - g.padding;
                                for (dst, src) in row_out[x0..x1].iter_mut().zip(&row_in[ix0..]) {
                                    *dst += wv * src;
                                }
                            } else {
                                for ox in x0..x1 {
                                    row_out[ox] += wv * row_in[ox * g.stride + kx - g.padding];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Vector-Jacobian products of [`conv2d_forward`].
///
/// Returns `(grad_input, grad_weight, grad_bias)`; the input and weight
/// gradients are skipped when not requested.
pub fn conv2d_backward(
    g: &Conv2dGeom,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let (cin_g, cout_g) = (g.cin_per_group(), g.cout_per_group());
    let plane_in = g.h * g.w;
    let plane_out = oh * ow;
    let mut gi = want_input.then(|| vec![0.0; input.len()]);
    let mut gw = want_weight.then(|| vec![0.0; weight.len()]);
    let mut gb = vec![0.0; g.cout];

    for n in 0..g.n {
        for oc in 0..g.cout {
            let grp = oc / cout_g;
            let go = &grad_out[(n * g.cout + oc) * plane_out..][..plane_out];
            gb[oc] += go.iter().sum::<f64>();
            for icg in 0..cin_g {
                let ic = grp * cin_g + icg;
                let x_off = (n * g.cin + ic) * plane_in;
                let w_off = (oc * cin_g + icg) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let (y0, y1) = g.valid_range(ky, g.h, oh);
                    for kx in 0..g.kw {
                        let (x0, x1) = g.valid_range(kx, g.w, ow);
                        if x0 == x1 {
                            continue;
                        }
                        let widx = w_off + ky * g.kw + kx;
                        let wv = weight[widx];
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - g.padding;
                            let row_go = &go[oy * ow..][..ow];
                            let in_row = x_off + iy * g.w;
                            if g.stride == 1 {
                                let ix0 = x0 + kx - g.padding;
                                let span = x1 - x0;
                                if gw.is_some() {
                                    let xs = &input[in_row + ix0..][..span];
                                    acc += row_go[x0..x1].iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                                }
                                if let Some(gi) = gi.as_mut() {
                                    if wv != 0.0 {
                                        let dst = &mut gi[in_row + ix0..][..span];
                                        for (d, go_v) in dst.iter_mut().zip(&row_go[x0..x1]) {
                                            *d += wv * go_v;
                                        }
                                    }
                                }
                            } else {
                                for ox in x0..x1 {
                                    let ix = in_row + ox * g.stride + kx - g.padding;
                                    acc += row_go[ox] * input[ix];
                                    if let Some(gi) = gi.as_mut() {
                                        gi[ix] += wv * row_go[ox];
                                    }
                                }
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    (gi, gw, gb)
}

/// `out[n, c, h*r + i, w*r + j] = in[n, c*r*r + i*r + j, h, w]`.
pub fn pixel_shuffle_forward(n: usize, c_in: usize, h: usize, w: usize, r: usize, input: &[f64]) -> Vec<f64> {
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; input.len()];
    for b in 0..n {
        for co in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src_c = co * r * r + i * r + j;
                    let src = &input[(b * c_in + src_c) * h * w..][..h * w];
                    let dst = &mut out[(b * c + co) * oh * ow..][..oh * ow];
                    for y in 0..h {
                        for x in 0..w {
                            dst[(y * r + i) * ow + x * r + j] = src[y * w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Inverse index map of [`pixel_shuffle_forward`]; also its VJP.
pub fn pixel_unshuffle(n: usize, c_in: usize, h: usize, w: usize, r: usize, shuffled: &[f64]) -> Vec<f64> {
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; shuffled.len()];
    for b in 0..n {
        for co in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let dst_c = co * r * r + i * r + j;
                    let src = &shuffled[(b * c + co) * oh * ow..][..oh * ow];
                    let dst = &mut out[(b * c_in + dst_c) * h * w..][..h * w];
                    for y in 0..h {
                        for x in 0..w {
                            dst[y * w + x] = src[(y * r + i) * ow + x * r + j];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Interpolation taps along one axis for half-pixel (align-corners=false)
/// bilinear upscaling: `(i0, i1, frac)` per output index.
pub(crate) fn bilinear_taps(len: usize, scale: usize) -> Vec<(usize, usize, f64)> {
    (0..len * scale)
        .map(|d| {
            let src = ((d as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn bilinear_forward(planes: usize, h: usize, w: usize, s: usize, input: &[f64]) -> Vec<f64> {
    let ty = bilinear_taps(h, s);
    let tx = bilinear_taps(w, s);
    let (oh, ow) = (h * s, w * s);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &input[p * h * w..][..h * w];
        let dst = &mut out[p * oh * ow..][..oh * ow];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

pub fn bilinear_backward(planes: usize, h: usize, w: usize, s: usize, grad_out: &[f64]) -> Vec<f64> {
    let ty = bilinear_taps(h, s);
    let tx = bilinear_taps(w, s);
    let (oh, ow) = (h * s, w * s);
    let mut gi = vec![0.0; planes * h * w];
    for p in 0..planes {
        let go = &grad_out[p * oh * ow..][..oh * ow];
        let dst = &mut gi[p * h * w..][..h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = go[oy * ow + ox];
                dst[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                dst[y0 * w + x1] += g * (1.0 - fy) * fx;
                dst[y1 * w + x0] += g * fy * (1.0 - fx);
                dst[y1 * w + x1] += g * fy * fx;
            }
        }
    }
    gi
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

/// Exact GELU, `x * Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_cdf(x) + x * pdf
}

/// `y[r, o] = Σ_i x[r, i] * w[o, i] + b[o]`.
pub fn linear_forward(rows: usize, fin: usize, fout: usize, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; rows * fout];
    for r in 0..rows {
        let xr = &x[r * fin..][..fin];
        for o in 0..fout {
            let wr = &w[o * fin..][..fin];
            let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            y[r * fout + o] = dot + b.map_or(0.0, |b| b[o]);
        }
    }
    y
}
