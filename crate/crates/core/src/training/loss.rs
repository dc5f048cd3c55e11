use crate::error::{Error, Result};
use crate::metrics::{gaussian_window, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
use crate::tensor::{nchw, Tape, Tensor, Var};

pub const DEFAULT_W_MAE: f64 = 0.7;
pub const DEFAULT_W_SSIM: f64 = 0.3;

/// Valid-mode depthwise Gaussian blur as two 1-D convolutions.
fn blur(tape: &mut Tape, x: Var, h_kernel: Var, v_kernel: Var, channels: usize) -> Result<Var> {
    let y = tape.conv2d(x, h_kernel, None, 1, 0, channels)?;
    tape.conv2d(y, v_kernel, None, 1, 0, channels)
}

/// Differentiable single-scale SSIM of two `(N, C, H, W)` tensors, with the
/// same window and constants as [`crate::metrics::ssim`].
pub fn ssim_tape(tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
    if tape.shape(x) != tape.shape(y) {
        return Err(Error::shape(format!("ssim: {:?} vs {:?}", tape.shape(x), tape.shape(y))));
    }
    let (_, c, h, w) = nchw(tape.shape(x), "ssim")?;
    if h.min(w) < SSIM_WINDOW {
        return Err(Error::shape(format!("SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let taps: Vec<f64> = (0..c).flat_map(|_| g.iter().copied()).collect();
    let kh = tape.constant(Tensor::new(&[c, 1, 1, SSIM_WINDOW], taps.clone())?);
    let kv = tape.constant(Tensor::new(&[c, 1, SSIM_WINDOW, 1], taps)?);

    let xx = tape.mul(x, x)?;
    let yy = tape.mul(y, y)?;
    let xy = tape.mul(x, y)?;
    let mu_x = blur(tape, x, kh, kv, c)?;
    let mu_y = blur(tape, y, kh, kv, c)?;
    let e_xx = blur(tape, xx, kh, kv, c)?;
    let e_yy = blur(tape, yy, kh, kv, c)?;
    let e_xy = blur(tape, xy, kh, kv, c)?;

    let mx2 = tape.mul(mu_x, mu_x)?;
    let my2 = tape.mul(mu_y, mu_y)?;
    let mxy = tape.mul(mu_x, mu_y)?;
    let sxx = tape.sub(e_xx, mx2)?;
    let syy = tape.sub(e_yy, my2)?;
    let sxy = tape.sub(e_xy, mxy)?;

    let lum_num = tape.mul_scalar(mxy, 2.0)?;
    let lum_num = tape.add_scalar(lum_num, SSIM_C1)?;
    let lum_den = tape.add(mx2, my2)?;
    let lum_den = tape.add_scalar(lum_den, SSIM_C1)?;
    let cs_num = tape.mul_scalar(sxy, 2.0)?;
    let cs_num = tape.add_scalar(cs_num, SSIM_C2)?;
    let cs_den = tape.add(sxx, syy)?;
    let cs_den = tape.add_scalar(cs_den, SSIM_C2)?;

    let lum = tape.div(lum_num, lum_den)?;
    let cs = tape.div(cs_num, cs_den)?;
    let map = tape.mul(lum, cs)?;
    tape.mean(map)
}

/// `w_mae·mean|pred − target| + w_ssim·(1 − SSIM(pred, target))`.
pub fn loss_tape(tape: &mut Tape, pred: Var, target: Var, w_mae: f64, w_ssim: f64) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let diff = tape.abs(diff)?;
    let mae = tape.mean(diff)?;
    let s = ssim_tape(tape, pred, target)?;
    let dissim = tape.mul_scalar(s, -1.0)?;
    let dissim = tape.add_scalar(dissim, 1.0)?;
    let a = tape.mul_scalar(mae, w_mae)?;
    let b = tape.mul_scalar(dissim, w_ssim)?;
    tape.add(a, b)
}

/// Training loss between two `(N, 3, H, W)` frames with the default
/// 0.7 / 0.3 weighting.
pub fn loss(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(x_hat.clone());
    let l = loss_tape(&mut tape, a, b, DEFAULT_W_MAE, DEFAULT_W_SSIM)?;
    Ok(tape.value(l).data()[0])
}
