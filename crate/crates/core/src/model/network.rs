use std::f64::consts::PI;

use super::params::{layout, ModelParams};
use super::{ArchConfig, BlockSpec, ParameterStore};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

pub use super::params::{BlockParams, ConvParams, LinearParams, ScrbParams};

/// `[sin(b⁰πt), cos(b⁰πt), …, sin(b^(l-1)πt), cos(b^(l-1)πt)]`.
pub fn positional_encode(t: f64, base: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * levels);
    for i in 0..levels {
        let arg = base.powi(i as i32) * PI * t;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// Normalized time coordinate of frame `index` in a `frames`-long clip.
pub fn time_coord(index: usize, frames: usize) -> f64 {
    if frames <= 1 {
        0.0
    } else {
        index as f64 / (frames - 1) as f64
    }
}

/// linear -> GELU -> linear, reshaped to `(1, C0, h0, w0)`.
pub fn stem_forward(tape: &mut Tape, pe: Var, stem: &[LinearParams<Var>; 2], config: &ArchConfig) -> Result<Var> {
    let h = tape.linear(pe, stem[0].weight, Some(stem[0].bias))?;
    let h = tape.gelu(h)?;
    let y = tape.linear(h, stem[1].weight, Some(stem[1].bias))?;
    let (h0, w0) = config.base_grid;
    tape.reshape(y, &[1, config.base_channels, h0, w0])
}

/// `x + project(GELU(expand(dwconv(x))))`.
pub fn scrb_forward(tape: &mut Tape, x: Var, p: &ScrbParams<Var>, dw_kernel: usize) -> Result<Var> {
    let c = tape.shape(x).get(1).copied().unwrap_or(0);
    let y = tape.conv2d(x, p.dw.weight, Some(p.dw.bias), 1, dw_kernel / 2, c)?;
    let y = tape.conv2d(y, p.expand.weight, Some(p.expand.bias), 1, 0, 1)?;
    let y = tape.gelu(y)?;
    let y = tape.conv2d(y, p.project.weight, Some(p.project.bias), 1, 0, 1)?;
    tape.add(x, y)
}

/// 3x3 conv -> pixel shuffle by `stride` -> GELU.
pub fn ub_forward(tape: &mut Tape, x: Var, p: &ConvParams<Var>, stride: usize) -> Result<Var> {
    let y = tape.conv2d(x, p.weight, Some(p.bias), 1, 1, 1)?;
    let y = tape.pixel_shuffle(y, stride)?;
    tape.gelu(y)
}

/// `SCRB_post(UB(SCRB_pre(x))) + skip(bilinear(x))`.
pub fn nervpp_block_forward(tape: &mut Tape, x: Var, p: &BlockParams<Var>, spec: &BlockSpec) -> Result<Var> {
    let main = scrb_forward(tape, x, &p.pre, spec.dw_kernel)?;
    let main = ub_forward(tape, main, &p.ub, spec.stride)?;
    let main = scrb_forward(tape, main, &p.post, spec.dw_kernel)?;
    let skip = tape.bilinear_resize(x, spec.stride)?;
    let skip = tape.conv2d(skip, p.skip.weight, Some(p.skip.bias), 1, 0, 1)?;
    tape.add(main, skip)
}

/// `(tanh(conv(x)) + 1) / 2`, so every output lies in `[0, 1]`.
pub fn head_forward(tape: &mut Tape, x: Var, p: &ConvParams<Var>, kernel: usize) -> Result<Var> {
    let y = tape.conv2d(x, p.weight, Some(p.bias), 1, kernel / 2, 1)?;
    let y = tape.tanh(y)?;
    let y = tape.add_scalar(y, 1.0)?;
    tape.mul_scalar(y, 0.5)
}

/// Full forward pass recorded on `tape`; returns a `(1, 3, H, W)` frame.
pub fn model_forward_tape(tape: &mut Tape, t: f64, config: &ArchConfig, params: &ModelParams<Var>) -> Result<Var> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time coordinate {t} outside [0, 1]")));
    }
    let pe = positional_encode(t, config.pe_base, config.pe_levels);
    let pe = tape.constant(Tensor::new(&[pe.len()], pe)?);
    let mut x = stem_forward(tape, pe, &params.stem, config)?;
    for (spec, block) in config.blocks.iter().zip(&params.blocks) {
        x = nervpp_block_forward(tape, x, block, spec)?;
    }
    head_forward(tape, x, &params.head, config.head_kernel)
}

/// Inference-only forward pass.
pub fn model_forward(t: f64, config: &ArchConfig, store: &ParameterStore) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (_, params) = bind(&mut tape, config, store, false)?;
    let y = model_forward_tape(&mut tape, t, config, &params)?;
    Ok(tape.value(y).clone())
}

/// Registers `store` on `tape` and arranges the handles by topology.
pub fn bind(
    tape: &mut Tape,
    config: &ArchConfig,
    store: &ParameterStore,
    requires_grad: bool,
) -> Result<(Vec<Var>, ModelParams<Var>)> {
    config.validate()?;
    let (specs, idx) = layout(config);
    if specs.as_slice() != store.specs() {
        return Err(Error::Config("parameter store does not match the architecture".into()));
    }
    let vars = store.register(tape, requires_grad);
    let params = idx.map(|i| vars[i]);
    Ok((vars, params))
}

/// Arranges handles already registered in layout order.
pub fn arrange_vars(config: &ArchConfig, vars: &[Var]) -> Result<ModelParams<Var>> {
    let (specs, idx) = layout(config);
    if vars.len() != specs.len() {
        return Err(Error::Config(format!("{} handles for {} parameters", vars.len(), specs.len())));
    }
    Ok(idx.map(|i| vars[i]))
}
