#![allow(dead_code)]

use nervpp::model::{init_params, ArchConfig, BlockSpec};
use nervpp::tensor::{Tape, Tensor, Var};
use nervpp::training::{loss_tape, ssim_tape};
use nervpp::video::synthetic_clip;
use nervpp::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Random values bounded away from zero in magnitude.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

/// Scalarizes a possibly non-scalar output with fixed random weights.
fn scalar_loss(inputs: &[Tensor], probe: &Option<Tensor>, build: &Build) -> Result<(f64, Var, Vec<Var>, Tape)> {
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone(), true)).collect();
    let out = build(&mut t, &vars)?;
    let l = match probe {
        Some(p) => {
            let c = t.constant(p.clone());
            let m = t.mul(out, c)?;
            t.sum(m)?
        }
        None => out,
    };
    let v = t.value(l).data()[0];
    Ok((v, l, vars, t))
}

/// Worst norm-wise relative error `|a - n| / max(|a|, |n|)` over the
/// inputs, between tape gradients and central differences.
pub fn gradcheck(inputs: &[Tensor], seed: u64, build: &Build) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, out_var, _, t) = scalar_loss(inputs, &None, build)?;
    let out_shape = t.value(out_var).shape().to_vec();
    let probe = (out_shape.iter().product::<usize>() != 1).then(|| random_tensor(&mut rng, &out_shape, -1.0, 1.0));

    let (_, l, vars, t) = scalar_loss(inputs, &probe, build)?;
    let grads = t.backward(l)?;
    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        let mut numeric = vec![0.0; x.numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut shifted = inputs.to_vec();
            shifted[i].data_mut()[j] = x.data()[j] + FD_STEP;
            let (fp, ..) = scalar_loss(&shifted, &probe, build)?;
            shifted[i].data_mut()[j] = x.data()[j] - FD_STEP;
            let (fm, ..) = scalar_loss(&shifted, &probe, build)?;
            *slot = (fp - fm) / (2.0 * FD_STEP);
        }
        let diff: f64 = analytic.data().iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// 16x16 output: 4x4 grid, two stride-2 blocks.
pub fn toy_arch() -> ArchConfig {
    ArchConfig {
        pe_base: 1.25,
        pe_levels: 4,
        stem_hidden: 8,
        base_grid: (4, 4),
        base_channels: 4,
        blocks: vec![
            BlockSpec {
                stride: 2,
                out_channels: 4,
                dw_kernel: 3,
                expansion: 2,
            },
            BlockSpec {
                stride: 2,
                out_channels: 3,
                dw_kernel: 5,
                expansion: 2,
            },
        ],
        head_kernel: 3,
        variant_star: true,
    }
}

/// One entry per differentiable op plus the full model; `(name, worst
/// relative error)`.
pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, build: &Build| {
        let err = gradcheck(&inputs, 7, build).unwrap_or_else(|e| panic!("{name}: {e}"));
        out.push((name, err));
    };

    let a = random_tensor(&mut rng, &[2, 3], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[2, 3], -1.0, 1.0);
    run("add", vec![a.clone(), b.clone()], &|t, v| t.add(v[0], v[1]));
    run("sub", vec![a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1]));
    run("mul", vec![a.clone(), b.clone()], &|t, v| t.mul(v[0], v[1]));
    let d = away_from_zero(&mut rng, &[2, 3]);
    run("div", vec![a.clone(), d.clone()], &|t, v| t.div(v[0], v[1]));
    run("add_scalar", vec![a.clone()], &|t, v| t.add_scalar(v[0], 0.7));
    run("mul_scalar", vec![a.clone()], &|t, v| t.mul_scalar(v[0], -1.3));
    run("tanh", vec![a.clone()], &|t, v| t.tanh(v[0]));
    run("sin", vec![a.clone()], &|t, v| t.sin(v[0]));
    run("cos", vec![a.clone()], &|t, v| t.cos(v[0]));
    run("abs", vec![d.clone()], &|t, v| t.abs(v[0]));
    let g = random_tensor(&mut rng, &[3, 4], -3.0, 3.0);
    run("gelu", vec![g], &|t, v| t.gelu(v[0]));
    run("sum", vec![a.clone()], &|t, v| t.sum(v[0]));
    run("mean", vec![a.clone()], &|t, v| t.mean(v[0]));
    run("reshape", vec![a.clone()], &|t, v| t.reshape(v[0], &[3, 2]));

    let x = random_tensor(&mut rng, &[5], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[4, 5], -1.0, 1.0);
    let bias = random_tensor(&mut rng, &[4], -1.0, 1.0);
    run("linear", vec![x, w, bias], &|t, v| t.linear(v[0], v[1], Some(v[2])));
    let xb = random_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[2, 5], -1.0, 1.0);
    run("linear_batched", vec![xb, w], &|t, v| t.linear(v[0], v[1], None));

    let x = random_tensor(&mut rng, &[1, 4, 5, 6], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[6, 2, 3, 3], -1.0, 1.0);
    let bias = random_tensor(&mut rng, &[6], -1.0, 1.0);
    run("conv2d_grouped", vec![x.clone(), w, bias], &|t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, 1, 2));
    let w = random_tensor(&mut rng, &[3, 4, 3, 3], -1.0, 1.0);
    run("conv2d_strided", vec![x.clone(), w], &|t, v| t.conv2d(v[0], v[1], None, 2, 1, 1));
    let w = random_tensor(&mut rng, &[4, 1, 7, 7], -1.0, 1.0);
    run("conv2d_depthwise_7x7", vec![x.clone(), w], &|t, v| t.conv2d(v[0], v[1], None, 1, 3, 4));
    let x8 = random_tensor(&mut rng, &[1, 8, 2, 3], -1.0, 1.0);
    run("pixel_shuffle", vec![x8], &|t, v| t.pixel_shuffle(v[0], 2));
    let xs = random_tensor(&mut rng, &[1, 2, 3, 4], -1.0, 1.0);
    run("bilinear_resize", vec![xs], &|t, v| t.bilinear_resize(v[0], 2));

    let p = random_tensor(&mut rng, &[1, 3, 12, 13], 0.05, 0.95);
    let q = random_tensor(&mut rng, &[1, 3, 12, 13], 0.05, 0.95);
    run("ssim", vec![p.clone(), q.clone()], &|t, v| ssim_tape(t, v[0], v[1]));
    run("loss", vec![p, q], &|t, v| loss_tape(t, v[0], v[1], 0.7, 0.3));

    out.push(("model", model_gradcheck()));
    out
}

/// Full model forward plus training loss, w.r.t. every parameter tensor.
pub fn model_gradcheck() -> f64 {
    let arch = toy_arch();
    let store = init_params(&arch, 11).unwrap();
    // lift the zero-initialized biases so their paths are exercised
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params: Vec<Tensor> = store
        .tensors()
        .iter()
        .map(|p| {
            let mut p = p.clone();
            for w in p.data_mut() {
                *w += rng.gen_range(-0.05..0.05);
            }
            p
        })
        .collect();
    let target = synthetic_clip(2, 16, 16).frame(1);
    let arch_ref = &arch;
    let build = move |t: &mut Tape, v: &[Var]| -> Result<Var> {
        let model = nervpp::model::arrange_vars(arch_ref, v)?;
        let y = nervpp::model::model_forward_tape(t, 0.6, arch_ref, &model)?;
        let tgt = t.constant(target.clone());
        loss_tape(t, y, tgt, 0.7, 0.3)
    };
    gradcheck(&params, 3, &build).unwrap()
}
