use super::kernels::{self, Conv2dGeom};
use super::{nchw, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Tanh(Var),
    Sin(Var),
    Cos(Var),
    Abs(Var),
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Conv2dGeom,
    },
    PixelShuffle {
        x: Var,
        r: usize,
    },
    Bilinear {
        x: Var,
        s: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of executed ops.
///
/// Nodes are stored in execution order, so every node sits after all of its
/// inputs and reverse iteration is a valid backward schedule. A tape is used
/// for one forward/backward step and consumed by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a `requires_grad` leaf, `None` if it did not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf tensor. Gradients are only produced for leaves with
    /// `requires_grad` set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape(), data)?;
        self.push(value, op, &[a, b], name)
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let value = self.value(a).map(f);
        self.push(value, op, &[a], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "add_scalar", |x| x + c, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "mul_scalar", |x| x * c, Op::MulScalar(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sin", f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "cos", f64::cos, Op::Cos(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "abs", f64::abs, Op::Abs(a))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "gelu", kernels::gelu, Op::Gelu(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a), &[a], "mean")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.push(value, Op::Reshape(a), &[a], "reshape")
    }

    /// `x · Wᵀ + b` for `x: [rows, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (rows, fin) = match *self.shape(x) {
            [f] => (1, f),
            [r, f] => (r, f),
            ref s => return Err(Error::shape(format!("linear input must be 1-D or 2-D, got {s:?}"))),
        };
        let fout = match *self.shape(w) {
            [o, i] if i == fin => o,
            ref s => {
                return Err(Error::shape(format!(
                    "linear weight {s:?} incompatible with {fin} input features"
                )))
            }
        };
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(Error::shape(format!("linear bias {:?}, expected [{fout}]", self.shape(b))));
            }
        }
        let y = kernels::linear_forward(
            rows,
            fin,
            fout,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let shape: Vec<usize> = if self.shape(x).len() == 1 { vec![fout] } else { vec![rows, fout] };
        let value = Tensor::new(&shape, y)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(value, Op::Linear { x, w, b }, &inputs, "linear")
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize, groups: usize) -> Result<Var> {
        let (n, cin, h, wd) = nchw(self.shape(x), "conv2d input")?;
        let (cout, cin_g, kh, kw) = nchw(self.shape(w), "conv2d weight")?;
        let geom = Conv2dGeom {
            n,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            padding,
            groups,
        };
        geom.validate()?;
        if cin_g * groups != cin {
            return Err(Error::shape(format!(
                "conv2d weight expects {} input channels per group, input has {cin} over {groups} groups",
                cin_g
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape(format!("conv2d bias {:?}, expected [{cout}]", self.shape(b))));
            }
        }
        let out = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(&[n, cout, geom.out_h(), geom.out_w()], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(value, Op::Conv2d { x, w, b, geom }, &inputs, "conv2d")
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let (n, c, h, w) = nchw(self.shape(x), "pixel_shuffle")?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::shape(format!("pixel_shuffle: {c} channels not divisible by r²={}", r * r)));
        }
        let out = kernels::pixel_shuffle_forward(n, c, h, w, r, self.value(x).data());
        let value = Tensor::new(&[n, c / (r * r), h * r, w * r], out)?;
        self.push(value, Op::PixelShuffle { x, r }, &[x], "pixel_shuffle")
    }

    pub fn bilinear_resize(&mut self, x: Var, s: usize) -> Result<Var> {
        let (n, c, h, w) = nchw(self.shape(x), "bilinear_resize")?;
        if s == 0 {
            return Err(Error::invalid("bilinear_resize scale must be >= 1"));
        }
        let out = kernels::bilinear_forward(n * c, h, w, s, self.value(x).data());
        let value = Tensor::new(&[n, c, h * s, w * s], out)?;
        self.push(value, Op::Bilinear { x, s }, &[x], "bilinear_resize")
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate by summation
    /// over fan-out; each node is visited once.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("backward on an empty tape"));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
        }

        let grads = self
            .nodes
            .into_iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad, g) {
                (Op::Leaf, true, Some(g)) => Some(Tensor::new(node.value.shape(), g).expect("grad shape")),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut accum = |v: Var, contrib: Vec<f64>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contrib),
        };
        let zip_map = |a: &[f64], f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { g.iter().zip(a).map(|(&gi, &ai)| f(gi, ai)).collect() };

        match self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs(a) {
                    accum(a, g.to_vec());
                }
                if needs(b) {
                    accum(b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    accum(a, g.to_vec());
                }
                if needs(b) {
                    accum(b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    accum(a, zip_map(val(b), &|gi, bi| gi * bi));
                }
                if needs(b) {
                    accum(b, zip_map(val(a), &|gi, ai| gi * ai));
                }
            }
            Op::Div(a, b) => {
                if needs(a) {
                    accum(a, zip_map(val(b), &|gi, bi| gi / bi));
                }
                if needs(b) {
                    let out = self.nodes[idx].value.data();
                    let gb = g
                        .iter()
                        .zip(out)
                        .zip(val(b))
                        .map(|((&gi, &oi), &bi)| -gi * oi / bi)
                        .collect();
                    accum(b, gb);
                }
            }
            Op::AddScalar(a) => accum(a, g.to_vec()),
            Op::MulScalar(a, c) => accum(a, g.iter().map(|v| v * c).collect()),
            Op::Tanh(a) => {
                let out = self.nodes[idx].value.data();
                accum(a, zip_map(out, &|gi, yi| gi * (1.0 - yi * yi)));
            }
            Op::Sin(a) => accum(a, zip_map(val(a), &|gi, xi| gi * xi.cos())),
            Op::Cos(a) => accum(a, zip_map(val(a), &|gi, xi| -gi * xi.sin())),
            Op::Abs(a) => accum(a, zip_map(val(a), &|gi, xi| gi * sign(xi))),
            Op::Gelu(a) => accum(a, zip_map(val(a), &|gi, xi| gi * kernels::gelu_grad(xi))),
            Op::Sum(a) => accum(a, vec![g[0]; val(a).len()]),
            Op::Mean(a) => {
                let n = val(a).len();
                accum(a, vec![g[0] / n as f64; n]);
            }
            Op::Reshape(a) => accum(a, g.to_vec()),
            Op::Linear { x, w, b } => {
                let xs = self.nodes[x.0].value.shape();
                let (rows, fin) = if xs.len() == 1 { (1, xs[0]) } else { (xs[0], xs[1]) };
                let fout = self.nodes[w.0].value.shape()[0];
                let (xd, wd) = (val(x), val(w));
                if needs(x) {
                    let mut gx = vec![0.0; rows * fin];
                    for r in 0..rows {
                        for o in 0..fout {
                            let go = g[r * fout + o];
                            for i in 0..fin {
                                gx[r * fin + i] += go * wd[o * fin + i];
                            }
                        }
                    }
                    accum(x, gx);
                }
                if needs(w) {
                    let mut gw = vec![0.0; fout * fin];
                    for r in 0..rows {
                        for o in 0..fout {
                            let go = g[r * fout + o];
                            for i in 0..fin {
                                gw[o * fin + i] += go * xd[r * fin + i];
                            }
                        }
                    }
                    accum(w, gw);
                }
                if let Some(b) = b.filter(|&b| needs(b)) {
                    let mut gb = vec![0.0; fout];
                    for r in 0..rows {
                        for o in 0..fout {
                            gb[o] += g[r * fout + o];
                        }
                    }
                    accum(b, gb);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let (gi, gw, gb) = kernels::conv2d_backward(&geom, val(x), val(w), g, needs(x), needs(w));
                if let Some(gi) = gi {
                    accum(x, gi);
                }
                if let Some(gw) = gw {
                    accum(w, gw);
                }
                if let Some(b) = b.filter(|&b| needs(b)) {
                    accum(b, gb);
                }
            }
            Op::PixelShuffle { x, r } => {
                let s = self.nodes[x.0].value.shape();
                accum(x, kernels::pixel_unshuffle(s[0], s[1], s[2], s[3], r, g));
            }
            Op::Bilinear { x, s } => {
                let sh = self.nodes[x.0].value.shape();
                accum(x, kernels::bilinear_backward(sh[0] * sh[1], sh[2], sh[3], s, g));
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
