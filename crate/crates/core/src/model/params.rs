use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ArchConfig;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    LinearWeight,
    ConvWeight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    /// Fan-in of the owning layer, used for initialization.
    pub fan_in: usize,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearParams<T> {
    pub weight: T,
    pub bias: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams<T> {
    pub weight: T,
    pub bias: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScrbParams<T> {
    pub dw: ConvParams<T>,
    pub expand: ConvParams<T>,
    pub project: ConvParams<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockParams<T> {
    pub pre: ScrbParams<T>,
    pub ub: ConvParams<T>,
    pub post: ScrbParams<T>,
    pub skip: ConvParams<T>,
}

/// Parameter handles arranged by network topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelParams<T> {
    pub stem: [LinearParams<T>; 2],
    pub blocks: Vec<BlockParams<T>>,
    pub head: ConvParams<T>,
}

impl<T: Copy> ConvParams<T> {
    fn map<U>(&self, f: &impl Fn(T) -> U) -> ConvParams<U> {
        ConvParams {
            weight: f(self.weight),
            bias: f(self.bias),
        }
    }
}

impl<T: Copy> ScrbParams<T> {
    fn map<U>(&self, f: &impl Fn(T) -> U) -> ScrbParams<U> {
        ScrbParams {
            dw: self.dw.map(f),
            expand: self.expand.map(f),
            project: self.project.map(f),
        }
    }
}

impl<T: Copy> ModelParams<T> {
    pub fn map<U>(&self, f: impl Fn(T) -> U) -> ModelParams<U> {
        let lin = |l: &LinearParams<T>| LinearParams {
            weight: f(l.weight),
            bias: f(l.bias),
        };
        ModelParams {
            stem: [lin(&self.stem[0]), lin(&self.stem[1])],
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    pre: b.pre.map(&f),
                    ub: b.ub.map(&f),
                    post: b.post.map(&f),
                    skip: b.skip.map(&f),
                })
                .collect(),
            head: self.head.map(&f),
        }
    }
}

#[derive(Default)]
struct LayoutBuilder {
    specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: ParamKind, fan_in: usize) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape,
            kind,
            fan_in,
        });
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, fin: usize, fout: usize) -> LinearParams<usize> {
        LinearParams {
            weight: self.push(format!("{name}.weight"), vec![fout, fin], ParamKind::LinearWeight, fin),
            bias: self.push(format!("{name}.bias"), vec![fout], ParamKind::Bias, fin),
        }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, groups: usize) -> ConvParams<usize> {
        let fan_in = cin / groups * k * k;
        ConvParams {
            weight: self.push(format!("{name}.weight"), vec![cout, cin / groups, k, k], ParamKind::ConvWeight, fan_in),
            bias: self.push(format!("{name}.bias"), vec![cout], ParamKind::Bias, fan_in),
        }
    }

    fn scrb(&mut self, name: &str, c: usize, k: usize, e: usize) -> ScrbParams<usize> {
        ScrbParams {
            dw: self.conv(&format!("{name}.dw"), c, c, k, c),
            expand: self.conv(&format!("{name}.expand"), c, e * c, 1, 1),
            project: self.conv(&format!("{name}.project"), e * c, c, 1, 1),
        }
    }
}

/// Parameter specs in serialization order plus their topological layout.
///
/// Order: stem, then each block (pre-SCRB, UB, post-SCRB, skip), then head;
/// weight before bias within a layer.
pub(crate) fn layout(config: &ArchConfig) -> (Vec<ParamSpec>, ModelParams<usize>) {
    let mut b = LayoutBuilder::default();
    let (h0, w0) = config.base_grid;
    let stem = [
        b.linear("stem.0", config.pe_dim(), config.stem_hidden),
        b.linear("stem.1", config.stem_hidden, config.base_channels * h0 * w0),
    ];
    let mut cin = config.base_channels;
    let mut blocks = Vec::with_capacity(config.blocks.len());
    for (i, spec) in config.blocks.iter().enumerate() {
        let cout = spec.out_channels;
        let s = spec.stride;
        blocks.push(BlockParams {
            pre: b.scrb(&format!("blocks.{i}.pre"), cin, spec.dw_kernel, spec.expansion),
            ub: b.conv(&format!("blocks.{i}.ub"), cin, cout * s * s, 3, 1),
            post: b.scrb(&format!("blocks.{i}.post"), cout, spec.dw_kernel, config.post_expansion(spec)),
            skip: b.conv(&format!("blocks.{i}.skip"), cin, cout, 1, 1),
        });
        cin = cout;
    }
    let head = b.conv("head", cin, 3, config.head_kernel, 1);
    (
        b.specs,
        ModelParams {
            stem,
            blocks,
            head,
        },
    )
}

/// Named parameter tensors in deterministic topology order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    specs: Vec<ParamSpec>,
    tensors: Vec<Tensor>,
}

impl ParameterStore {
    /// Builds a store for `config` from tensors given in layout order.
    pub fn from_tensors(config: &ArchConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let (specs, _) = layout(config);
        if specs.len() != tensors.len() {
            return Err(Error::Config(format!(
                "architecture has {} parameter tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if spec.shape != t.shape() {
                return Err(Error::shape(format!(
                    "{}: expected {:?}, got {:?}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )));
            }
        }
        Ok(Self { specs, tensors })
    }

    pub fn zeros(config: &ArchConfig) -> Self {
        let (specs, _) = layout(config);
        let tensors = specs.iter().map(|s| Tensor::zeros(&s.shape)).collect();
        Self { specs, tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamSpec, &Tensor)> {
        self.specs.iter().zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.specs.iter().position(|s| s.name == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.specs.iter().position(|s| s.name == name).map(|i| &mut self.tensors[i])
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter on `tape` and returns the handles in layout order.
    pub fn register(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), requires_grad)).collect()
    }
}

/// Kaiming-uniform fan-in initialization: weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// biases zero. Seeded, so identical seeds give identical stores.
pub fn init_params(config: &ArchConfig, seed: u64) -> Result<ParameterStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (specs, _) = layout(config);
    let tensors = specs
        .iter()
        .map(|spec| match spec.kind {
            ParamKind::Bias => Tensor::zeros(&spec.shape),
            ParamKind::ConvWeight | ParamKind::LinearWeight => {
                let bound = 1.0 / (spec.fan_in as f64).sqrt();
                let data = (0..spec.numel()).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor::new(&spec.shape, data).expect("spec shape")
            }
        })
        .collect();
    Ok(ParameterStore { specs, tensors })
}
