//! Named parameters and fully connected layers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::invalid;
use crate::rng::Rng;
use crate::tensor::{Gradients, Tape, Tensor, Var};
use crate::{math, Error, Result};

/// A learnable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// All parameters of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Tape handles for every parameter of a store, valid for one tape.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps handles created elsewhere, in parameter registration order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(invalid!("duplicate parameter name {name}"));
        }
        let grad = vec![0.0; value.len()];
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of scalar weights.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a tracked leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.params.iter().map(|p| tape.leaf(p.value.clone())).collect())
    }

    /// Records every parameter as a constant (no gradients, e.g. inference).
    pub fn bind_constant(&self, tape: &mut Tape) -> Bound {
        Bound(self.params.iter().map(|p| tape.constant(p.value.clone())).collect())
    }

    /// Per-parameter gradient vectors extracted from a backward pass.
    pub fn gradient_vectors(&self, grads: &Gradients, bound: &Bound) -> Result<Vec<Vec<f64>>> {
        bound.0.iter().map(|&v| Ok(grads.get(v)?.into_owned())).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// `grad += scale * g` for each parameter.
    pub fn accumulate(&mut self, grads: &[Vec<f64>], scale: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::SizeMismatch { left: grads.len(), right: self.params.len() });
        }
        for (p, g) in self.params.iter_mut().zip(grads) {
            if g.len() != p.grad.len() {
                return Err(Error::SizeMismatch { left: g.len(), right: p.grad.len() });
            }
            for (a, b) in p.grad.iter_mut().zip(g) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    /// Replaces parameter values by name. Every parameter must be present
    /// with its exact shape; nothing is modified unless all entries match.
    pub fn load_named<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let entries: Vec<(&str, &Tensor)> = entries.into_iter().collect();
        let mut staged = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let (_, t) = entries
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::MissingParameter(p.name.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(Error::ParameterShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            staged.push((*t).clone());
        }
        for (p, t) in self.params.iter_mut().zip(staged) {
            p.value = t;
        }
        Ok(())
    }
}

/// Initial range of layers that emit coordinate offsets, relative to the
/// plain fan-in bound. Small offsets make the untrained model start close to
/// returning its sampled points.
pub const OFFSET_HEAD_GAIN: f64 = 0.01;

/// Uniform fan-in initialization: `U(-gain/sqrt(fan_in), gain/sqrt(fan_in))`.
pub fn uniform_fan_in(shape: Vec<usize>, fan_in: usize, gain: f64, rng: &mut Rng) -> Tensor {
    let bound = gain / math::sqrt(fan_in.max(1) as f64);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape product matches")
}

/// `y = x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Result<Self> {
        Self::with_gain(store, prefix, inputs, outputs, 1.0, rng)
    }

    pub fn with_gain(store: &mut ParamStore, prefix: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut Rng) -> Result<Self> {
        let weight = store.add(
            alloc::format!("{prefix}.weight"),
            uniform_fan_in(vec![inputs, outputs], inputs, gain, rng),
        )?;
        let bias = store.add(alloc::format!("{prefix}.bias"), uniform_fan_in(vec![1, outputs], inputs, gain, rng))?;
        Ok(Self { weight, bias, inputs, outputs })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        tape.affine(x, bound.var(self.weight), bound.var(self.bias))
    }
}

/// Fully connected stack with ReLU between layers and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims` lists the input width, hidden widths and output width.
    pub fn new(store: &mut ParamStore, prefix: &str, dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::with_output_gain(store, prefix, dims, 1.0, rng)
    }

    /// Like [`Mlp::new`] with the output layer's initial range scaled by
    /// `gain`.
    pub fn with_output_gain(store: &mut ParamStore, prefix: &str, dims: &[usize], gain: f64, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(invalid!("an MLP needs at least input and output widths"));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let g = if i == last { gain } else { 1.0 };
                Linear::with_gain(store, &alloc::format!("{prefix}.fc{}", i + 1), w[0], w[1], g, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.forward_from(tape, bound, x, 0)
    }

    /// Runs layers `start..` on an input that already went through the
    /// pre-activation of layer `start - 1`.
    pub(crate) fn forward_from(&self, tape: &mut Tape, bound: &Bound, mut x: Var, start: usize) -> Result<Var> {
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            x = layer.forward(tape, bound, x)?;
            if i + 1 < self.layers.len() {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }
}
