//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! are methods on the tape that take [`Var`] handles and return a new handle;
//! [`Tape::backward`] walks the records in reverse and returns the adjoint of
//! every tracked node. Tensors are viewed as row-major matrices whose column
//! count is the last dimension, which is all the model needs.

pub mod check;
mod kernels;

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use crate::{math, Error, Result};

pub use check::{finite_difference_check, finite_difference_check_many, relative_error};

/// A dense, row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                detail: alloc::format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last dimension (1 for rank-0 shapes).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of all leading dimensions.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            n => self.shape[..n - 1].iter().product(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Vec<usize>),
    /// `argmax[g * cols + c]` is the input row that won group `g`, column `c`.
    SegmentMax(Var, Vec<usize>),
    Broadcast(Var),
    SliceRows(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The record of one forward computation.
///
/// Nodes are stored in creation order, so every input precedes its output and
/// a single reverse sweep visits each record once.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, detail: alloc::string::String) -> Error {
    Error::ShapeMismatch { op, detail }
}

fn finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op))
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

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(Error::UnknownNode(v.0))
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sa != sb {
            return Err(mismatch(op, alloc::format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let out = finite(op, Tensor { shape: va.shape.clone(), data })?;
        Ok(self.record(out, rec, &[a, b]))
    }

    fn map(&mut self, op: &'static str, a: Var, f: impl Fn(f64) -> f64, rec: Op) -> Result<Var> {
        let va = &self.node(a)?.value;
        let data = va.data.iter().map(|&x| f(x)).collect();
        let out = finite(op, Tensor { shape: va.shape.clone(), data })?;
        Ok(self.record(out, rec, &[a]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, |x| x * c, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map("exp", a, math::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map("square", a, |x| x * x, Op::Square(a))
    }

    /// Element-wise square root; negative inputs are rejected.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.node(a)?.value.data.iter().any(|&x| x < 0.0) {
            return Err(Error::NonFinite("sqrt"));
        }
        self.map("sqrt", a, math::sqrt, Op::Sqrt(a))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.node(a)?.value.data.iter().sum();
        let out = finite("sum", Tensor::scalar(s))?;
        Ok(self.record(out, Op::Sum(a), &[a]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.node(a)?.value;
        if v.is_empty() {
            return Err(Error::Empty("mean"));
        }
        let m = v.data.iter().sum::<f64>() / v.len() as f64;
        let out = finite("mean", Tensor::scalar(m))?;
        Ok(self.record(out, Op::Mean(a), &[a]))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        if va.shape.len() != 2 || vb.shape.len() != 2 || va.shape[1] != vb.shape[0] {
            return Err(mismatch("matmul", alloc::format!("{:?} x {:?}", va.shape, vb.shape)));
        }
        let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul(&va.data, &vb.data, &mut out, m, k, n);
        let out = finite("matmul", Tensor { shape: vec![m, n], data: out })?;
        Ok(self.record(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Concatenates 2-D tensors along their last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat"))?;
        let rows = self.node(*first)?.value.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = &self.node(p)?.value;
            if v.shape.len() != 2 || v.rows() != rows {
                return Err(mismatch("concat", alloc::format!("part {:?} vs {} rows", v.shape, rows)));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].value.data[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor { shape: vec![rows, total], data };
        Ok(self.record(out, Op::Concat(parts.to_vec()), parts))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let v = &self.node(a)?.value;
        if v.shape.len() != 2 {
            return Err(mismatch("gather_rows", alloc::format!("expected a matrix, got {:?}", v.shape)));
        }
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(Error::IndexOutOfBounds { index: i, len: rows });
            }
            data.extend_from_slice(&v.data[i * cols..(i + 1) * cols]);
        }
        let out = Tensor { shape: vec![indices.len(), cols], data };
        Ok(self.record(out, Op::GatherRows(a, indices.to_vec()), &[a]))
    }

    /// Element-wise maximum over the rows assigned to each of `groups` segments.
    ///
    /// Ties go to the lowest row index, which is also where the gradient is routed.
    pub fn segment_max(&mut self, a: Var, segments: &[usize], groups: usize) -> Result<Var> {
        let v = &self.node(a)?.value;
        if v.shape.len() != 2 || v.rows() != segments.len() {
            return Err(mismatch(
                "segment_max",
                alloc::format!("{:?} with {} segment ids", v.shape, segments.len()),
            ));
        }
        let cols = v.cols();
        let mut data = vec![f64::NEG_INFINITY; groups * cols];
        let mut argmax = vec![usize::MAX; groups * cols];
        for (r, &g) in segments.iter().enumerate() {
            if g >= groups {
                return Err(Error::IndexOutOfBounds { index: g, len: groups });
            }
            let row = &v.data[r * cols..(r + 1) * cols];
            let best = &mut data[g * cols..(g + 1) * cols];
            let arg = &mut argmax[g * cols..(g + 1) * cols];
            for c in 0..cols {
                if arg[c] == usize::MAX || row[c] > best[c] {
                    best[c] = row[c];
                    arg[c] = r;
                }
            }
        }
        if let Some(pos) = argmax.iter().position(|&r| r == usize::MAX) {
            return Err(Error::EmptySegment(pos / cols.max(1)));
        }
        let out = Tensor { shape: vec![groups, cols], data };
        Ok(self.record(out, Op::SegmentMax(a, argmax), &[a]))
    }

    /// Broadcasts a `[1 | rows, 1 | cols]` matrix to `[rows, cols]`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = &self.node(a)?.value;
        let (r, c) = (v.rows(), v.cols());
        if v.shape.len() > 2 || !(r == 1 || r == rows) || !(c == 1 || c == cols) {
            return Err(mismatch("broadcast", alloc::format!("{:?} to [{}, {}]", v.shape, rows, cols)));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let src = if r == 1 { 0 } else { i };
            if c == 1 {
                let x = v.data[src];
                data.extend(core::iter::repeat_n(x, cols));
            } else {
                data.extend_from_slice(&v.data[src * c..(src + 1) * c]);
            }
        }
        let out = Tensor { shape: vec![rows, cols], data };
        Ok(self.record(out, Op::Broadcast(a), &[a]))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = &self.node(a)?.value;
        if v.shape.len() != 2 || start > end || end > v.rows() {
            return Err(mismatch("slice_rows", alloc::format!("{}..{} of {:?}", start, end, v.shape)));
        }
        let cols = v.cols();
        let data = v.data[start * cols..end * cols].to_vec();
        let out = Tensor { shape: vec![end - start, cols], data };
        Ok(self.record(out, Op::SliceRows(a, start), &[a]))
    }

    /// `x W + b` for a `[rows, in]` input, `[in, out]` weight and `[1, out]` bias.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        let (rows, cols) = (self.value(xw).rows(), self.value(xw).cols());
        let bb = self.broadcast(b, rows, cols)?;
        self.add(xw, bb)
    }

    /// `a + c + b` with a `[1, cols]` bias `b` broadcast over rows.
    pub fn affine_add(&mut self, a: Var, c: Var, b: Var) -> Result<Var> {
        let s = self.add(a, c)?;
        let (rows, cols) = (self.value(s).rows(), self.value(s).cols());
        let bb = self.broadcast(b, rows, cols)?;
        self.add(s, bb)
    }

    /// Per-row sum over the last axis, `[rows, cols] -> [rows, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let cols = self.node(a)?.value.cols();
        let ones = self.constant(Tensor::filled(vec![cols, 1], 1.0));
        self.matmul(a, ones)
    }

    /// Adjoints of `root` with respect to every tracked node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_node = self.node(root)?;
        if root_node.value.len() != 1 {
            return Err(Error::NonScalarRoot(root_node.value.len()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if root_node.requires_grad {
            grads[root.0] = Some(vec![1.0]);
        }
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, lens: shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |buf| axpy(buf, 1.0, g));
                self.accumulate(grads, *b, |buf| axpy(buf, 1.0, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |buf| axpy(buf, 1.0, g));
                self.accumulate(grads, *b, |buf| axpy(buf, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                self.accumulate(grads, *a, |buf| {
                    for ((o, gi), y) in buf.iter_mut().zip(g).zip(&vb.data) {
                        *o += gi * y;
                    }
                });
                self.accumulate(grads, *b, |buf| {
                    for ((o, gi), x) in buf.iter_mut().zip(g).zip(&va.data) {
                        *o += gi * x;
                    }
                });
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |buf| axpy(buf, *c, g)),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
                self.accumulate(grads, *a, |buf| kernels::matmul_nt_acc(g, &vb.data, buf, m, n, k));
                self.accumulate(grads, *b, |buf| kernels::matmul_tn_acc(&va.data, g, buf, m, k, n));
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    self.accumulate(grads, p, |buf| {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            axpy(&mut buf[r * w..(r + 1) * w], 1.0, src);
                        }
                    });
                    offset += w;
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                self.accumulate(grads, *a, |buf| {
                    for ((o, gi), xi) in buf.iter_mut().zip(g).zip(&x.data) {
                        if *xi > 0.0 {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => self.accumulate(grads, *a, |buf| {
                for ((o, gi), y) in buf.iter_mut().zip(g).zip(&node.value.data) {
                    *o += gi * y * (1.0 - y);
                }
            }),
            Op::Exp(a) => self.accumulate(grads, *a, |buf| {
                for ((o, gi), y) in buf.iter_mut().zip(g).zip(&node.value.data) {
                    *o += gi * y;
                }
            }),
            Op::Square(a) => {
                let x = val(*a);
                self.accumulate(grads, *a, |buf| {
                    for ((o, gi), xi) in buf.iter_mut().zip(g).zip(&x.data) {
                        *o += 2.0 * xi * gi;
                    }
                });
            }
            // d sqrt(x) at x = 0 is taken as 0.
            Op::Sqrt(a) => self.accumulate(grads, *a, |buf| {
                for ((o, gi), y) in buf.iter_mut().zip(g).zip(&node.value.data) {
                    if *y > 0.0 {
                        *o += gi * 0.5 / y;
                    }
                }
            }),
            Op::Sum(a) => self.accumulate(grads, *a, |buf| buf.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                self.accumulate(grads, *a, |buf| buf.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::GatherRows(a, idx) => {
                let cols = node.value.cols();
                self.accumulate(grads, *a, |buf| {
                    for (r, &i) in idx.iter().enumerate() {
                        axpy(&mut buf[i * cols..(i + 1) * cols], 1.0, &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::SegmentMax(a, argmax) => {
                let cols = node.value.cols();
                self.accumulate(grads, *a, |buf| {
                    for (pos, &r) in argmax.iter().enumerate() {
                        buf[r * cols + pos % cols] += g[pos];
                    }
                });
            }
            Op::Broadcast(a) => {
                let x = val(*a);
                let (r, c) = (x.rows(), x.cols());
                let (rows, cols) = (node.value.rows(), node.value.cols());
                self.accumulate(grads, *a, |buf| {
                    for i in 0..rows {
                        let dst = if r == 1 { 0 } else { i };
                        let src = &g[i * cols..(i + 1) * cols];
                        if c == 1 {
                            buf[dst] += src.iter().sum::<f64>();
                        } else {
                            axpy(&mut buf[dst * c..(dst + 1) * c], 1.0, src);
                        }
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let cols = node.value.cols();
                self.accumulate(grads, *a, |buf| axpy(&mut buf[start * cols..start * cols + g.len()], 1.0, g));
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(buf);
    }
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros when `v` did not
    /// influence the root.
    pub fn get(&self, v: Var) -> Result<Cow<'_, [f64]>> {
        let len = *self.lens.get(v.0).ok_or(Error::UnknownNode(v.0))?;
        Ok(match &self.grads[v.0] {
            Some(g) => Cow::Borrowed(g.as_slice()),
            None => Cow::Owned(vec![0.0; len]),
        })
    }

    /// Like [`Gradients::get`] but `None` for nodes no gradient reached.
    pub fn get_raw(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
