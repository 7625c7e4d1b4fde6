//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`]; nodes only reference
//! earlier nodes, so the insertion order is already a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    SubRow(Var, Var),
    MulRow(Var, Var),
    DivRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Sqrt(Var),
    Concat(Var, Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    MeanAxis(Var, usize),
    SumAxis(Var, usize),
    SumAll(Var),
    MeanAll(Var),
    SqL2Norm(Var),
    RowSqNorms(Var),
    Reshape(Var),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`, or `None` when `var` does
    /// not influence the root.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], out: &mut [f64], r: usize, s: usize, t: usize) {
    for i in 0..r {
        let out_row = &mut out[i * t..(i + 1) * t];
        for k in 0..s {
            let aik = a[i * s + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[k * t..(k + 1) * t];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn record(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = self.needs(inputs);
        let value = Tensor::new(shape, data).expect("op produced consistent shape");
        self.push(value, op, needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (r, s, t) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; r * t];
        matmul_kernel(self.value(a).data(), self.value(b).data(), &mut out, r, s, t);
        Ok(self.record(vec![r, t], out, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.record(self.shape(a).to_vec(), out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.record(self.shape(a).to_vec(), out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.record(self.shape(a).to_vec(), out, Op::Mul(a, b), &[a, b]))
    }

    fn row_broadcast(
        &self,
        op: &'static str,
        x: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        let (sx, sr) = (self.shape(x), self.shape(row));
        if sx.is_empty() || sx.len() > 2 || sr.len() != 1 || sr[0] != *sx.last().unwrap() {
            return Err(Error::dim(op, sx, sr));
        }
        let c = sr[0];
        let rv = self.value(row).data();
        Ok(self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, rv[i % c]))
            .collect())
    }

    /// `x + row` with `row` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("add_row", x, row, |a, b| a + b)?;
        Ok(self.record(self.shape(x).to_vec(), out, Op::AddRow(x, row), &[x, row]))
    }

    pub fn sub_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("sub_row", x, row, |a, b| a - b)?;
        Ok(self.record(self.shape(x).to_vec(), out, Op::SubRow(x, row), &[x, row]))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("mul_row", x, row, |a, b| a * b)?;
        Ok(self.record(self.shape(x).to_vec(), out, Op::MulRow(x, row), &[x, row]))
    }

    pub fn div_row(&mut self, x: Var, row: Var) -> Result<Var> {
        if self.value(row).data().iter().any(|&v| v == 0.0) {
            return Err(Error::Domain("div_row: division by zero".into()));
        }
        let out = self.row_broadcast("div_row", x, row, |a, b| a / b)?;
        Ok(self.record(self.shape(x).to_vec(), out, Op::DivRow(x, row), &[x, row]))
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.record(self.shape(x).to_vec(), out, op, &[x])
    }

    /// Smallest `|x|` over the inputs of every `relu` and `abs` on the tape
    /// that depend on a leaf; infinite when there are none. Finite
    /// differences with a step above this value may straddle a kink.
    pub fn kink_distance(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) | Op::Abs(x) if self.nodes[x.0].needs_grad => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, Op::Scale(x, factor), |v| v * factor)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), f64::abs)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("sqrt of a negative value".into()));
        }
        Ok(self.map(x, Op::Sqrt(x), f64::sqrt))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::dim("concat", &sa, &sb));
        }
        let (p, q) = (*sa.last().unwrap(), *sb.last().unwrap());
        let rows = if sa.len() == 2 { sa[0] } else { 1 };
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(rows * (p + q));
        for r in 0..rows {
            out.extend_from_slice(&va[r * p..(r + 1) * p]);
            out.extend_from_slice(&vb[r * q..(r + 1) * q]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = p + q;
        Ok(self.record(shape, out, Op::Concat(a, b), &[a, b]))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Domain("concat_rows of nothing".into()))?;
        let cols = self.shape(*first).get(1).copied().unwrap_or(0);
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[1] != cols {
                return Err(Error::dim("concat_rows", self.shape(*first), s));
            }
            rows += s[0];
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.record(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || start > end || end > s[0] {
            return Err(Error::dim("slice_rows", &s, &[start, end]));
        }
        let c = s[1];
        let out = self.value(x).data()[start * c..end * c].to_vec();
        Ok(self.record(vec![end - start, c], out, Op::SliceRows(x, start), &[x]))
    }

    /// Row `k` of the output is row `indices[k]` of `x`.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("gather_rows", &s, &[indices.len()]));
        }
        let c = s[1];
        let v = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= s[0] {
                return Err(Error::dim("gather_rows", &s, &[i]));
            }
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        Ok(self.record(
            vec![indices.len(), c],
            out,
            Op::GatherRows(x, indices.to_vec()),
            &[x],
        ))
    }

    /// Row `s` of the output is the mean of the rows of `x` whose segment id
    /// is `s`. Every segment must be non-empty.
    pub fn segment_mean(&mut self, x: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != segments.len() {
            return Err(Error::dim("segment_mean", &s, &[segments.len()]));
        }
        let c = s[1];
        let mut counts = vec![0usize; num_segments];
        for &g in segments {
            if g >= num_segments {
                return Err(Error::Contract(format!(
                    "segment id {g} out of range for {num_segments} segments"
                )));
            }
            counts[g] += 1;
        }
        if let Some(empty) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Domain(format!("segment {empty} is empty")));
        }
        let v = self.value(x).data();
        let mut out = vec![0.0; num_segments * c];
        for (r, &g) in segments.iter().enumerate() {
            for (o, &xv) in out[g * c..(g + 1) * c].iter_mut().zip(&v[r * c..(r + 1) * c]) {
                *o += xv;
            }
        }
        for (g, &n) in counts.iter().enumerate() {
            let inv = 1.0 / n as f64;
            out[g * c..(g + 1) * c].iter_mut().for_each(|o| *o *= inv);
        }
        Ok(self.record(
            vec![num_segments, c],
            out,
            Op::SegmentMean(x, segments.to_vec(), counts),
            &[x],
        ))
    }

    fn reduce_axis(&self, op: &'static str, x: Var, axis: usize, mean: bool) -> Result<(Vec<usize>, Vec<f64>)> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || s.len() > 2 {
            return Err(Error::dim(op, &s, &[axis]));
        }
        if s[axis] == 0 {
            return Err(Error::Domain(format!("{op}: empty reduction axis {axis}")));
        }
        let v = self.value(x).data();
        let (rows, cols) = if s.len() == 2 { (s[0], s[1]) } else { (1, s[0]) };
        // A vector is treated as a single row, so its axis 0 is the column axis.
        let reduce_rows = s.len() == 2 && axis == 0;
        let (out_shape, out) = if reduce_rows {
            let mut out = vec![0.0; cols];
            for r in 0..rows {
                for (o, &xv) in out.iter_mut().zip(&v[r * cols..(r + 1) * cols]) {
                    *o += xv;
                }
            }
            if mean {
                out.iter_mut().for_each(|o| *o /= rows as f64);
            }
            (vec![cols], out)
        } else {
            let out: Vec<f64> = (0..rows)
                .map(|r| {
                    let sum: f64 = v[r * cols..(r + 1) * cols].iter().sum();
                    if mean {
                        sum / cols as f64
                    } else {
                        sum
                    }
                })
                .collect();
            let shape = if s.len() == 2 { vec![rows] } else { vec![] };
            (shape, out)
        };
        Ok((out_shape, out))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (shape, out) = self.reduce_axis("mean_axis", x, axis, true)?;
        Ok(self.record(shape, out, Op::MeanAxis(x, axis), &[x]))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (shape, out) = self.reduce_axis("sum_axis", x, axis, false)?;
        Ok(self.record(shape, out, Op::SumAxis(x, axis), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.record(vec![], vec![total], Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let total: f64 = self.value(x).data().iter().sum();
        Ok(self.record(vec![], vec![total / n as f64], Op::MeanAll(x), &[x]))
    }

    /// Sum of squares of every element.
    pub fn sq_l2_norm(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().map(|v| v * v).sum();
        self.record(vec![], vec![total], Op::SqL2Norm(x), &[x])
    }

    /// Squared Euclidean norm of each row of a matrix.
    pub fn row_sq_norms(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("row_sq_norms", &s, &[]));
        }
        let value = self.value(x);
        let v = (0..s[0])
            .map(|r| value.row(r).iter().map(|v| v * v).sum())
            .collect();
        Ok(self.record(vec![s[0]], v, Op::RowSqNorms(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    /// Elementwise binary cross-entropy of `sigmoid(logits)` against `labels`,
    /// evaluated as `softplus(z) - y z` so no logarithm of zero is taken.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if self.value(logits).len() != labels.len() {
            return Err(Error::dim("bce_with_logits", &s, &[labels.len()]));
        }
        let out: Vec<f64> = self
            .value(logits)
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| {
                // max(z, 0) - y z, folded so that the saturated side stays exact.
                let linear = if z >= 0.0 { (1.0 - y) * z } else { -y * z };
                linear + (-z.abs()).exp().ln_1p()
            })
            .collect();
        Ok(self.record(s, out, Op::BceWithLogits(logits, labels.to_vec()), &[logits]))
    }

    /// Reverse sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|g| Tensor::new(node.value.shape().to_vec(), g).unwrap()))
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], var: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[var.0].needs_grad {
            return None;
        }
        let len = self.nodes[var.0].value.len();
        Some(grads[var.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn acc_map(&self, grads: &mut [Option<Vec<f64>>], var: Var, g: &[f64], f: impl Fn(usize, f64) -> f64) {
        if let Some(buf) = self.acc(grads, var) {
            for (i, (b, &gv)) in buf.iter_mut().zip(g).enumerate() {
                *b += f(i, gv);
            }
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (r, s, t) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let (da, db) = (va.data(), vb.data());
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..r {
                        let g_row = &g[i * t..(i + 1) * t];
                        for k in 0..s {
                            let b_row = &db[k * t..(k + 1) * t];
                            ga[i * s + k] += g_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..r {
                        let g_row = &g[i * t..(i + 1) * t];
                        for k in 0..s {
                            let aik = da[i * s + k];
                            if aik == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[k * t..(k + 1) * t].iter_mut().zip(g_row) {
                                *o += aik * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc_map(grads, *a, g, |_, gv| gv);
                self.acc_map(grads, *b, g, |_, gv| gv);
            }
            Op::Sub(a, b) => {
                self.acc_map(grads, *a, g, |_, gv| gv);
                self.acc_map(grads, *b, g, |_, gv| -gv);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.acc_map(grads, *a, g, |i, gv| gv * vb[i]);
                self.acc_map(grads, *b, g, |i, gv| gv * va[i]);
            }
            Op::AddRow(x, row) | Op::SubRow(x, row) | Op::MulRow(x, row) | Op::DivRow(x, row) => {
                let vx = self.value(*x).data();
                let vr = self.value(*row).data();
                let c = vr.len();
                let (dx, dr): (Box<dyn Fn(usize, f64) -> f64>, Box<dyn Fn(usize, f64) -> f64>) =
                    match &node.op {
                        Op::AddRow(..) => (Box::new(|_, gv| gv), Box::new(|_, gv| gv)),
                        Op::SubRow(..) => (Box::new(|_, gv| gv), Box::new(|_, gv| -gv)),
                        Op::MulRow(..) => (
                            Box::new(|i, gv| gv * vr[i % c]),
                            Box::new(|i, gv| gv * vx[i]),
                        ),
                        _ => (
                            Box::new(|i, gv| gv / vr[i % c]),
                            Box::new(|i, gv| -gv * vx[i] / (vr[i % c] * vr[i % c])),
                        ),
                    };
                self.acc_map(grads, *x, g, dx);
                if let Some(buf) = self.acc(grads, *row) {
                    for (i, &gv) in g.iter().enumerate() {
                        buf[i % c] += dr(i, gv);
                    }
                }
            }
            Op::Scale(x, f) => self.acc_map(grads, *x, g, |_, gv| gv * f),
            Op::AddScalar(x) | Op::Reshape(x) => self.acc_map(grads, *x, g, |_, gv| gv),
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                self.acc_map(grads, *x, g, |i, gv| if vx[i] > 0.0 { gv } else { 0.0 });
            }
            Op::Sigmoid(x) => self.acc_map(grads, *x, g, |i, gv| gv * out[i] * (1.0 - out[i])),
            Op::Tanh(x) => self.acc_map(grads, *x, g, |i, gv| gv * (1.0 - out[i] * out[i])),
            Op::Abs(x) => {
                let vx = self.value(*x).data();
                self.acc_map(grads, *x, g, |i, gv| {
                    if vx[i] > 0.0 {
                        gv
                    } else if vx[i] < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                });
            }
            Op::Sqrt(x) => self.acc_map(grads, *x, g, |i, gv| {
                if out[i] > 0.0 {
                    gv * 0.5 / out[i]
                } else {
                    0.0
                }
            }),
            Op::Concat(a, b) => {
                let p = self.value(*a).cols();
                let q = self.value(*b).cols();
                let w = p + q;
                if let Some(buf) = self.acc(grads, *a) {
                    for (i, v) in buf.iter_mut().enumerate() {
                        *v += g[(i / p) * w + i % p];
                    }
                }
                if let Some(buf) = self.acc(grads, *b) {
                    for (i, v) in buf.iter_mut().enumerate() {
                        *v += g[(i / q) * w + p + i % q];
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    self.acc_map(grads, p, &g[offset..offset + n], |_, gv| gv);
                    offset += n;
                }
            }
            Op::SliceRows(x, start) => {
                let c = self.value(*x).cols();
                if let Some(buf) = self.acc(grads, *x) {
                    for (b, &gv) in buf[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *b += gv;
                    }
                }
            }
            Op::GatherRows(x, indices) => {
                let c = self.value(*x).cols();
                if let Some(buf) = self.acc(grads, *x) {
                    for (k, &i) in indices.iter().enumerate() {
                        for (b, &gv) in buf[i * c..(i + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c]) {
                            *b += gv;
                        }
                    }
                }
            }
            Op::SegmentMean(x, segments, counts) => {
                let c = self.value(*x).cols();
                if let Some(buf) = self.acc(grads, *x) {
                    for (r, &s) in segments.iter().enumerate() {
                        let inv = 1.0 / counts[s] as f64;
                        for (b, &gv) in buf[r * c..(r + 1) * c].iter_mut().zip(&g[s * c..(s + 1) * c]) {
                            *b += gv * inv;
                        }
                    }
                }
            }
            Op::MeanAxis(x, axis) | Op::SumAxis(x, axis) => {
                let s = self.value(*x).shape().to_vec();
                let (rows, cols) = if s.len() == 2 { (s[0], s[1]) } else { (1, s[0]) };
                let reduce_rows = s.len() == 2 && *axis == 0;
                let mean = matches!(node.op, Op::MeanAxis(..));
                let scale = match (mean, reduce_rows) {
                    (false, _) => 1.0,
                    (true, true) => 1.0 / rows as f64,
                    (true, false) => 1.0 / cols as f64,
                };
                if let Some(buf) = self.acc(grads, *x) {
                    for (i, b) in buf.iter_mut().enumerate() {
                        let gi = if reduce_rows { g[i % cols] } else { g[i / cols] };
                        *b += gi * scale;
                    }
                }
            }
            Op::SumAll(x) | Op::MeanAll(x) => {
                let n = self.value(*x).len() as f64;
                let gv = if matches!(node.op, Op::MeanAll(_)) { g[0] / n } else { g[0] };
                if let Some(buf) = self.acc(grads, *x) {
                    buf.iter_mut().for_each(|b| *b += gv);
                }
            }
            Op::SqL2Norm(x) => {
                let vx = self.value(*x).data();
                if let Some(buf) = self.acc(grads, *x) {
                    for (b, &v) in buf.iter_mut().zip(vx) {
                        *b += 2.0 * v * g[0];
                    }
                }
            }
            Op::RowSqNorms(x) => {
                let vx = self.value(*x).data();
                let c = self.value(*x).cols();
                if let Some(buf) = self.acc(grads, *x) {
                    for (i, (b, &v)) in buf.iter_mut().zip(vx).enumerate() {
                        *b += 2.0 * v * g[i / c];
                    }
                }
            }
            Op::BceWithLogits(x, labels) => {
                let vx = self.value(*x).data();
                self.acc_map(grads, *x, g, |i, gv| gv * (sigmoid(vx[i]) - labels[i]));
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}
