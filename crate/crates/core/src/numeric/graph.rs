//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Parents always sit at lower
//! indices than their children, so the arena order is a topological order and
//! backpropagation is a single reverse sweep.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Softmax(NodeId, usize),
    Concat(NodeId, NodeId, usize),
    StackRows(Vec<NodeId>),
    Sum(NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    Row(NodeId, usize),
    AddRow(NodeId, NodeId),
    Im2Col(NodeId, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Computation graph for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn require_matrix(&self, op: &'static str, id: NodeId) -> Result<()> {
        if self.value(id).is_matrix() {
            Ok(())
        } else {
            Err(Error::Dimension {
                op,
                left: self.shape(id).to_vec(),
                right: vec![],
            })
        }
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(Error::Dimension {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            })
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_matrix("matmul", a)?;
        self.require_matrix("matmul", b)?;
        if self.value(a).cols() != self.value(b).rows() {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let v = self.value(a).matmul_raw(self.value(b));
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul_elementwise", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(a).map(f);
        let ng = self.needs(&[a]);
        self.push(v, op, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    /// Softmax of a matrix along `axis` (0: down each column, 1: along each row).
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.require_matrix("softmax", a)?;
        if axis > 1 {
            return Err(Error::contract(format!("softmax axis {axis} out of range")));
        }
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        let mut out = x.data().to_vec();
        let (outer, inner, stride_outer, stride_inner) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
        for o in 0..outer {
            let idx = |i: usize| o * stride_outer + i * stride_inner;
            let m = (0..inner).map(|i| out[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for i in 0..inner {
                let e = (out[idx(i)] - m).exp();
                out[idx(i)] = e;
                s += e;
            }
            for i in 0..inner {
                out[idx(i)] /= s;
            }
        }
        let v = Tensor::matrix(r, c, out);
        let ng = self.needs(&[a]);
        Ok(self.push(v, Op::Softmax(a, axis), ng))
    }

    /// Concatenates two matrices along `axis` (0: stack rows, 1: join columns).
    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        self.require_matrix("concat", a)?;
        self.require_matrix("concat", b)?;
        let (x, y) = (self.value(a), self.value(b));
        let v = match axis {
            0 if x.cols() == y.cols() => {
                let mut d = x.data().to_vec();
                d.extend_from_slice(y.data());
                Tensor::matrix(x.rows() + y.rows(), x.cols(), d)
            }
            1 if x.rows() == y.rows() => {
                let mut d = Vec::with_capacity(x.numel() + y.numel());
                for r in 0..x.rows() {
                    d.extend_from_slice(x.row(r));
                    d.extend_from_slice(y.row(r));
                }
                Tensor::matrix(x.rows(), x.cols() + y.cols(), d)
            }
            0 | 1 => {
                return Err(Error::Dimension {
                    op: "concat",
                    left: x.shape().to_vec(),
                    right: y.shape().to_vec(),
                })
            }
            _ => return Err(Error::contract(format!("concat axis {axis} out of range"))),
        };
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, Op::Concat(a, b, axis), ng))
    }

    /// Stacks `1 x n` rows into a `k x n` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = *rows
            .first()
            .ok_or_else(|| Error::contract("stack_rows needs at least one row"))?;
        let n = self.value(first).numel();
        let mut d = Vec::with_capacity(n * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.rows() != 1 || t.numel() != n {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    left: self.shape(first).to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            d.extend_from_slice(t.data());
        }
        let v = Tensor::matrix(rows.len(), n, d);
        let ng = self.needs(rows);
        Ok(self.push(v, Op::StackRows(rows.to_vec()), ng))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let ng = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.require_matrix("transpose", a)?;
        let v = self.value(a).transpose();
        let ng = self.needs(&[a]);
        Ok(self.push(v, Op::Transpose(a), ng))
    }

    /// Row `i` of a matrix as a `1 x cols` matrix.
    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        self.require_matrix("row", a)?;
        let x = self.value(a);
        if i >= x.rows() {
            return Err(Error::contract(format!("row {i} out of range for {:?}", x.shape())));
        }
        let v = Tensor::row_vector(x.row(i).to_vec());
        let ng = self.needs(&[a]);
        Ok(self.push(v, Op::Row(a, i), ng))
    }

    /// Adds the `1 x c` row `b` to every row of the `r x c` matrix `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_matrix("add_row", a)?;
        let (x, y) = (self.value(a), self.value(b));
        if y.shape() != [1, x.cols()] {
            return Err(Error::Dimension {
                op: "add_row",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let c = x.cols();
        let mut d = x.data().to_vec();
        for (i, v) in d.iter_mut().enumerate() {
            *v += y.data()[i % c];
        }
        let v = Tensor::matrix(x.rows(), c, d);
        let ng = self.needs(&[a, b]);
        Ok(self.push(v, Op::AddRow(a, b), ng))
    }

    /// Unfolds a `t x d` sequence into `t x (width*d)` windows centred on each
    /// row, zero-padded at both ends (same padding). Left padding is
    /// `(width-1)/2`.
    pub fn im2col(&mut self, a: NodeId, width: usize) -> Result<NodeId> {
        self.require_matrix("im2col", a)?;
        if width == 0 {
            return Err(Error::contract("kernel width must be >= 1"));
        }
        let x = self.value(a);
        let (t, d) = (x.rows(), x.cols());
        let left = (width - 1) / 2;
        let mut out = vec![0.0; t * width * d];
        for pos in 0..t {
            for k in 0..width {
                let src = pos as isize + k as isize - left as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let dst = pos * width * d + k * d;
                out[dst..dst + d].copy_from_slice(x.row(src as usize));
            }
        }
        let v = Tensor::matrix(t, width * d, out);
        let ng = self.needs(&[a]);
        Ok(self.push(v, Op::Im2Col(a, width), ng))
    }

    /// Gradient accumulated at `id` by the last [`Graph::backward`] call.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient at `id`, or zeros when nothing flowed into it.
    pub fn grad_or_zero(&self, id: NodeId) -> Tensor {
        self.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(self.shape(id)))
    }

    fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Backpropagates from the scalar `root`. Previous gradients are cleared
    /// first. Returns the gradients of every differentiable leaf, in node order.
    pub fn backward(&mut self, root: NodeId) -> Result<Vec<(NodeId, Tensor)>> {
        if self.value(root).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(self.shape(root), 1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let needs = |id: NodeId| self.nodes[id.0].needs_grad;
            let val = |id: NodeId| &self.nodes[id.0].value;
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        let ga = g.matmul_raw(&val(*b).transpose());
                        Self::accumulate(&mut grads, *a, ga);
                    }
                    if needs(*b) {
                        let gb = val(*a).transpose().matmul_raw(&g);
                        Self::accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if needs(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        Self::accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        Self::accumulate(&mut grads, *b, g.map(|x| -x));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        Self::accumulate(&mut grads, *a, g.zip_map(val(*b), |x, y| x * y));
                    }
                    if needs(*b) {
                        Self::accumulate(&mut grads, *b, g.zip_map(val(*a), |x, y| x * y));
                    }
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |g, y| g * (1.0 - y * y));
                    Self::accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |g, y| g * y * (1.0 - y));
                    Self::accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    Self::accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(val(*a), |g, x| g * sigmoid(x));
                    Self::accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    Self::accumulate(&mut grads, *a, g.map(|x| x * c));
                }
                Op::Softmax(a, axis) => {
                    let y = &node.value;
                    let (r, c) = (y.rows(), y.cols());
                    let mut ga = vec![0.0; r * c];
                    let (outer, inner, so, si) = if *axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                    for o in 0..outer {
                        let idx = |i: usize| o * so + i * si;
                        let dot: f64 = (0..inner).map(|i| g.data()[idx(i)] * y.data()[idx(i)]).sum();
                        for i in 0..inner {
                            ga[idx(i)] = y.data()[idx(i)] * (g.data()[idx(i)] - dot);
                        }
                    }
                    Self::accumulate(&mut grads, *a, Tensor::matrix(r, c, ga));
                }
                Op::Concat(a, b, axis) => {
                    let (xa, xb) = (val(*a), val(*b));
                    let (ga, gb) = if *axis == 0 {
                        let split = xa.numel();
                        (
                            Tensor::matrix(xa.rows(), xa.cols(), g.data()[..split].to_vec()),
                            Tensor::matrix(xb.rows(), xb.cols(), g.data()[split..].to_vec()),
                        )
                    } else {
                        let (ca, cb) = (xa.cols(), xb.cols());
                        let mut da = Vec::with_capacity(xa.numel());
                        let mut db = Vec::with_capacity(xb.numel());
                        for r in 0..xa.rows() {
                            let row = g.row(r);
                            da.extend_from_slice(&row[..ca]);
                            db.extend_from_slice(&row[ca..]);
                        }
                        (Tensor::matrix(xa.rows(), ca, da), Tensor::matrix(xb.rows(), cb, db))
                    };
                    if needs(*a) {
                        Self::accumulate(&mut grads, *a, ga);
                    }
                    if needs(*b) {
                        Self::accumulate(&mut grads, *b, gb);
                    }
                }
                Op::StackRows(rows) => {
                    let rows = rows.clone();
                    for (k, r) in rows.into_iter().enumerate() {
                        if needs(r) {
                            let shape = self.nodes[r.0].value.shape().to_vec();
                            let gr = Tensor::new(shape, g.row(k).to_vec())?;
                            Self::accumulate(&mut grads, r, gr);
                        }
                    }
                }
                Op::Sum(a) => {
                    let s = g.item();
                    Self::accumulate(&mut grads, *a, Tensor::full(val(*a).shape(), s));
                }
                Op::Transpose(a) => {
                    Self::accumulate(&mut grads, *a, g.transpose());
                }
                Op::Row(a, i) => {
                    let x = val(*a);
                    let mut ga = Tensor::zeros(x.shape());
                    let c = x.cols();
                    ga.data_mut()[i * c..(i + 1) * c].copy_from_slice(g.data());
                    Self::accumulate(&mut grads, *a, ga);
                }
                Op::AddRow(a, b) => {
                    if needs(*b) {
                        let c = g.cols();
                        let mut gb = vec![0.0; c];
                        for (i, v) in g.data().iter().enumerate() {
                            gb[i % c] += v;
                        }
                        Self::accumulate(&mut grads, *b, Tensor::row_vector(gb));
                    }
                    if needs(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Im2Col(a, width) => {
                    let x = val(*a);
                    let (t, d) = (x.rows(), x.cols());
                    let left = (width - 1) / 2;
                    let mut ga = vec![0.0; t * d];
                    for pos in 0..t {
                        for k in 0..*width {
                            let src = pos as isize + k as isize - left as isize;
                            if src < 0 || src >= t as isize {
                                continue;
                            }
                            let from = pos * width * d + k * d;
                            let to = src as usize * d;
                            for j in 0..d {
                                ga[to + j] += g.data()[from + j];
                            }
                        }
                    }
                    Self::accumulate(&mut grads, *a, Tensor::matrix(t, d, ga));
                }
            }
            grads[i] = Some(g);
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| matches!(n.op, Op::Leaf) && grads[*i].is_some())
            .map(|(i, _)| (NodeId(i), grads[i].clone().expect("filtered")))
            .collect();
        self.grads = grads;
        Ok(leaves)
    }
}
