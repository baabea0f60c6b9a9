//! Dynamic reverse-mode tape.
//!
//! Every forward op appends a node holding its output value and the parent
//! ids its backward rule needs. Node ids are assigned in creation order, so
//! the tape is topologically sorted by construction and backward is a single
//! reverse sweep.

use std::cell::{Ref, RefCell};
use std::ops::{Add, Mul, Neg, Sub};

use super::tensor::{matmul, matmul_at, matmul_bt, Tensor};
use crate::error::{Error, Result};

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Transpose(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Softplus(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    MeanRows(usize),
    LogSoftmax(usize),
    Softmax(usize),
    SelectRows(usize, Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize, usize),
    ConcatCols(Vec<usize>),
    Reshape(usize),
    PickPerRow(usize, Vec<usize>),
    LayerNorm { x: usize, inv_std: Vec<f64> },
    NormalizeRows { x: usize, norms: Vec<f64> },
    SqDist(usize, usize),
    /// Scalar op whose local gradient was computed during the forward pass.
    ScalarWithGrad(usize, Tensor),
    GradReverse(usize, f64),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | MulRow(a, b) | MatMul(a, b)
            | MatMulBt(a, b) | SqDist(a, b) => vec![*a, *b],
            Transpose(a) | Scale(a, _) | AddScalar(a) | Relu(a) | Tanh(a) | Sigmoid(a)
            | Exp(a) | Log(a) | Softplus(a) | Square(a) | Sum(a) | Mean(a) | MeanRows(a)
            | LogSoftmax(a) | Softmax(a) | SelectRows(a, _) | SliceCols(a, _, _) | Reshape(a)
            | PickPerRow(a, _) | ScalarWithGrad(a, _) | GradReverse(a, _) => vec![*a],
            LayerNorm { x, .. } | NormalizeRows { x, .. } => vec![*x],
            ConcatRows(ps) | ConcatCols(ps) => ps.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recording of one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, or `None` if `v` does not
    /// influence the root through differentiable parents.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push_node(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push_node(t, Op::Leaf, false)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    fn push_node(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let rg = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|&p| nodes[p].requires_grad)
        };
        self.push_node(value, op, rg)
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, root.graph), "root belongs to another graph");
        let nodes = self.nodes.borrow();
        let rnode = &nodes[root.id];
        if !rnode.value.is_scalar() {
            return Err(Error::NonScalarRoot(rnode.value.shape().to_vec()));
        }
        if !rnode.requires_grad {
            return Err(Error::Detached);
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Tensor::full(rnode.value.shape(), 1.0));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let node = &nodes[id];
    let y = &node.value;
    let val = |i: usize| &nodes[i].value;
    let like = |shape: &[usize], data: Vec<f64>| Tensor::from_parts(shape.to_vec(), data);
    let gd = g.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let ga = gd.iter().zip(bv.data()).map(|(g, b)| g * b).collect();
            let gb = gd.iter().zip(av.data()).map(|(g, a)| g * a).collect();
            accumulate(nodes, grads, *a, like(av.shape(), ga));
            accumulate(nodes, grads, *b, like(bv.shape(), gb));
        }
        Op::AddRow(a, b) => {
            let c = val(*b).len();
            let mut gb = vec![0.0; c];
            for row in gd.chunks(c) {
                for (s, v) in gb.iter_mut().zip(row) {
                    *s += v;
                }
            }
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, like(val(*b).shape(), gb));
        }
        Op::MulRow(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let c = bv.len();
            let mut ga = vec![0.0; gd.len()];
            let mut gb = vec![0.0; c];
            for (r, (grow, arow)) in gd.chunks(c).zip(av.data().chunks(c)).enumerate() {
                for j in 0..c {
                    ga[r * c + j] = grow[j] * bv.data()[j];
                    gb[j] += grow[j] * arow[j];
                }
            }
            accumulate(nodes, grads, *a, like(av.shape(), ga));
            accumulate(nodes, grads, *b, like(bv.shape(), gb));
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            let ga = matmul_bt(gd, bv.data(), m, n, k);
            let gb = matmul_at(av.data(), gd, m, k, n);
            accumulate(nodes, grads, *a, like(av.shape(), ga));
            accumulate(nodes, grads, *b, like(bv.shape(), gb));
        }
        Op::MatMulBt(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.rows(), av.cols(), bv.rows());
            let ga = matmul(gd, bv.data(), m, n, k);
            let gb = matmul_at(gd, av.data(), m, n, k);
            accumulate(nodes, grads, *a, like(av.shape(), ga));
            accumulate(nodes, grads, *b, like(bv.shape(), gb));
        }
        Op::Transpose(a) => {
            let (r, c) = (y.rows(), y.cols());
            let mut ga = vec![0.0; gd.len()];
            for i in 0..r {
                for j in 0..c {
                    ga[j * r + i] = gd[i * c + j];
                }
            }
            accumulate(nodes, grads, *a, like(val(*a).shape(), ga));
        }
        Op::Scale(a, s) => accumulate(nodes, grads, *a, g.map(|v| v * s)),
        Op::AddScalar(a) => accumulate(nodes, grads, *a, g.clone()),
        Op::Relu(a) => {
            let x = val(*a);
            let ga = gd
                .iter()
                .zip(x.data())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::Tanh(a) => {
            let ga = gd.iter().zip(y.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
            accumulate(nodes, grads, *a, like(y.shape(), ga));
        }
        Op::Sigmoid(a) => {
            let ga = gd.iter().zip(y.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
            accumulate(nodes, grads, *a, like(y.shape(), ga));
        }
        Op::Exp(a) => {
            let ga = gd.iter().zip(y.data()).map(|(g, y)| g * y).collect();
            accumulate(nodes, grads, *a, like(y.shape(), ga));
        }
        Op::Log(a) => {
            let x = val(*a);
            let ga = gd.iter().zip(x.data()).map(|(g, x)| g / x).collect();
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::Softplus(a) => {
            let x = val(*a);
            let ga = gd.iter().zip(x.data()).map(|(g, x)| g * sigmoid(*x)).collect();
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::Square(a) => {
            let x = val(*a);
            let ga = gd.iter().zip(x.data()).map(|(g, x)| 2.0 * g * x).collect();
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::Sum(a) => {
            let x = val(*a);
            accumulate(nodes, grads, *a, Tensor::full(x.shape(), g.item()));
        }
        Op::Mean(a) => {
            let x = val(*a);
            accumulate(nodes, grads, *a, Tensor::full(x.shape(), g.item() / x.len() as f64));
        }
        Op::MeanRows(a) => {
            let x = val(*a);
            let r = x.rows() as f64;
            let ga = (0..x.len()).map(|i| gd[i % x.cols()] / r).collect();
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::LogSoftmax(a) => {
            let c = y.cols();
            let mut ga = vec![0.0; gd.len()];
            for ((grow, yrow), out) in gd.chunks(c).zip(y.data().chunks(c)).zip(ga.chunks_mut(c)) {
                let s: f64 = grow.iter().sum();
                for j in 0..c {
                    out[j] = grow[j] - yrow[j].exp() * s;
                }
            }
            accumulate(nodes, grads, *a, like(y.shape(), ga));
        }
        Op::Softmax(a) => {
            let c = y.cols();
            let mut ga = vec![0.0; gd.len()];
            for ((grow, yrow), out) in gd.chunks(c).zip(y.data().chunks(c)).zip(ga.chunks_mut(c)) {
                let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                for j in 0..c {
                    out[j] = yrow[j] * (grow[j] - dot);
                }
            }
            accumulate(nodes, grads, *a, like(y.shape(), ga));
        }
        Op::SelectRows(a, idx) => {
            let x = val(*a);
            let c = x.cols();
            let mut ga = vec![0.0; x.len()];
            for (k, &r) in idx.iter().enumerate() {
                for j in 0..c {
                    ga[r * c + j] += gd[k * c + j];
                }
            }
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let x = val(p);
                let n = x.len();
                accumulate(nodes, grads, p, like(x.shape(), gd[off..off + n].to_vec()));
                off += n;
            }
        }
        Op::SliceCols(a, s, e) => {
            let x = val(*a);
            let (r, c, w) = (x.rows(), x.cols(), e - s);
            let mut ga = vec![0.0; x.len()];
            for i in 0..r {
                ga[i * c + s..i * c + e].copy_from_slice(&gd[i * w..(i + 1) * w]);
            }
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::ConcatCols(parts) => {
            let total = y.cols();
            let mut off = 0;
            for &p in parts {
                let x = val(p);
                let (r, w) = (x.rows(), x.cols());
                let mut ga = Vec::with_capacity(x.len());
                for i in 0..r {
                    ga.extend_from_slice(&gd[i * total + off..i * total + off + w]);
                }
                accumulate(nodes, grads, p, like(x.shape(), ga));
                off += w;
            }
        }
        Op::Reshape(a) => {
            let x = val(*a);
            accumulate(nodes, grads, *a, like(x.shape(), gd.to_vec()));
        }
        Op::PickPerRow(a, cols) => {
            let x = val(*a);
            let c = x.cols();
            let mut ga = vec![0.0; x.len()];
            for (i, &j) in cols.iter().enumerate() {
                ga[i * c + j] = gd[i];
            }
            accumulate(nodes, grads, *a, like(x.shape(), ga));
        }
        Op::LayerNorm { x, inv_std } => {
            let c = y.cols();
            let mut ga = vec![0.0; gd.len()];
            for (r, ((grow, yrow), out)) in gd
                .chunks(c)
                .zip(y.data().chunks(c))
                .zip(ga.chunks_mut(c))
                .enumerate()
            {
                let mg = grow.iter().sum::<f64>() / c as f64;
                let mgy = grow.iter().zip(yrow).map(|(g, y)| g * y).sum::<f64>() / c as f64;
                for j in 0..c {
                    out[j] = inv_std[r] * (grow[j] - mg - yrow[j] * mgy);
                }
            }
            accumulate(nodes, grads, *x, like(y.shape(), ga));
        }
        Op::NormalizeRows { x, norms } => {
            let c = y.cols();
            let mut ga = vec![0.0; gd.len()];
            for (r, ((grow, yrow), out)) in gd
                .chunks(c)
                .zip(y.data().chunks(c))
                .zip(ga.chunks_mut(c))
                .enumerate()
            {
                let n = norms[r];
                if n <= NORM_FLOOR {
                    for j in 0..c {
                        out[j] = grow[j] / NORM_FLOOR;
                    }
                    continue;
                }
                let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                for j in 0..c {
                    out[j] = (grow[j] - yrow[j] * dot) / n;
                }
            }
            accumulate(nodes, grads, *x, like(y.shape(), ga));
        }
        Op::SqDist(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (n, m, d) = (av.rows(), bv.rows(), av.cols());
            let mut ga = vec![0.0; av.len()];
            let mut gb = vec![0.0; bv.len()];
            for i in 0..n {
                let ai = av.row(i);
                for j in 0..m {
                    let w = 2.0 * gd[i * m + j];
                    if w == 0.0 {
                        continue;
                    }
                    let bj = bv.row(j);
                    for k in 0..d {
                        let diff = w * (ai[k] - bj[k]);
                        ga[i * d + k] += diff;
                        gb[j * d + k] -= diff;
                    }
                }
            }
            accumulate(nodes, grads, *a, like(av.shape(), ga));
            accumulate(nodes, grads, *b, like(bv.shape(), gb));
        }
        Op::ScalarWithGrad(a, local) => {
            let s = g.item();
            accumulate(nodes, grads, *a, local.map(|v| v * s));
        }
        Op::GradReverse(a, s) => accumulate(nodes, grads, *a, g.map(|v| -s * v)),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) {
    if !cond {
        panic!("shape mismatch: {}", msg());
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.graph.value(self.id).clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.graph.value(self.id))
    }

    pub fn item(&self) -> f64 {
        self.graph.value(self.id).item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.value(self.id).shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.graph.value(self.id).rows()
    }

    pub fn cols(&self) -> usize {
        self.graph.value(self.id).cols()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Copy of this value as a new constant leaf.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant(self.value())
    }

    pub fn backward(&self) -> Result<Gradients> {
        self.graph.backward(*self)
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let v = self.graph.value(self.id).map(f);
        self.graph.push(v, op)
    }

    fn zip_with(&self, other: Var<'g>, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let a = self.graph.value(self.id);
        let b = self.graph.value(other.id);
        check(a.shape() == b.shape(), || {
            format!("elementwise {:?} vs {:?}", a.shape(), b.shape())
        });
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_parts(a.shape().to_vec(), data)
    }

    pub fn add(&self, other: Var<'g>) -> Var<'g> {
        let v = self.zip_with(other, |a, b| a + b);
        self.graph.push(v, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'g>) -> Var<'g> {
        let v = self.zip_with(other, |a, b| a - b);
        self.graph.push(v, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: Var<'g>) -> Var<'g> {
        let v = self.zip_with(other, |a, b| a * b);
        self.graph.push(v, Op::Mul(self.id, other.id))
    }

    /// `self[r, c] + row[c]` for every row.
    pub fn add_row(&self, row: Var<'g>) -> Var<'g> {
        let v = self.broadcast_row(row, |a, b| a + b);
        self.graph.push(v, Op::AddRow(self.id, row.id))
    }

    /// `self[r, c] * row[c]` for every row.
    pub fn mul_row(&self, row: Var<'g>) -> Var<'g> {
        let v = self.broadcast_row(row, |a, b| a * b);
        self.graph.push(v, Op::MulRow(self.id, row.id))
    }

    fn broadcast_row(&self, row: Var<'g>, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let a = self.graph.value(self.id);
        let b = self.graph.value(row.id);
        let c = a.cols();
        check(b.len() == c, || format!("row broadcast {:?} vs {:?}", a.shape(), b.shape()));
        let data = a
            .data()
            .chunks(c)
            .flat_map(|r| r.iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect::<Vec<_>>())
            .collect();
        Tensor::from_parts(a.shape().to_vec(), data)
    }

    pub fn matmul(&self, other: Var<'g>) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let b = self.graph.value(other.id);
            check(a.cols() == b.rows() && b.shape().len() == 2, || {
                format!("matmul {:?} x {:?}", a.shape(), b.shape())
            });
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            Tensor::from_parts(vec![m, n], matmul(a.data(), b.data(), m, k, n))
        };
        self.graph.push(v, Op::MatMul(self.id, other.id))
    }

    /// `self · otherᵀ`, i.e. all pairwise row dot products.
    pub fn matmul_t(&self, other: Var<'g>) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let b = self.graph.value(other.id);
            check(a.cols() == b.cols(), || {
                format!("matmul_t {:?} x {:?}ᵀ", a.shape(), b.shape())
            });
            let (m, k, n) = (a.rows(), a.cols(), b.rows());
            Tensor::from_parts(vec![m, n], matmul_bt(a.data(), b.data(), m, k, n))
        };
        self.graph.push(v, Op::MatMulBt(self.id, other.id))
    }

    pub fn transpose(&self) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let (r, c) = (a.rows(), a.cols());
            let mut out = vec![0.0; a.len()];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = a.data()[i * c + j];
                }
            }
            Tensor::from_parts(vec![c, r], out)
        };
        self.graph.push(v, Op::Transpose(self.id))
    }

    pub fn scale(&self, s: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn add_scalar(&self, s: f64) -> Var<'g> {
        self.unary(Op::AddScalar(self.id), |x| x + s)
    }

    pub fn relu(&self) -> Var<'g> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn tanh(&self) -> Var<'g> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(&self) -> Var<'g> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn exp(&self) -> Var<'g> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(&self) -> Var<'g> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<'g> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn square(&self) -> Var<'g> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    pub fn sum(&self) -> Var<'g> {
        let s = self.graph.value(self.id).sum();
        self.graph.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'g> {
        let s = {
            let v = self.graph.value(self.id);
            v.sum() / v.len() as f64
        };
        self.graph.push(Tensor::scalar(s), Op::Mean(self.id))
    }

    /// Column-wise mean over rows: `[r, c] -> [c]`.
    pub fn mean_rows(&self) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let (r, c) = (a.rows(), a.cols());
            let mut out = vec![0.0; c];
            for row in a.data().chunks(c) {
                for (o, x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
            out.iter_mut().for_each(|o| *o /= r as f64);
            Tensor::from_parts(vec![c], out)
        };
        self.graph.push(v, Op::MeanRows(self.id))
    }

    pub fn log_softmax(&self) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let c = a.cols();
            let mut out = a.data().to_vec();
            for row in out.chunks_mut(c) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                row.iter_mut().for_each(|x| *x -= lse);
            }
            Tensor::from_parts(a.shape().to_vec(), out)
        };
        self.graph.push(v, Op::LogSoftmax(self.id))
    }

    pub fn softmax(&self) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let c = a.cols();
            let mut out = a.data().to_vec();
            for row in out.chunks_mut(c) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.iter_mut().for_each(|x| *x = (*x - m).exp());
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
            Tensor::from_parts(a.shape().to_vec(), out)
        };
        self.graph.push(v, Op::Softmax(self.id))
    }

    /// Gathers rows by index (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let c = a.cols();
            check(!idx.is_empty() && idx.iter().all(|&i| i < a.rows()), || {
                format!("select_rows {idx:?} from {:?}", a.shape())
            });
            let mut out = Vec::with_capacity(idx.len() * c);
            for &i in idx {
                out.extend_from_slice(a.row(i));
            }
            Tensor::from_parts(vec![idx.len(), c], out)
        };
        self.graph.push(v, Op::SelectRows(self.id, idx.to_vec()))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let (r, c) = (a.rows(), a.cols());
            check(start < end && end <= c, || format!("slice_cols {start}..{end} of {c}"));
            let mut out = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                out.extend_from_slice(&a.data()[i * c + start..i * c + end]);
            }
            Tensor::from_parts(vec![r, end - start], out)
        };
        self.graph.push(v, Op::SliceCols(self.id, start, end))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'g> {
        let v = self
            .graph
            .value(self.id)
            .clone()
            .reshape(shape.to_vec())
            .unwrap_or_else(|e| panic!("{e}"));
        self.graph.push(v, Op::Reshape(self.id))
    }

    /// `out[i] = self[i, cols[i]]`.
    pub fn pick_per_row(&self, cols: &[usize]) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            check(cols.len() == a.rows() && cols.iter().all(|&j| j < a.cols()), || {
                format!("pick_per_row {cols:?} from {:?}", a.shape())
            });
            let out = cols.iter().enumerate().map(|(i, &j)| a.at(i, j)).collect();
            Tensor::from_parts(vec![cols.len()], out)
        };
        self.graph.push(v, Op::PickPerRow(self.id, cols.to_vec()))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&self, eps: f64) -> Var<'g> {
        let (v, inv_std) = {
            let a = self.graph.value(self.id);
            let c = a.cols();
            let mut out = a.data().to_vec();
            let mut inv = Vec::with_capacity(a.rows());
            for row in out.chunks_mut(c) {
                let mu = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
                let is = 1.0 / (var + eps).sqrt();
                row.iter_mut().for_each(|x| *x = (*x - mu) * is);
                inv.push(is);
            }
            (Tensor::from_parts(a.shape().to_vec(), out), inv)
        };
        self.graph.push(v, Op::LayerNorm { x: self.id, inv_std })
    }

    /// Scales every row to unit L2 norm.
    pub fn normalize_rows(&self) -> Var<'g> {
        let (v, norms) = {
            let a = self.graph.value(self.id);
            let c = a.cols();
            let mut out = a.data().to_vec();
            let mut norms = Vec::with_capacity(a.rows());
            for row in out.chunks_mut(c) {
                let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                let d = n.max(NORM_FLOOR);
                row.iter_mut().for_each(|x| *x /= d);
                norms.push(n);
            }
            (Tensor::from_parts(a.shape().to_vec(), out), norms)
        };
        self.graph.push(v, Op::NormalizeRows { x: self.id, norms })
    }

    /// All pairwise squared Euclidean distances between rows: `[n, m]`.
    pub fn sq_dist(&self, other: Var<'g>) -> Var<'g> {
        let v = {
            let a = self.graph.value(self.id);
            let b = self.graph.value(other.id);
            check(a.cols() == b.cols(), || format!("sq_dist {:?} vs {:?}", a.shape(), b.shape()));
            Tensor::from_parts(vec![a.rows(), b.rows()], sq_dist_values(&a, &b))
        };
        self.graph.push(v, Op::SqDist(self.id, other.id))
    }

    /// Identity forward; backward multiplies the incoming gradient by
    /// `-strength`.
    pub fn grad_reverse(&self, strength: f64) -> Var<'g> {
        assert!(strength >= 0.0, "grad_reverse strength must be non-negative");
        let v = self.value();
        self.graph.push(v, Op::GradReverse(self.id, strength))
    }

    /// Records a scalar computed outside the tape together with its gradient
    /// with respect to `self`.
    pub fn scalar_with_grad(&self, value: f64, local_grad: Tensor) -> Var<'g> {
        assert_eq!(local_grad.shape(), self.shape().as_slice());
        self.graph
            .push(Tensor::scalar(value), Op::ScalarWithGrad(self.id, local_grad))
    }
}

pub(crate) fn sq_dist_values(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.rows() * b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for j in 0..b.rows() {
            out.push(ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum());
        }
    }
    out
}

/// Concatenates matrices along rows.
pub fn concat_rows<'g>(parts: &[Var<'g>]) -> Var<'g> {
    assert!(!parts.is_empty(), "concat_rows of nothing");
    let graph = parts[0].graph;
    let v = {
        let c = parts[0].cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = graph.value(p.id);
            check(t.cols() == c, || format!("concat_rows width {} vs {c}", t.cols()));
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        Tensor::from_parts(vec![rows, c], data)
    };
    graph.push(v, Op::ConcatRows(parts.iter().map(|p| p.id).collect()))
}

/// Concatenates matrices along columns.
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Var<'g> {
    assert!(!parts.is_empty(), "concat_cols of nothing");
    let graph = parts[0].graph;
    let v = {
        let r = parts[0].rows();
        let vals: Vec<_> = parts.iter().map(|p| graph.value(p.id)).collect();
        check(vals.iter().all(|t| t.rows() == r), || "concat_cols row mismatch".into());
        let total: usize = vals.iter().map(|t| t.cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for t in &vals {
                data.extend_from_slice(t.row(i));
            }
        }
        Tensor::from_parts(vec![r, total], data)
    };
    graph.push(v, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
}

impl<'g> Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Self) -> Var<'g> {
        Var::add(&self, rhs)
    }
}

impl<'g> Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Self) -> Var<'g> {
        Var::sub(&self, rhs)
    }
}

impl<'g> Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Self) -> Var<'g> {
        Var::mul(&self, rhs)
    }
}

impl<'g> Mul<f64> for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: f64) -> Var<'g> {
        self.scale(rhs)
    }
}

impl<'g> Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = x * x;
        let grads = y.backward().unwrap();
        assert_eq!(y.item(), 9.0);
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn constant_root_is_rejected() {
        let g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let y = c * c;
        assert!(matches!(y.backward(), Err(Error::Detached)));
    }

    #[test]
    fn constant_parents_get_no_gradient() {
        let g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.param(Tensor::scalar(1.0));
        let y = c * x;
        let grads = y.backward().unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(x.backward(), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn reuse_accumulates() {
        let g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0]));
        let y = (x.scale(3.0) + x.square()).sum();
        let grads = y.backward().unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[5.0, -1.0]);
    }

    #[test]
    fn grad_reverse_examples() {
        let g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let r = x.grad_reverse(0.5);
        assert_eq!(r.value().data(), &[1.0, 2.0, 3.0]);

        let g = Graph::new();
        let x = g.param(Tensor::vector(vec![4.0, 5.0]));
        let grads = x.grad_reverse(1.0).sum().backward().unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[-1.0, -1.0]);

        let g = Graph::new();
        let x = g.param(Tensor::vector(vec![4.0, 5.0]));
        let grads = x.grad_reverse(0.0).sum().backward().unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn masked_logits_stay_finite() {
        let g = Graph::new();
        let x = g.param(Tensor::matrix(1, 3, vec![0.0, -1e30, 1.0]).unwrap());
        let y = x.log_softmax().pick_per_row(&[2]).sum();
        let grads = y.backward().unwrap();
        assert!(y.item().is_finite());
        assert!(grads.get(x).unwrap().all_finite());
        assert_eq!(grads.get(x).unwrap().data()[1], 0.0);
    }
}
