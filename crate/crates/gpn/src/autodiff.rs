//! Minimal tape-based reverse-mode differentiation over 2-D arrays.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the tape in reverse and accumulates gradients into the nodes that
//! depend on a trainable leaf.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;
use std::rc::Rc;

use ndarray::{s, Array2, Axis, LinalgScalar, ScalarOperand, Zip};

/// Scalar type the model can run in.
pub trait Float:
    num_traits::Float + LinalgScalar + ScalarOperand + AddAssign + Debug + Default + Send + Sync + Sum + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Float for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Column indices kept in each row of a softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMask {
    rows: Vec<Vec<usize>>,
}

impl RowMask {
    pub fn from_dense(mask: &Array2<bool>) -> Self {
        RowMask {
            rows: mask
                .rows()
                .into_iter()
                .map(|r| r.iter().enumerate().filter(|(_, &ok)| ok).map(|(j, _)| j).collect())
                .collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    BroadcastSum(Var, Var),
    MaskedSoftmaxRows(Var, Rc<RowMask>),
    ConstMatMulLeft(Rc<Array2<T>>, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    LogSoftmaxPick { logits: Var, index: usize, eps: T, probs: Array2<T> },
    WeightedSum(Vec<(Var, T)>),
}

struct Node<T> {
    op: Op<T>,
    value: Array2<T>,
    needs_grad: bool,
}

/// Records operations for one forward pass.
pub struct Tape<T: Float> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, op: Op<T>, value: Array2<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable input.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::MatMul(a, b), value, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Add(a, b), value, ng)
    }

    /// `a` (m×n) plus a 1×n row broadcast over every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(Op::AddRow(a, row), value, ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Mul(a, b), value, ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a) * s;
        let ng = self.ng(a);
        self.push(Op::Scale(a, s), value, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.tanh());
        let ng = self.ng(a);
        self.push(Op::Tanh(a), value, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.ng(a);
        self.push(Op::Sigmoid(a), value, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(T::zero()));
        let ng = self.ng(a);
        self.push(Op::Relu(a), value, ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let value = self.value(a).mapv(|x| if x > T::zero() { x } else { x * slope });
        let ng = self.ng(a);
        self.push(Op::LeakyRelu(a, slope), value, ng)
    }

    /// `col` (m×1) + `row` (1×n) → m×n.
    pub fn broadcast_sum(&mut self, col: Var, row: Var) -> Var {
        let value = self.value(col) + self.value(row);
        let ng = self.ng(col) || self.ng(row);
        self.push(Op::BroadcastSum(col, row), value, ng)
    }

    /// Row-wise softmax over entries where `mask` is true; the rest are 0.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Rc<RowMask>) -> Var {
        let x = self.value(a);
        let mut value = Array2::zeros(x.raw_dim());
        for (i, (mut out, row)) in value.rows_mut().into_iter().zip(x.rows()).enumerate() {
            let keep = mask.row(i);
            if keep.is_empty() {
                continue;
            }
            let max = keep.iter().map(|&j| row[j]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for &j in keep {
                let e = (row[j] - max).exp();
                out[j] = e;
                total += e;
            }
            for &j in keep {
                out[j] = out[j] / total;
            }
        }
        let ng = self.ng(a);
        self.push(Op::MaskedSoftmaxRows(a, mask), value, ng)
    }

    /// `m · a` for a constant matrix `m`.
    pub fn const_matmul_left(&mut self, m: Rc<Array2<T>>, a: Var) -> Var {
        let value = m.dot(self.value(a));
        let ng = self.ng(a);
        self.push(Op::ConstMatMulLeft(m, a), value, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Op::ConcatCols(parts.to_vec()), value, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(Op::SliceCols(a, start, end), value, ng)
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), rows);
        let ng = self.ng(a);
        self.push(Op::GatherRows(a, rows.to_vec()), value, ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let ng = self.ng(a);
        self.push(Op::Transpose(a), value, ng)
    }

    /// `ln((softmax(logits)_index + eps) / (1 + k·eps))` for a 1×k logit row.
    /// The smoothed probabilities themselves come from [`smoothed_probs`].
    pub fn log_softmax_pick(&mut self, logits: Var, index: usize, eps: T) -> Var {
        let probs = softmax_row(self.value(logits));
        let k = T::of(probs.len() as f64);
        let out = (probs[[0, index]] + eps).ln() - (T::one() + k * eps).ln();
        let ng = self.ng(logits);
        self.push(
            Op::LogSoftmaxPick {
                logits,
                index,
                eps,
                probs,
            },
            Array2::from_elem((1, 1), out),
            ng,
        )
    }

    /// Scalar `Σ w_i · v_i` over 1×1 nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Var {
        let total = terms.iter().fold(T::zero(), |acc, &(v, w)| acc + w * self.scalar(v));
        let ng = terms.iter().any(|&(v, _)| self.ng(v));
        self.push(Op::WeightedSum(terms.to_vec()), Array2::from_elem((1, 1), total), ng)
    }

    /// Gradients of the scalar `root` with respect to every node.
    /// Entries are `None` for nodes the root does not depend on through a
    /// trainable leaf.
    /// Sign of every input to a piecewise-linear activation, in tape order.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) | Op::LeakyRelu(a, _) = n.op {
                out.extend(self.value(a).iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    pub fn backward(&self, root: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Array2<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones(self.nodes[root.0].value.raw_dim()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += &g,
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op<T>, y: &Array2<T>, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g * self.value(*b));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g * self.value(*a));
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g * *s),
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(y).for_each(|d, &y| *d = *d * (T::one() - y * y));
                self.acc(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(y).for_each(|d, &y| *d = *d * y * (T::one() - y));
                self.acc(grads, *a, d);
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= T::zero() { *d = T::zero() });
                self.acc(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= T::zero() { *d = *d * *slope });
                self.acc(grads, *a, d);
            }
            Op::BroadcastSum(col, row) => {
                self.acc(grads, *col, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                self.acc(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MaskedSoftmaxRows(a, mask) => {
                let mut d = Array2::zeros(y.raw_dim());
                for (i, ((mut dr, yr), gr)) in d.rows_mut().into_iter().zip(y.rows()).zip(g.rows()).enumerate() {
                    let keep = mask.row(i);
                    let dot: T = keep.iter().map(|&j| yr[j] * gr[j]).sum();
                    for &j in keep {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::ConstMatMulLeft(m, a) => self.acc(grads, *a, m.t().dot(g)),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    self.acc(grads, p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                if self.ng(*a) {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    d.slice_mut(s![.., *start..*end]).assign(g);
                    self.acc(grads, *a, d);
                }
            }
            Op::GatherRows(a, rows) => {
                if self.ng(*a) {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut target = d.row_mut(r);
                        target += &g.row(i);
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::Transpose(a) => self.acc(grads, *a, g.t().to_owned()),
            Op::LogSoftmaxPick {
                logits,
                index,
                eps,
                probs,
            } => {
                let up = g[[0, 0]];
                let pa = probs[[0, *index]];
                let factor = up * pa / (pa + *eps);
                let mut d = probs.mapv(|p| -p * factor);
                d[[0, *index]] = d[[0, *index]] + factor;
                self.acc(grads, *logits, d);
            }
            Op::WeightedSum(terms) => {
                let up = g[[0, 0]];
                for &(v, w) in terms {
                    self.acc(grads, v, Array2::from_elem((1, 1), up * w));
                }
            }
        }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads[v.0].as_ref()
    }
}

pub fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax of a 1×k row.
pub fn softmax_row<T: Float>(logits: &Array2<T>) -> Array2<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut p = logits.mapv(|v| (v - max).exp());
    let total: T = p.iter().copied().sum();
    p.mapv_inplace(|v| v / total);
    p
}

/// Softmax followed by epsilon smoothing and renormalisation.
pub fn smoothed_probs<T: Float>(logits: &Array2<T>, eps: T) -> Vec<T> {
    let p = softmax_row(logits);
    let k = T::of(p.len() as f64);
    p.iter().map(|&v| (v + eps) / (T::one() + k * eps)).collect()
}
