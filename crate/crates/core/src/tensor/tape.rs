//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Every primitive appends one node holding its output value, its inputs
//! and whatever forward state the backward rule needs. Nodes are appended
//! in evaluation order, so the node list is already topologically sorted
//! and [`Tape::backward`] is a single reverse sweep.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::kernels::{self, PROB_FLOOR};
use crate::tensor::{Matrix, SparseCsr};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Primitive that produced a node; exposed for inspection and tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    SpMM,
    Relu,
    Add,
    Sub,
    AddBias,
    ConcatCols,
    Scale,
    RowScale,
    Mask,
    Abs,
    GatherRows,
    SoftmaxRows,
    Sum,
    Mean,
    CrossEntropy,
    SoftmaxCrossEntropy,
    KlDivRows,
    KlDivLogits,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseCsr<T>>, Var),
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    ConcatCols(Var, Var),
    Scale(Var, T),
    RowScale(Var, Vec<T>),
    Mask(Var, Matrix<T>),
    Abs(Var),
    GatherRows(Var, Vec<usize>),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        probs: Var,
        labels: Vec<usize>,
        weights: Option<Vec<f64>>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Option<Vec<f64>>,
        probs: Matrix<T>,
        clamped: Vec<bool>,
    },
    KlDivRows {
        target: Matrix<T>,
        q: Var,
    },
    KlDivLogits {
        target: Matrix<T>,
        logits: Var,
        q: Matrix<T>,
        clamped: Vec<bool>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::SpMM(..) => OpKind::SpMM,
            Op::Relu(..) => OpKind::Relu,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::AddBias(..) => OpKind::AddBias,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::Scale(..) => OpKind::Scale,
            Op::RowScale(..) => OpKind::RowScale,
            Op::Mask(..) => OpKind::Mask,
            Op::Abs(..) => OpKind::Abs,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::SoftmaxRows(..) => OpKind::SoftmaxRows,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::SoftmaxCrossEntropy { .. } => OpKind::SoftmaxCrossEntropy,
            Op::KlDivRows { .. } => OpKind::KlDivRows,
            Op::KlDivLogits { .. } => OpKind::KlDivLogits,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddBias(a, b) | Op::ConcatCols(a, b) => {
                vec![*a, *b]
            }
            Op::SpMM(_, a)
            | Op::Relu(a)
            | Op::Scale(a, _)
            | Op::RowScale(a, _)
            | Op::Mask(a, _)
            | Op::Abs(a)
            | Op::GatherRows(a, _)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::CrossEntropy { probs, .. } => vec![*probs],
            Op::SoftmaxCrossEntropy { logits, .. } | Op::KlDivLogits { logits, .. } => vec![*logits],
            Op::KlDivRows { q, .. } => vec![*q],
        }
    }
}

struct Node<T> {
    value: Matrix<T>,
    needs_grad: bool,
    op: Op<T>,
}

/// Recorded computation. One tape per thread; tapes are cheap to create.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if any flowed into it.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn scalar<T: Scalar>(v: T) -> Matrix<T> {
    Matrix::filled(1, 1, v)
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            op => op.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Sparse propagation `s · m`; the sparse operator is non-trainable.
    pub fn spmm(&mut self, s: &Arc<SparseCsr<T>>, m: Var) -> Result<Var> {
        let out = s.spmm(self.value(m))?;
        Ok(self.push(out, Op::SpMM(Arc::clone(s), m)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = kernels::relu(self.value(a));
        self.push(out, Op::Relu(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn add_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let out = kernels::add_bias(self.value(m), self.value(bias))?;
        Ok(self.push(out, Op::AddBias(m, bias)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::concat_cols(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = kernels::scale(self.value(a), c);
        self.push(out, Op::Scale(a, c))
    }

    /// Multiplies row `i` by the constant `w[i]`.
    pub fn row_scale(&mut self, a: Var, w: Vec<T>) -> Result<Var> {
        let m = self.value(a);
        if w.len() != m.rows() {
            return Err(Error::Dimension {
                op: "row_scale",
                lhs: m.shape(),
                rhs: (w.len(), 1),
            });
        }
        let mut out = m.clone();
        for (i, &wi) in w.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= wi);
        }
        Ok(self.push(out, Op::RowScale(a, w)))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Matrix<T>) -> Result<Var> {
        let m = self.value(a);
        m.ensure_shape("mask", &mask)?;
        let mut out = m.clone();
        for (o, &k) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *o *= k;
        }
        Ok(self.push(out, Op::Mask(a, mask)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::abs);
        self.push(out, Op::Abs(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Index(format!(
                "gather_rows: row {bad} out of range for {} rows",
                m.rows()
            )));
        }
        let out = m.gather_rows(&idx);
        Ok(self.push(out, Op::GatherRows(a, idx)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = kernels::softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let out = scalar(m.sum() / T::lit(m.len().max(1) as f64));
        self.push(out, Op::Mean(a))
    }

    /// Cross-entropy on probabilities. Prefer [`Tape::softmax_cross_entropy`]
    /// when the probabilities come from logits.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize], weights: Option<&[f64]>) -> Result<Var> {
        let loss = kernels::cross_entropy(self.value(probs), labels, weights)?;
        Ok(self.push(
            scalar(loss),
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
                weights: weights.map(<[f64]>::to_vec),
            },
        ))
    }

    /// `cross_entropy(softmax_rows(logits), labels)` fused; the backward
    /// rule is `(probs - onehot) / n`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let z = self.value(logits);
        kernels::check_labels(z, labels, "softmax_cross_entropy")?;
        kernels::check_weights(z.rows(), weights, "softmax_cross_entropy")?;
        let logp = kernels::log_softmax_rows(z);
        let floor = T::lit(PROB_FLOOR).ln();
        let mut total = T::zero();
        let mut clamped = Vec::with_capacity(labels.len());
        for (i, &y) in labels.iter().enumerate() {
            let w = weights.map_or(T::one(), |w| T::lit(w[i]));
            let lp = logp[(i, y)];
            clamped.push(lp < floor);
            total += w * -lp.max(floor);
        }
        let loss = total / kernels::weight_total(z.rows(), weights);
        let probs = logp.map(T::exp);
        Ok(self.push(
            scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: weights.map(<[f64]>::to_vec),
                probs,
                clamped,
            },
        ))
    }

    /// KL divergence `KL(target ‖ q)` averaged over rows; `target` is fixed.
    pub fn kl_div_rows(&mut self, target: &Matrix<T>, q: Var) -> Result<Var> {
        let loss = kernels::kl_div_rows(target, self.value(q))?;
        Ok(self.push(
            scalar(loss),
            Op::KlDivRows {
                target: target.clone(),
                q,
            },
        ))
    }

    /// `kl_div_rows(target, softmax_rows(logits))` fused.
    pub fn kl_div_logits(&mut self, target: &Matrix<T>, logits: Var) -> Result<Var> {
        let z = self.value(logits);
        target.ensure_shape("kl_div_logits", z)?;
        let logq = kernels::log_softmax_rows(z);
        let floor = T::lit(PROB_FLOOR).ln();
        let mut total = T::zero();
        let mut clamped = Vec::with_capacity(logq.len());
        for (&p, &lq) in target.as_slice().iter().zip(logq.as_slice()) {
            clamped.push(lq < floor);
            if p > T::zero() {
                total += p * (p.max(T::lit(PROB_FLOOR)).ln() - lq.max(floor));
            }
        }
        let loss = total / T::lit(z.rows().max(1) as f64);
        let q = logq.map(T::exp);
        Ok(self.push(
            scalar(loss),
            Op::KlDivLogits {
                target: target.clone(),
                logits,
                q,
                clamped,
            },
        ))
    }

    /// Reverse sweep from the `1 × 1` node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<T>>], v: Var, delta: Matrix<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, d) in acc.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                    *a += *d;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let d = kernels::matmul_nt(g, self.value(*b))?;
                    self.accumulate(grads, *a, d);
                }
                if self.wants(*b) {
                    let d = kernels::matmul_tn(self.value(*a), g)?;
                    self.accumulate(grads, *b, d);
                }
            }
            Op::SpMM(s, m) => {
                let d = s.spmm_transposed(g)?;
                self.accumulate(grads, *m, d);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut d = g.clone();
                for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= T::zero() {
                        *dv = T::zero();
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, kernels::scale(g, -T::one()));
            }
            Op::AddBias(m, bias) => {
                self.accumulate(grads, *m, g.clone());
                if self.wants(*bias) {
                    let mut d = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, &v) in d.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, d);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = Vec::with_capacity(g.rows() * ca);
                let mut db = Vec::with_capacity(g.rows() * cb);
                for i in 0..g.rows() {
                    let r = g.row(i);
                    da.extend_from_slice(&r[..ca]);
                    db.extend_from_slice(&r[ca..]);
                }
                self.accumulate(grads, *a, Matrix::from_vec(g.rows(), ca, da)?);
                self.accumulate(grads, *b, Matrix::from_vec(g.rows(), cb, db)?);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, kernels::scale(g, *c)),
            Op::RowScale(a, w) => {
                let mut d = g.clone();
                for (i, &wi) in w.iter().enumerate() {
                    d.row_mut(i).iter_mut().for_each(|v| *v *= wi);
                }
                self.accumulate(grads, *a, d);
            }
            Op::Mask(a, mask) => {
                let mut d = g.clone();
                for (dv, &k) in d.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *dv *= k;
                }
                self.accumulate(grads, *a, d);
            }
            Op::Abs(a) => {
                let x = self.value(*a);
                let mut d = g.clone();
                for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    *dv *= if xv > T::zero() {
                        T::one()
                    } else if xv < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                }
                self.accumulate(grads, *a, d);
            }
            Op::GatherRows(a, idx) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, &v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let p = &node.value;
                let mut d = g.clone();
                for i in 0..p.rows() {
                    let pr = p.row(i);
                    let dot: T = pr.iter().zip(g.row(i)).map(|(&pv, &gv)| pv * gv).sum();
                    for (dv, &pv) in d.row_mut(i).iter_mut().zip(pr) {
                        *dv = pv * (*dv - dot);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let n = T::lit((r * c).max(1) as f64);
                self.accumulate(grads, *a, Matrix::filled(r, c, g[(0, 0)] / n));
            }
            Op::CrossEntropy { probs, labels, weights } => {
                let p = self.value(*probs);
                let denom = kernels::weight_total::<T>(p.rows(), weights.as_deref());
                let floor = T::lit(PROB_FLOOR);
                let mut d = Matrix::zeros(p.rows(), p.cols());
                for (i, &y) in labels.iter().enumerate() {
                    let pv = p[(i, y)];
                    if pv >= floor {
                        let w = weights.as_ref().map_or(T::one(), |w| T::lit(w[i]));
                        d[(i, y)] = -g[(0, 0)] * w / (denom * pv);
                    }
                }
                self.accumulate(grads, *probs, d);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                weights,
                probs,
                clamped,
            } => {
                let denom = kernels::weight_total::<T>(probs.rows(), weights.as_deref());
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    let row = d.row_mut(i);
                    if clamped[i] {
                        row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    row[y] -= T::one();
                    let w = weights.as_ref().map_or(T::one(), |w| T::lit(w[i]));
                    let s = g[(0, 0)] * w / denom;
                    row.iter_mut().for_each(|v| *v *= s);
                }
                self.accumulate(grads, *logits, d);
            }
            Op::KlDivRows { target, q } => {
                let qv = self.value(*q);
                let floor = T::lit(PROB_FLOOR);
                let n = T::lit(qv.rows().max(1) as f64);
                let mut d = Matrix::zeros(qv.rows(), qv.cols());
                for ((dv, &p), &qq) in d.as_mut_slice().iter_mut().zip(target.as_slice()).zip(qv.as_slice()) {
                    if p > T::zero() && qq >= floor {
                        *dv = -g[(0, 0)] * p / (qq * n);
                    }
                }
                self.accumulate(grads, *q, d);
            }
            Op::KlDivLogits {
                target,
                logits,
                q,
                clamped,
            } => {
                let n = T::lit(q.rows().max(1) as f64);
                let cols = q.cols();
                let mut d = Matrix::zeros(q.rows(), cols);
                for i in 0..q.rows() {
                    let p = target.row(i);
                    let qr = q.row(i);
                    let cl = &clamped[i * cols..(i + 1) * cols];
                    let active: T = p.iter().zip(cl).filter(|(_, &c)| !c).map(|(&pv, _)| pv).sum();
                    for (k, dv) in d.row_mut(i).iter_mut().enumerate() {
                        let own = if cl[k] { T::zero() } else { p[k] };
                        *dv = g[(0, 0)] * (qr[k] * active - own) / n;
                    }
                }
                self.accumulate(grads, *logits, d);
            }
        }
        Ok(())
    }
}
