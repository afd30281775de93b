//! Dense 2-D real arrays and a reverse-mode differentiation tape.
//!
//! The operation set is deliberately small: exactly what is needed to express
//! the relaxed-sorting losses and an MLP forward pass. Vectors are n×1
//! arrays, scalars are 1×1. There is no implicit broadcasting; the few
//! broadcast patterns the losses need are spelled out with `matmul` against
//! constant ones-vectors, which keeps every gradient rule trivial.
//!
//! A [`Tape`] records eagerly: every operation computes its value immediately
//! and pushes one node. [`Tape::backward`] walks the nodes once in reverse,
//! accumulating cotangents in a fixed order so that two backward passes over
//! the same tape are bit-identical.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense 2-D array. All entries are finite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Array<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<'de, F: Scalar + Deserialize<'de>> Deserialize<'de> for Array<F> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<F> {
            rows: usize,
            cols: usize,
            data: Vec<F>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Array::from_vec(raw.rows, raw.cols, raw.data).map_err(serde::de::Error::custom)
    }
}

impl<F: Scalar> Array<F> {
    /// Build from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "array: {} values for shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("array: non-finite entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn new_unchecked(rows: usize, cols: usize, data: Vec<F>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// n×1 column vector.
    pub fn col(values: &[F]) -> Result<Self> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    /// 1×n row vector.
    pub fn row(values: &[F]) -> Result<Self> {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    /// 1×1 array.
    pub fn scalar(v: F) -> Self {
        Self::new_unchecked(1, 1, vec![v])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new_unchecked(rows, cols, vec![F::zero(); rows * cols])
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::new_unchecked(rows, cols, vec![F::one(); rows * cols])
    }

    pub fn eye(n: usize) -> Self {
        let mut a = Self::zeros(n, n);
        for i in 0..n {
            a.data[i * n + i] = F::one();
        }
        a
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// Value of a 1×1 array. Panics on any other shape.
    pub fn item(&self) -> F {
        assert!(
            self.rows == 1 && self.cols == 1,
            "item() on {}x{} array",
            self.rows,
            self.cols
        );
        self.data[0]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub(crate) fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self::new_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new_unchecked(self.rows, self.cols, data)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub(crate) fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == F::zero() {
                    continue;
                }
                let lhs = &other.data[p * n..(p + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(lhs) {
                    *d += a * b;
                }
            }
        }
        out
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`]. Ids are only meaningful on the
/// tape that issued them; every operation checks for foreign ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

enum Op<F> {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    ScalarMul(usize, F),
    Exp(usize),
    Log2(usize),
    Abs(usize),
    /// 2^x − 1, the gain function applied to relevance labels.
    Pow2M1(usize),
    SoftmaxRows(usize),
    Sum(usize),
    SumAxis(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Sigmoid(usize),
    Clamp(usize, F, F),
}

struct Node<F> {
    op: Op<F>,
    value: Array<F>,
}

/// Eager reverse-mode differentiation tape.
pub struct Tape<F> {
    id: u64,
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input array. Leaves are what [`Tape::backward`] reports
    /// gradients for.
    pub fn leaf(&mut self, value: Array<F>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Value held at a node issued by this tape.
    pub fn value(&self, id: NodeId) -> &Array<F> {
        assert_eq!(id.tape, self.id, "node from a different tape");
        &self.nodes[id.index].value
    }

    fn push(&mut self, op: Op<F>, value: Array<F>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn index_of(&self, id: NodeId, op: &'static str) -> Result<usize> {
        if id.tape != self.id {
            return Err(Error::invalid(format!("{op}: node from a different tape")));
        }
        Ok(id.index)
    }

    fn checked(&mut self, op: &'static str, node: Op<F>, value: Array<F>) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        Ok(self.push(node, value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ai, bi) = (self.index_of(a, "matmul")?, self.index_of(b, "matmul")?);
        let (va, vb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if va.cols != vb.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let value = va.matmul(vb);
        self.checked("matmul", Op::Matmul(ai, bi), value)
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        make: impl Fn(usize, usize) -> Op<F>,
        f: impl Fn(F, F) -> F,
    ) -> Result<NodeId> {
        let (ai, bi) = (self.index_of(a, op)?, self.index_of(b, op)?);
        let (va, vb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let value = va.zip_map(vb, f);
        self.checked(op, make(ai, bi), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("add", a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("sub", a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("mul", a, b, Op::Mul, |x, y| x * y)
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: F) -> Result<NodeId> {
        if !c.is_finite() {
            return Err(Error::invalid("scalar_mul: non-finite factor"));
        }
        let ai = self.index_of(a, "scalar_mul")?;
        let value = self.nodes[ai].value.map(|x| x * c);
        self.checked("scalar_mul", Op::ScalarMul(ai, c), value)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "exp")?;
        let value = self.nodes[ai].value.map(|x| x.exp());
        self.checked("exp", Op::Exp(ai), value)
    }

    pub fn log2(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "log2")?;
        if self.nodes[ai].value.data.iter().any(|&v| v <= F::zero()) {
            return Err(Error::invalid("log2: requires strictly positive input"));
        }
        let value = self.nodes[ai].value.map(|x| x.log2());
        self.checked("log2", Op::Log2(ai), value)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "abs")?;
        let value = self.nodes[ai].value.map(|x| x.abs());
        self.checked("abs", Op::Abs(ai), value)
    }

    /// Elementwise 2^x − 1 (the NDCG gain function on real inputs).
    pub fn power_of_two_minus_one(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "power_of_two_minus_one")?;
        let value = self.nodes[ai].value.map(|x| x.exp2() - F::one());
        self.checked("power_of_two_minus_one", Op::Pow2M1(ai), value)
    }

    /// Row-wise softmax with row-max subtraction for overflow safety.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "softmax_rows")?;
        let value = softmax_rows_values(&self.nodes[ai].value);
        self.checked("softmax_rows", Op::SoftmaxRows(ai), value)
    }

    /// Sum of all entries, as a 1×1 array.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "sum")?;
        let mut acc = F::zero();
        for &v in &self.nodes[ai].value.data {
            acc += v;
        }
        self.checked("sum", Op::Sum(ai), Array::scalar(acc))
    }

    /// Sum along an axis: 0 collapses rows (result 1×c), 1 collapses columns
    /// (result r×1).
    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        if axis > 1 {
            return Err(Error::invalid(format!("sum_axis: axis {axis} out of range")));
        }
        let ai = self.index_of(a, "sum_axis")?;
        let v = &self.nodes[ai].value;
        let value = if axis == 0 {
            let mut out = Array::zeros(1, v.cols);
            for i in 0..v.rows {
                for j in 0..v.cols {
                    out.data[j] += v.data[i * v.cols + j];
                }
            }
            out
        } else {
            let mut out = Array::zeros(v.rows, 1);
            for i in 0..v.rows {
                for j in 0..v.cols {
                    out.data[i] += v.data[i * v.cols + j];
                }
            }
            out
        };
        self.checked("sum_axis", Op::SumAxis(ai, axis), value)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "transpose")?;
        let value = self.nodes[ai].value.transpose();
        self.checked("transpose", Op::Transpose(ai), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "tanh")?;
        let value = self.nodes[ai].value.map(|x| x.tanh());
        self.checked("tanh", Op::Tanh(ai), value)
    }

    /// Numerically stable logistic sigmoid.
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let ai = self.index_of(a, "sigmoid")?;
        let value = self.nodes[ai].value.map(sigmoid_value);
        self.checked("sigmoid", Op::Sigmoid(ai), value)
    }

    /// Clip to `[lo, hi]`. The gradient is zero outside the bounds
    /// (subgradient convention) and passes through on them.
    pub fn clamp(&mut self, a: NodeId, lo: F, hi: F) -> Result<NodeId> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid("clamp: invalid bounds"));
        }
        let ai = self.index_of(a, "clamp")?;
        let value = self.nodes[ai].value.map(|x| x.max(lo).min(hi));
        self.checked("clamp", Op::Clamp(ai, lo, hi), value)
    }

    /// Reverse pass from a scalar output. Returns one gradient per node;
    /// query leaves through [`Gradients::wrt`].
    pub fn backward(&self, output: NodeId) -> Result<Gradients<F>> {
        let oi = self.index_of(output, "backward")?;
        if self.nodes[oi].value.shape() != [1, 1] {
            return Err(Error::invalid(format!(
                "backward: output must be scalar, got shape {:?}",
                self.nodes[oi].value.shape()
            )));
        }
        let mut grads: Vec<Option<Array<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[oi] = Some(Array::scalar(F::one()));
        for idx in (0..=oi).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::Matmul(ai, bi) => {
                    let da = g.matmul(&self.nodes[bi].value.transpose());
                    let db = self.nodes[ai].value.transpose().matmul(&g);
                    accumulate(&mut grads[ai], da);
                    accumulate(&mut grads[bi], db);
                }
                Op::Add(ai, bi) => {
                    accumulate(&mut grads[ai], g.clone());
                    accumulate(&mut grads[bi], g.clone());
                }
                Op::Sub(ai, bi) => {
                    accumulate(&mut grads[ai], g.clone());
                    accumulate(&mut grads[bi], g.map(|x| -x));
                }
                Op::Mul(ai, bi) => {
                    let da = g.zip_map(&self.nodes[bi].value, |gv, bv| gv * bv);
                    let db = g.zip_map(&self.nodes[ai].value, |gv, av| gv * av);
                    accumulate(&mut grads[ai], da);
                    accumulate(&mut grads[bi], db);
                }
                Op::ScalarMul(ai, c) => accumulate(&mut grads[ai], g.map(|x| x * c)),
                Op::Exp(ai) => {
                    accumulate(&mut grads[ai], g.zip_map(&node.value, |gv, y| gv * y))
                }
                Op::Log2(ai) => {
                    let x = &self.nodes[ai].value;
                    let da = g.zip_map(x, |gv, xv| gv / (xv * F::ln_2()));
                    accumulate(&mut grads[ai], da);
                }
                Op::Abs(ai) => {
                    let x = &self.nodes[ai].value;
                    let da = g.zip_map(x, |gv, xv| {
                        if xv > F::zero() {
                            gv
                        } else if xv < F::zero() {
                            -gv
                        } else {
                            F::zero()
                        }
                    });
                    accumulate(&mut grads[ai], da);
                }
                Op::Pow2M1(ai) => {
                    let da = g.zip_map(&node.value, |gv, y| gv * F::ln_2() * (y + F::one()));
                    accumulate(&mut grads[ai], da);
                }
                Op::SoftmaxRows(ai) => {
                    let y = &node.value;
                    let mut da = Array::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let row = i * y.cols;
                        let mut dot = F::zero();
                        for j in 0..y.cols {
                            dot += g.data[row + j] * y.data[row + j];
                        }
                        for j in 0..y.cols {
                            da.data[row + j] = y.data[row + j] * (g.data[row + j] - dot);
                        }
                    }
                    accumulate(&mut grads[ai], da);
                }
                Op::Sum(ai) => {
                    let x = &self.nodes[ai].value;
                    let gv = g.item();
                    accumulate(&mut grads[ai], Array::new_unchecked(x.rows, x.cols, vec![gv; x.data.len()]));
                }
                Op::SumAxis(ai, axis) => {
                    let x = &self.nodes[ai].value;
                    let mut da = Array::zeros(x.rows, x.cols);
                    for i in 0..x.rows {
                        for j in 0..x.cols {
                            da.data[i * x.cols + j] =
                                if axis == 0 { g.data[j] } else { g.data[i] };
                        }
                    }
                    accumulate(&mut grads[ai], da);
                }
                Op::Transpose(ai) => accumulate(&mut grads[ai], g.transpose()),
                Op::Tanh(ai) => {
                    let da = g.zip_map(&node.value, |gv, y| gv * (F::one() - y * y));
                    accumulate(&mut grads[ai], da);
                }
                Op::Sigmoid(ai) => {
                    let da = g.zip_map(&node.value, |gv, y| gv * y * (F::one() - y));
                    accumulate(&mut grads[ai], da);
                }
                Op::Clamp(ai, lo, hi) => {
                    let x = &self.nodes[ai].value;
                    let da = g.zip_map(x, |gv, xv| {
                        if xv >= lo && xv <= hi {
                            gv
                        } else {
                            F::zero()
                        }
                    });
                    accumulate(&mut grads[ai], da);
                }
            }
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes,
        })
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<Array<F>>, delta: Array<F>) {
    match slot {
        Some(acc) => acc.add_assign(&delta),
        None => *slot = Some(delta),
    }
}

/// Gradients of one scalar output with respect to every node of a tape.
pub struct Gradients<F> {
    tape: u64,
    grads: Vec<Option<Array<F>>>,
    shapes: Vec<[usize; 2]>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient with respect to the given node; zeros if the node does not
    /// influence the output.
    pub fn wrt(&self, id: NodeId) -> Result<Array<F>> {
        if id.tape != self.tape {
            return Err(Error::invalid("gradients: node from a different tape"));
        }
        Ok(match &self.grads[id.index] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[id.index];
                Array::zeros(r, c)
            }
        })
    }
}

/// Plain-value row softmax, shared by the tape op and value-only paths.
pub fn softmax_rows_values<F: Scalar>(x: &Array<F>) -> Array<F> {
    let mut out = Array::zeros(x.rows, x.cols);
    for i in 0..x.rows {
        let row = &x.data[i * x.cols..(i + 1) * x.cols];
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out.data[i * x.cols + j] = e;
            sum += e;
        }
        for j in 0..x.cols {
            out.data[i * x.cols + j] = out.data[i * x.cols + j] / sum;
        }
    }
    out
}

pub(crate) fn sigmoid_value<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Max relative error between analytic and central-difference gradients of a
/// scalar-valued tape program `build` at the point `x`.
///
/// The error is `max_i |analytic_i − numeric_i| / max(|analytic_i|,
/// |numeric_i|, 1e-8)`.
pub fn grad_check<F, B>(build: B, x: &Array<F>, h: F) -> Result<F>
where
    F: Scalar,
    B: Fn(&mut Tape<F>, NodeId) -> Result<NodeId>,
{
    if h <= F::zero() {
        return Err(Error::invalid("grad_check: step must be positive"));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let out = build(&mut tape, leaf)?;
    if tape.value(out).shape() != [1, 1] {
        return Err(Error::invalid("grad_check: function is not scalar-valued"));
    }
    let analytic = tape.backward(out)?.wrt(leaf)?;

    let eval = |point: Array<F>| -> Result<F> {
        let mut t = Tape::new();
        let leaf = t.leaf(point);
        let out = build(&mut t, leaf)?;
        let v = t.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    let floor = F::cast(1e-8);
    let two = F::cast(2.0);
    let mut worst = F::zero();
    for i in 0..x.data.len() {
        let mut plus = x.clone();
        plus.data[i] += h;
        let mut minus = x.clone();
        minus.data[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (two * h);
        let a = analytic.data[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
