use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use super::tensor::matmul_into;
use super::{Tensor, TensorError};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MatMul(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Ln(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    Scale(usize, f64),
    AddScalar(usize),
    Map { x: usize, derivative: fn(f64) -> f64 },
    GatherRows { table: usize, indices: Rc<[usize]> },
    SegmentSum { values: usize, ids: Rc<[usize]> },
    Dropout { x: usize, mask: Vec<f64> },
    Mean(usize),
    Sum(usize),
    ConcatRows(Vec<usize>),
    Reshape(usize),
    ScaleRows { x: usize, factors: Vec<f64> },
    SoftmaxCrossEntropy { logits: usize, targets: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Entry {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of executed operations.
///
/// Entries are appended as operations run, so every entry follows the
/// producers of its inputs and a reverse sweep is a valid backward order.
#[derive(Debug, Default)]
pub struct Tape {
    entries: RefCell<Vec<Entry>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when unreachable.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        let shape = &self.shapes[var.id];
        match &self.grads[var.id] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Adds the gradient of `var` into `buffer` (same shape).
    pub fn accumulate(&self, var: Var<'_>, buffer: &mut Tensor) {
        debug_assert_eq!(buffer.shape(), self.shapes[var.id].as_slice());
        if let Some(g) = &self.grads[var.id] {
            for (b, x) in buffer.data_mut().iter_mut().zip(g) {
                *b += x;
            }
        }
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() });
    }
    Ok(())
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(TensorError::Rank { op, expected: 2, shape: s.to_vec() }),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| f(*x)).collect()).expect("same shape")
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut entries = self.entries.borrow_mut();
        entries.push(Entry { value, op, needs_grad });
        Var { tape: self, id: entries.len() - 1 }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let entries = self.entries.borrow();
        ids.iter().any(|&i| entries[i].needs_grad)
    }

    /// Records a trainable leaf.
    pub fn param(&self, value: &Tensor) -> Var<'_> {
        self.push(value.clone(), Op::Leaf, true)
    }

    /// Records a constant leaf; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
        let value = {
            let entries = self.entries.borrow();
            let first = entries[*ids.first().ok_or(TensorError::Empty { op: "concat_rows" })?].value.shape().to_vec();
            let (_, cols) = require_rank2("concat_rows", &entries[ids[0]].value)?;
            let mut rows = 0;
            let mut data = Vec::new();
            for &i in &ids {
                let t = &entries[i].value;
                let (r, c) = require_rank2("concat_rows", t)?;
                if c != cols {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat_rows",
                        left: first,
                        right: t.shape().to_vec(),
                    });
                }
                rows += r;
                data.extend_from_slice(t.data());
            }
            Tensor::new(vec![rows, cols], data)?
        };
        let needs = self.needs(&ids);
        Ok(self.push(value, Op::ConcatRows(ids), needs))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        let entries = self.entries.borrow();
        let n = entries.len();
        let shapes: Vec<Vec<usize>> = entries.iter().map(|e| e.value.shape().to_vec()).collect();
        if entries[loss.id].value.numel() != 1 {
            return Err(TensorError::NotScalar { shape: shapes[loss.id].clone() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.id] = Some(vec![1.0]);

        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], entries: &[Entry], id: usize) -> Option<&'g mut Vec<f64>> {
            if !entries[id].needs_grad {
                return None;
            }
            Some(grads[id].get_or_insert_with(|| vec![0.0; entries[id].value.numel()]))
        }

        for id in (0..=loss.id).rev() {
            if !entries[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(entries[id].op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let out = &entries[id].value;
            match &entries[id].op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    for (&i, sign) in [(a, 1.0), (b, 1.0)] {
                        if let Some(s) = slot(&mut grads, &entries, i) {
                            s.iter_mut().zip(&g).for_each(|(x, y)| *x += sign * y);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    for (&i, sign) in [(a, 1.0), (b, -1.0)] {
                        if let Some(s) = slot(&mut grads, &entries, i) {
                            s.iter_mut().zip(&g).for_each(|(x, y)| *x += sign * y);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    for (&i, &other) in [(a, b), (b, a)] {
                        let ov = entries[other].value.data();
                        if let Some(s) = slot(&mut grads, &entries, i) {
                            for ((x, y), o) in s.iter_mut().zip(&g).zip(ov) {
                                *x += y * o;
                            }
                        }
                    }
                }
                Op::AddRow(x, b) => {
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        s.iter_mut().zip(&g).for_each(|(a, y)| *a += y);
                    }
                    let d = entries[*b].value.numel();
                    if let Some(s) = slot(&mut grads, &entries, *b) {
                        for (i, y) in g.iter().enumerate() {
                            s[i % d] += y;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let av = &entries[*a].value;
                    let bv = &entries[*b].value;
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let n = bv.shape()[1];
                    if let Some(s) = slot(&mut grads, &entries, *a) {
                        // dA = dC · Bᵀ
                        let bd = bv.data();
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bd[p * n..(p + 1) * n];
                                let mut acc = 0.0;
                                for (x, y) in grow.iter().zip(brow) {
                                    acc += x * y;
                                }
                                s[i * k + p] += acc;
                            }
                        }
                    }
                    if let Some(s) = slot(&mut grads, &entries, *b) {
                        // dB = Aᵀ · dC
                        let ad = av.data();
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let aip = ad[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                let srow = &mut s[p * n..(p + 1) * n];
                                for (x, y) in srow.iter_mut().zip(grow) {
                                    *x += aip * y;
                                }
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = entries[*x].value.data();
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for ((a, y), xi) in s.iter_mut().zip(&g).zip(xv) {
                            if *xi > 0.0 {
                                *a += y;
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for ((a, y), p) in s.iter_mut().zip(&g).zip(out.data()) {
                            *a += y * p * (1.0 - p);
                        }
                    }
                }
                Op::Ln(x) => {
                    let xv = entries[*x].value.data();
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for ((a, y), xi) in s.iter_mut().zip(&g).zip(xv) {
                            *a += y / xi;
                        }
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = entries[*x].value.data();
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for ((a, y), xi) in s.iter_mut().zip(&g).zip(xv) {
                            if *xi >= *lo && *xi <= *hi {
                                *a += y;
                            }
                        }
                    }
                }
                Op::Scale(x, c) => {
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        s.iter_mut().zip(&g).for_each(|(a, y)| *a += c * y);
                    }
                }
                Op::AddScalar(x) | Op::Reshape(x) => {
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        s.iter_mut().zip(&g).for_each(|(a, y)| *a += y);
                    }
                }
                Op::Map { x, derivative } => {
                    let xv = entries[*x].value.data();
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for ((a, y), xi) in s.iter_mut().zip(&g).zip(xv) {
                            *a += y * derivative(*xi);
                        }
                    }
                }
                Op::GatherRows { table, indices } => {
                    let d = out.cols();
                    if let Some(s) = slot(&mut grads, &entries, *table) {
                        for (i, &row) in indices.iter().enumerate() {
                            let src = &g[i * d..(i + 1) * d];
                            for (a, y) in s[row * d..(row + 1) * d].iter_mut().zip(src) {
                                *a += y;
                            }
                        }
                    }
                }
                Op::SegmentSum { values, ids } => {
                    let d = out.cols();
                    if let Some(s) = slot(&mut grads, &entries, *values) {
                        for (i, &seg) in ids.iter().enumerate() {
                            let src = &g[seg * d..(seg + 1) * d];
                            for (a, y) in s[i * d..(i + 1) * d].iter_mut().zip(src) {
                                *a += y;
                            }
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for ((a, y), m) in s.iter_mut().zip(&g).zip(mask) {
                            *a += y * m;
                        }
                    }
                }
                Op::Mean(x) => {
                    let n = entries[*x].value.numel() as f64;
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        s.iter_mut().for_each(|a| *a += g[0] / n);
                    }
                }
                Op::Sum(x) => {
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        s.iter_mut().for_each(|a| *a += g[0]);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = entries[p].value.numel();
                        if let Some(s) = slot(&mut grads, &entries, p) {
                            s.iter_mut().zip(&g[start..start + len]).for_each(|(a, y)| *a += y);
                        }
                        start += len;
                    }
                }
                Op::ScaleRows { x, factors } => {
                    let d = out.cols();
                    if let Some(s) = slot(&mut grads, &entries, *x) {
                        for (i, (a, y)) in s.iter_mut().zip(&g).enumerate() {
                            *a += y * factors[i / d];
                        }
                    }
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let c = entries[*logits].value.cols();
                    let n = targets.len() as f64;
                    if let Some(s) = slot(&mut grads, &entries, *logits) {
                        for (r, &t) in targets.iter().enumerate() {
                            for j in 0..c {
                                let onehot = if j == t { 1.0 } else { 0.0 };
                                s[r * c + j] += g[0] * (probs[r * c + j] - onehot) / n;
                            }
                        }
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }
}

// Fallible ops return Result, so they cannot be the std::ops traits.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.entries.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.entries.borrow()[self.id].value.shape().to_vec()
    }

    fn unary(self, f: impl FnOnce(&Tensor) -> Result<(Tensor, Op), TensorError>) -> Result<Var<'t>, TensorError> {
        let (value, op) = {
            let entries = self.tape.entries.borrow();
            f(&entries[self.id].value)?
        };
        let needs = self.tape.needs(&[self.id]);
        Ok(self.tape.push(value, op, needs))
    }

    fn binary(
        self,
        other: Var<'t>,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<(Tensor, Op), TensorError>,
    ) -> Result<Var<'t>, TensorError> {
        let (value, op) = {
            let entries = self.tape.entries.borrow();
            f(&entries[self.id].value, &entries[other.id].value)?
        };
        let needs = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(value, op, needs))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.id, other.id);
        self.binary(other, |x, y| {
            check_same("add", x, y)?;
            Ok((zip_map(x, y, |p, q| p + q), Op::Add(a, b)))
        })
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.id, other.id);
        self.binary(other, |x, y| {
            check_same("sub", x, y)?;
            Ok((zip_map(x, y, |p, q| p - q), Op::Sub(a, b)))
        })
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.id, other.id);
        self.binary(other, |x, y| {
            check_same("mul", x, y)?;
            Ok((zip_map(x, y, |p, q| p * q), Op::Mul(a, b)))
        })
    }

    /// Adds a `[d]` row vector to every row of a `[n, d]` matrix.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.id, bias.id);
        self.binary(bias, |x, r| {
            let (_, d) = require_rank2("add_row", x)?;
            if r.numel() != d {
                return Err(TensorError::ShapeMismatch {
                    op: "add_row",
                    left: x.shape().to_vec(),
                    right: r.shape().to_vec(),
                });
            }
            let rd = r.data();
            let data = x.data().iter().enumerate().map(|(i, v)| v + rd[i % d]).collect();
            Ok((Tensor::new(x.shape().to_vec(), data)?, Op::AddRow(a, b)))
        })
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.id, other.id);
        self.binary(other, |x, y| {
            let (m, k) = require_rank2("matmul", x)?;
            let (k2, n) = require_rank2("matmul", y)?;
            if k != k2 {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    left: x.shape().to_vec(),
                    right: y.shape().to_vec(),
                });
            }
            let mut c = vec![0.0; m * n];
            matmul_into(x.data(), y.data(), &mut c, m, k, n);
            Ok((Tensor::new(vec![m, n], c)?, Op::MatMul(a, b)))
        })
    }

    pub fn relu(self) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|x| Ok((map(x, |v| if v > 0.0 { v } else { 0.0 }), Op::Relu(id))))
    }

    pub fn sigmoid(self) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|x| Ok((map(x, sigmoid_scalar), Op::Sigmoid(id))))
    }

    pub fn ln(self) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|x| Ok((map(x, f64::ln), Op::Ln(id))))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'t>, TensorError> {
        let x = self.id;
        self.unary(|t| Ok((map(t, |v| v.clamp(lo, hi)), Op::Clamp { x, lo, hi })))
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|x| Ok((map(x, |v| v * c), Op::Scale(id, c))))
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|x| Ok((map(x, |v| v + c), Op::AddScalar(id))))
    }

    /// Elementwise map with a caller-supplied derivative.
    pub fn map(self, f: fn(f64) -> f64, derivative: fn(f64) -> f64) -> Result<Var<'t>, TensorError> {
        let x = self.id;
        self.unary(|t| Ok((map(t, f), Op::Map { x, derivative })))
    }

    /// Rows `indices` of a `[V, d]` table, as `[indices.len(), d]`.
    pub fn gather_rows(self, indices: impl Into<Rc<[usize]>>) -> Result<Var<'t>, TensorError> {
        let indices: Rc<[usize]> = indices.into();
        let table = self.id;
        self.unary(|t| {
            let (v, d) = require_rank2("gather_rows", t)?;
            let mut data = Vec::with_capacity(indices.len() * d);
            for &i in indices.iter() {
                if i >= v {
                    return Err(TensorError::IndexOutOfRange { index: i, rows: v });
                }
                data.extend_from_slice(t.row(i));
            }
            Ok((Tensor::new(vec![indices.len(), d], data)?, Op::GatherRows { table, indices }))
        })
    }

    /// Sums rows of `[N, d]` into `num_segments` buckets given by `ids`.
    pub fn segment_sum(self, ids: impl Into<Rc<[usize]>>, num_segments: usize) -> Result<Var<'t>, TensorError> {
        let ids: Rc<[usize]> = ids.into();
        let values = self.id;
        self.unary(|t| {
            let (n, d) = require_rank2("segment_sum", t)?;
            if ids.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "segment_sum",
                    left: t.shape().to_vec(),
                    right: vec![ids.len()],
                });
            }
            let mut out = vec![0.0; num_segments * d];
            for (i, &s) in ids.iter().enumerate() {
                if s >= num_segments {
                    return Err(TensorError::SegmentOutOfRange { id: s, num_segments });
                }
                for (o, v) in out[s * d..(s + 1) * d].iter_mut().zip(t.row(i)) {
                    *o += v;
                }
            }
            Ok((Tensor::new(vec![num_segments, d], out)?, Op::SegmentSum { values, ids }))
        })
    }

    /// Inverted dropout; identity when not training or `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(self, rate: f64, rng: &mut R, training: bool) -> Result<Var<'t>, TensorError> {
        if !training || rate == 0.0 {
            return Ok(self);
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidRate(rate));
        }
        let x = self.id;
        let keep = 1.0 / (1.0 - rate);
        self.unary(|t| {
            let mask: Vec<f64> = (0..t.numel()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
            let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            Ok((Tensor::new(t.shape().to_vec(), data)?, Op::Dropout { x, mask }))
        })
    }

    pub fn mean(self) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|t| {
            if t.numel() == 0 {
                return Err(TensorError::Empty { op: "mean" });
            }
            let s: f64 = t.data().iter().sum();
            Ok((Tensor::scalar(s / t.numel() as f64), Op::Mean(id)))
        })
    }

    pub fn sum(self) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|t| Ok((Tensor::scalar(t.data().iter().sum()), Op::Sum(id))))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let id = self.id;
        self.unary(|t| Ok((Tensor::new(shape.to_vec(), t.data().to_vec())?, Op::Reshape(id))))
    }

    /// Multiplies row `i` of a `[n, d]` matrix by the constant `factors[i]`.
    pub fn scale_rows(self, factors: Vec<f64>) -> Result<Var<'t>, TensorError> {
        let x = self.id;
        self.unary(|t| {
            let (n, d) = require_rank2("scale_rows", t)?;
            if factors.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "scale_rows",
                    left: t.shape().to_vec(),
                    right: vec![factors.len()],
                });
            }
            let data = t.data().iter().enumerate().map(|(i, v)| v * factors[i / d]).collect();
            Ok((Tensor::new(t.shape().to_vec(), data)?, Op::ScaleRows { x, factors }))
        })
    }

    /// Mean softmax cross-entropy of `[n, c]` logits against class indices.
    pub fn softmax_cross_entropy(self, targets: &[usize]) -> Result<Var<'t>, TensorError> {
        let logits = self.id;
        self.unary(|t| {
            let (n, c) = require_rank2("softmax_cross_entropy", t)?;
            if targets.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax_cross_entropy",
                    left: t.shape().to_vec(),
                    right: vec![targets.len()],
                });
            }
            if n == 0 {
                return Err(TensorError::Empty { op: "softmax_cross_entropy" });
            }
            let mut probs = vec![0.0; n * c];
            let mut loss = 0.0;
            for (r, &target) in targets.iter().enumerate() {
                if target >= c {
                    return Err(TensorError::IndexOutOfRange { index: target, rows: c });
                }
                let row = t.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                for j in 0..c {
                    probs[r * c + j] = (row[j] - max).exp() / z;
                }
                loss -= row[target] - max - z.ln();
            }
            let targets = targets.to_vec();
            Ok((Tensor::scalar(loss / n as f64), Op::SoftmaxCrossEntropy { logits, targets, probs }))
        })
    }
}
