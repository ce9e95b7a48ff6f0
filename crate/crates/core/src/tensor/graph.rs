//! Tape-based reverse-mode automatic differentiation over 2-D arrays.
//!
//! Every operation appends a node to the tape holding its forward value and
//! the parents it was computed from. Nodes are only ever appended, so the
//! tape order is already a topological order and `backward` is a single
//! reverse sweep.
//!
//! Shape mismatches are programming errors and panic with both shapes in the
//! message.

use alloc::vec;
use alloc::vec::Vec;
use core::mem;

use libm::{exp, log};
use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
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
    AddScalar(Var),
    ScaleBy(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Softmax(Var, usize),
    Sum(Var, Option<usize>),
    MaskedFill(Var, Vec<bool>),
    Dropout(Var, Vec<f64>),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize),
    PadRows(Var),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// A recorded computation.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let requires_grad = self.parents_require_grad(&op);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn parents_require_grad(&self, op: &Op) -> bool {
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Leaf => false,
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScaleBy(a, b)
            | Op::AddRow(a, b)
            | Op::MatMul(a, b) => rg(a) || rg(b),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Softmax(a, _)
            | Op::Sum(a, _)
            | Op::MaskedFill(a, _)
            | Op::Dropout(a, _)
            | Op::GatherRows(a, _)
            | Op::SliceRows(a, _)
            | Op::PadRows(a) => rg(a),
        }
    }

    fn leaf(&mut self, tensor: &Tensor, requires_grad: bool) -> Var {
        let (rows, cols) = tensor.dims2();
        let v = self.push(rows, cols, tensor.data().to_vec(), Op::Leaf);
        self.nodes[v.0].requires_grad = requires_grad;
        v
    }

    /// A trainable leaf. Its gradient is available after [`Graph::backward`].
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        self.leaf(tensor, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: &Tensor) -> Var {
        self.leaf(tensor, false)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(
            rows * cols,
            data.len(),
            "constant_matrix: shape ({rows}, {cols}) does not match {} values",
            data.len()
        );
        self.push(rows, cols, data, Op::Leaf)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = &self.nodes[v.0];
        assert_eq!(n.value.len(), 1, "scalar: node has shape ({}, {})", n.rows, n.cols);
        n.value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("node shape is consistent")
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> (usize, usize) {
        let sa = self.shape(a);
        let sb = self.shape(b);
        assert!(sa == sb, "{op}: shape mismatch {sa:?} vs {sb:?}");
        sa
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64, name: &str) -> Var {
        let (r, c) = self.same_shape(name, a, b);
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(r, c, value, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.shape(a);
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(r, c, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, Op::Scale(a, k), |x| x * k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + k)
    }

    /// Multiply every element of `a` by the single element of `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let ss = self.shape(s);
        assert!(ss == (1, 1), "scale_by: scalar operand has shape {ss:?}, expected (1, 1)");
        let k = self.nodes[s.0].value[0];
        self.map(a, Op::ScaleBy(a, s), |x| x * k)
    }

    /// Add the 1 x c row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        let sr = self.shape(row);
        assert!(sr == (1, c), "add_row: shape mismatch {:?} vs row {sr:?}", (r, c));
        let rv = &self.nodes[row.0].value;
        let value = self.nodes[a.0]
            .value
            .chunks_exact(c.max(1))
            .flat_map(|chunk| chunk.iter().zip(rv).map(|(&x, &y)| x + y))
            .collect::<Vec<_>>();
        let value = if c == 0 { Vec::new() } else { value };
        self.push(r, c, value, Op::AddRow(a, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert!(k == k2, "matmul: shape mismatch {:?} vs {:?}", (m, k), (k2, n));
        let mut out = vec![0.0; m * n];
        matmul_into(&self.nodes[a.0].value, &self.nodes[b.0].value, &mut out, m, k, n);
        self.push(m, n, out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = transposed(&self.nodes[a.0].value, r, c);
        self.push(c, r, out, Op::Transpose(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), log)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// `ln(sigmoid(x))`, evaluated without overflow for large `|x|`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::LogSigmoid(a), log_sigmoid)
    }

    /// Softmax along `axis` (0 normalizes each column, 1 normalizes each row).
    ///
    /// A slice whose entries are all `-inf` produces zeros rather than NaN.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Var {
        assert!(axis < 2, "softmax: axis {axis} out of range for a 2-D node");
        let (r, c) = self.shape(a);
        let mut out = self.nodes[a.0].value.clone();
        for_each_slice(r, c, axis, |idx| softmax_slice(&mut out, idx));
        self.push(r, c, out, Op::Softmax(a, axis))
    }

    /// Sum along `axis` (0 gives a 1 x c row, 1 gives an r x 1 column).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        assert!(axis < 2, "sum_axis: axis {axis} out of range for a 2-D node");
        let (r, c) = self.shape(a);
        let v = &self.nodes[a.0].value;
        let (out, rows, cols) = if axis == 0 {
            let mut out = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    out[j] += v[i * c + j];
                }
            }
            (out, 1, c)
        } else {
            let out = (0..r).map(|i| v[i * c..(i + 1) * c].iter().sum()).collect();
            (out, r, 1)
        };
        self.push(rows, cols, out, Op::Sum(a, Some(axis)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a, None))
    }

    /// Replace entries where `keep` is false by `fill`; those entries pass no gradient.
    pub fn masked_fill(&mut self, a: Var, keep: Vec<bool>, fill: f64) -> Var {
        let (r, c) = self.shape(a);
        assert!(
            keep.len() == r * c,
            "masked_fill: mask of {} entries for shape {:?}",
            keep.len(),
            (r, c)
        );
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&keep)
            .map(|(&x, &k)| if k { x } else { fill })
            .collect();
        self.push(r, c, out, Op::MaskedFill(a, keep))
    }

    /// Inverted dropout: entries are zeroed with probability `rate` and the
    /// survivors scaled by `1 / (1 - rate)`. Identity when `train` is false.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R, train: bool) -> Var {
        if !train || rate <= 0.0 {
            return a;
        }
        assert!(rate < 1.0, "dropout: rate {rate} must be below 1");
        let (r, c) = self.shape(a);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        self.push(r, c, out, Op::Dropout(a, mask))
    }

    /// Row lookup, as used for embedding tables. Gradients accumulate into the
    /// looked-up rows, so repeated indices add up.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let (r, c) = self.shape(table);
        let v = &self.nodes[table.0].value;
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < r, "gather_rows: index {i} out of range for shape {:?}", (r, c));
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        self.push(idx.len(), c, out, Op::GatherRows(table, idx.to_vec()))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start <= end && end <= r, "slice_rows: {start}..{end} out of range for shape {:?}", (r, c));
        let out = self.nodes[a.0].value[start * c..end * c].to_vec();
        self.push(end - start, c, out, Op::SliceRows(a, start))
    }

    /// Append zero rows to `a` until it has `rows` rows.
    pub fn pad_rows(&mut self, a: Var, rows: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(rows >= r, "pad_rows: cannot pad shape {:?} to {rows} rows", (r, c));
        let mut out = self.nodes[a.0].value.clone();
        out.resize(rows * c, 0.0);
        self.push(rows, c, out, Op::PadRows(a))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of every node reachable
    /// from `loss` that requires grad are populated, replacing any previous
    /// gradients on this graph.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(TensorError::NonScalarLoss { rows: r, cols: c });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [f64], &[Node])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let mut g = self.nodes[v.0].grad.take().unwrap_or_else(|| vec![0.0; len]);
        f(&mut g, &self.nodes);
        self.nodes[v.0].grad = Some(g);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let op = mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(*a, |ga, _| add_assign(ga, g));
                self.accumulate(*b, |gb, _| add_assign(gb, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, |ga, _| add_assign(ga, g));
                self.accumulate(*b, |gb, _| {
                    for (x, &d) in gb.iter_mut().zip(g) {
                        *x -= d;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, |ga, nodes| {
                    for ((x, &d), &y) in ga.iter_mut().zip(g).zip(&nodes[b.0].value) {
                        *x += d * y;
                    }
                });
                self.accumulate(b, |gb, nodes| {
                    for ((x, &d), &y) in gb.iter_mut().zip(g).zip(&nodes[a.0].value) {
                        *x += d * y;
                    }
                });
            }
            Op::Scale(a, k) => {
                let k = *k;
                self.accumulate(*a, |ga, _| {
                    for (x, &d) in ga.iter_mut().zip(g) {
                        *x += d * k;
                    }
                });
            }
            Op::AddScalar(a) => self.accumulate(*a, |ga, _| add_assign(ga, g)),
            Op::ScaleBy(a, s) => {
                let (a, s) = (*a, *s);
                let k = self.nodes[s.0].value[0];
                self.accumulate(a, |ga, _| {
                    for (x, &d) in ga.iter_mut().zip(g) {
                        *x += d * k;
                    }
                });
                self.accumulate(s, |gs, nodes| {
                    gs[0] += g.iter().zip(&nodes[a.0].value).map(|(&d, &x)| d * x).sum::<f64>();
                });
            }
            Op::AddRow(a, row) => {
                self.accumulate(*a, |ga, _| add_assign(ga, g));
                self.accumulate(*row, |gr, _| {
                    for chunk in g.chunks_exact(cols.max(1)) {
                        add_assign(gr, chunk);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = self.shape(a);
                let n = cols;
                // dA = dC * B^T
                self.accumulate(a, |ga, nodes| {
                    let bv = &nodes[b.0].value;
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += dot(grow, brow);
                        }
                    }
                });
                // dB = A^T * dC
                self.accumulate(b, |gb, nodes| {
                    let av = &nodes[a.0].value;
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip != 0.0 {
                                axpy(&mut gb[p * n..(p + 1) * n], aip, grow);
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                self.accumulate(*a, |ga, _| {
                    // node is (rows, cols), parent is (cols, rows)
                    for i in 0..rows {
                        for j in 0..cols {
                            ga[j * rows + i] += g[i * cols + j];
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let out = &self.nodes[i].value;
                let local: Vec<f64> = g.iter().zip(out).map(|(&d, &y)| d * y).collect();
                self.accumulate(*a, |ga, _| add_assign(ga, &local));
            }
            Op::Log(a) => {
                let a = *a;
                self.accumulate(a, |ga, nodes| {
                    for ((x, &d), &v) in ga.iter_mut().zip(g).zip(&nodes[a.0].value) {
                        *x += d / v;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[i].value;
                let local: Vec<f64> = g.iter().zip(out).map(|(&d, &y)| d * y * (1.0 - y)).collect();
                self.accumulate(*a, |ga, _| add_assign(ga, &local));
            }
            Op::LogSigmoid(a) => {
                let a = *a;
                self.accumulate(a, |ga, nodes| {
                    for ((x, &d), &v) in ga.iter_mut().zip(g).zip(&nodes[a.0].value) {
                        *x += d * sigmoid(-v);
                    }
                });
            }
            Op::Softmax(a, axis) => {
                let y = &self.nodes[i].value;
                let mut local = vec![0.0; y.len()];
                for_each_slice(rows, cols, *axis, |idx| {
                    let inner: f64 = idx.clone().map(|t| g[t] * y[t]).sum();
                    for t in idx {
                        local[t] = y[t] * (g[t] - inner);
                    }
                });
                self.accumulate(*a, |ga, _| add_assign(ga, &local));
            }
            Op::Sum(a, axis) => {
                let (pr, pc) = self.shape(*a);
                self.accumulate(*a, |ga, _| match axis {
                    None => {
                        for x in ga.iter_mut() {
                            *x += g[0];
                        }
                    }
                    Some(0) => {
                        for r in 0..pr {
                            add_assign(&mut ga[r * pc..(r + 1) * pc], g);
                        }
                    }
                    Some(_) => {
                        for r in 0..pr {
                            for x in &mut ga[r * pc..(r + 1) * pc] {
                                *x += g[r];
                            }
                        }
                    }
                });
            }
            Op::MaskedFill(a, keep) => {
                self.accumulate(*a, |ga, _| {
                    for ((x, &d), &k) in ga.iter_mut().zip(g).zip(keep) {
                        if k {
                            *x += d;
                        }
                    }
                });
            }
            Op::Dropout(a, mask) => {
                self.accumulate(*a, |ga, _| {
                    for ((x, &d), &m) in ga.iter_mut().zip(g).zip(mask) {
                        *x += d * m;
                    }
                });
            }
            Op::GatherRows(table, idx) => {
                self.accumulate(*table, |gt, _| {
                    for (r, &t) in idx.iter().enumerate() {
                        add_assign(&mut gt[t * cols..(t + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let start = *start;
                self.accumulate(*a, |ga, _| {
                    add_assign(&mut ga[start * cols..(start + rows) * cols], g);
                });
            }
            Op::PadRows(a) => {
                self.accumulate(*a, |ga, _| {
                    let len = ga.len();
                    add_assign(ga, &g[..len]);
                });
            }
        }
        self.nodes[i].op = op;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    // ln σ(x) = min(x, 0) - ln(1 + e^{-|x|})
    x.min(0.0) - libm::log1p(exp(-x.abs()))
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(x) {
        *d += a * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(orow, aip, &b[p * n..(p + 1) * n]);
            }
        }
    }
}

fn transposed(v: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = v[i * c + j];
        }
    }
    out
}

/// Visit each softmax slice as a strided index iterator.
fn for_each_slice(
    rows: usize,
    cols: usize,
    axis: usize,
    mut f: impl FnMut(core::iter::StepBy<core::ops::Range<usize>>),
) {
    if axis == 1 {
        for r in 0..rows {
            f((r * cols..(r + 1) * cols).step_by(1));
        }
    } else {
        for c in 0..cols {
            f((c..rows * cols).step_by(cols.max(1)));
        }
    }
}

fn softmax_slice(v: &mut [f64], idx: core::iter::StepBy<core::ops::Range<usize>>) {
    let max = idx.clone().map(|t| v[t]).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        for t in idx {
            v[t] = 0.0;
        }
        return;
    }
    let mut total = 0.0;
    for t in idx.clone() {
        let e = exp(v[t] - max);
        v[t] = e;
        total += e;
    }
    for t in idx {
        v[t] /= total;
    }
}
