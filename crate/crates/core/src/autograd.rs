//! Dense row-major matrices and a reverse-mode tape over them.
//!
//! A [`Tape`] borrows the model [`Parameters`], records every operation of
//! one forward pass, and [`Tape::backward`] returns the gradient of a
//! scalar node with respect to every parameter.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `a · b`
fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a · bᵀ`
fn matmul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_bt inner dimension");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b`
fn matmul_at(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_at inner dimension");
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let br = b.row(k);
        for (i, &av) in a.row(k).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered model parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.values.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|m| m.data.len()).sum()
    }

    /// Replaces values by name; every parameter must be supplied with the
    /// same shape it already has.
    pub fn load<'a, I>(&mut self, entries: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, Matrix)>,
    {
        let mut seen = vec![false; self.values.len()];
        for (name, m) in entries {
            let idx = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownParameter(name.into()))?;
            let cur = &self.values[idx];
            if cur.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected_rows: cur.rows,
                    expected_cols: cur.cols,
                    rows: m.rows,
                    cols: m.cols,
                });
            }
            self.values[idx] = m;
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::UnknownParameter(self.names[missing].clone()));
        }
        Ok(())
    }
}

/// Per-parameter gradients, aligned with [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(params: &Parameters) -> Self {
        Self { grads: params.values.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(self.grads.iter().map(Matrix::sum_squares).sum())
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in &mut g.data {
                *v *= s;
            }
        }
    }

    pub fn accumulate(&mut self, other: &Gradients, weight: f64) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += weight * y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Which key positions each query row may attend to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttentionMask {
    Full,
    /// `true` marks an attendable key (column); shared by all rows.
    Keys(Vec<bool>),
    /// Row `i` sees columns `0..=i + offset`.
    Causal { offset: usize },
}

impl AttentionMask {
    fn allows(&self, row: usize, col: usize) -> bool {
        match self {
            AttentionMask::Full => true,
            AttentionMask::Keys(k) => k[col],
            AttentionMask::Causal { offset } => col <= row + offset,
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gather(Var, Vec<usize>),
    Normalize(Var, Vec<f64>),
    Gelu(Var),
    Tanh(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Softmax(Var),
    BceWithLogits(Var, f64),
    CrossEntropy(Var, Vec<Option<usize>>, Vec<Vec<f64>>),
}

struct Node {
    value: Matrix,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_C * (x + GELU_A * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let t = libm::tanh(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Softmax of `row` restricted to positions where `allow` holds; excluded
/// positions get probability 0 and are never touched.
fn masked_softmax_row(row: &[f64], allow: impl Fn(usize) -> bool, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if allow(j) && v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for (j, &v) in row.iter().enumerate() {
        if allow(j) {
            let e = libm::exp(v - max);
            out[j] = e;
            sum += e;
        } else {
            out[j] = 0.0;
        }
    }
    if sum > 0.0 {
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    masked_softmax_row(row, |_| true, &mut out);
    out
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
    row.iter().map(|v| v - lse).collect()
}

pub struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Self { params, nodes: Vec::new(), param_nodes: vec![None; params.len()] }
    }

    pub fn parameters(&self) -> &'p Parameters {
        self.params
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let m = matmul(self.value(a), self.value(b));
        self.push(m, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let m = matmul_bt(self.value(a), self.value(b));
        self.push(m, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut m = self.value(a).clone();
        assert_eq!(m.shape(), self.value(b).shape(), "add shapes");
        m.add_assign(self.value(b));
        self.push(m, Op::Add(a, b))
    }

    /// Adds the `1 × cols` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!((1, self.value(x).cols), bv.shape(), "add_row shapes");
        let mut m = self.value(x).clone();
        let bias = bv.data.clone();
        for r in 0..m.rows {
            for (o, bb) in m.row_mut(r).iter_mut().zip(&bias) {
                *o += bb;
            }
        }
        self.push(m, Op::AddRow(x, b))
    }

    /// Multiplies every row of `x` elementwise by the `1 × cols` row `g`.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Var {
        let gv = self.value(g);
        assert_eq!((1, self.value(x).cols), gv.shape(), "mul_row shapes");
        let gain = gv.data.clone();
        let mut m = self.value(x).clone();
        for r in 0..m.rows {
            for (o, gg) in m.row_mut(r).iter_mut().zip(&gain) {
                *o *= gg;
            }
        }
        self.push(m, Op::MulRow(x, g))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut m = self.value(x).clone();
        for v in &mut m.data {
            *v *= s;
        }
        self.push(m, Op::Scale(x, s))
    }

    /// Rows of `table` picked by `ids` (embedding lookup, row selection).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut m = Matrix::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            m.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(m, Op::Gather(table, ids.to_vec()))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`.
    pub fn normalize(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut m = Matrix::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        let n = xv.cols as f64;
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let s = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            for (o, v) in m.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            inv_std.push(s);
        }
        self.push(m, Op::Normalize(x, inv_std))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let mut m = self.value(x).clone();
        for v in &mut m.data {
            *v = gelu(*v);
        }
        self.push(m, Op::Gelu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut m = self.value(x).clone();
        for v in &mut m.data {
            *v = libm::tanh(*v);
        }
        self.push(m, Op::Tanh(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice_cols bounds");
        let mut m = Matrix::zeros(xv.rows, len);
        for r in 0..xv.rows {
            m.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(m, Op::SliceCols(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows, rows, "concat_cols rows");
                m.row_mut(r)[off..off + pv.cols].copy_from_slice(pv.row(r));
                off += pv.cols;
            }
        }
        self.push(m, Op::ConcatCols(parts.to_vec()))
    }

    /// Row-wise softmax restricted by `mask`.
    pub fn softmax(&mut self, x: Var, mask: AttentionMask) -> Var {
        let xv = self.value(x);
        let mut m = Matrix::zeros(xv.rows, xv.cols);
        for r in 0..xv.rows {
            let cols = xv.cols;
            let out = &mut m.data[r * cols..(r + 1) * cols];
            masked_softmax_row(xv.row(r), |c| mask.allows(r, c), out);
        }
        self.push(m, Op::Softmax(x))
    }

    /// Numerically stable binary cross-entropy on a `1 × 1` logit.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Var {
        let z = self.scalar(logit);
        let loss = z.max(0.0) - z * target + libm::log1p(libm::exp(-z.abs()));
        self.push(Matrix::from_vec(1, 1, vec![loss]), Op::BceWithLogits(logit, target))
    }

    /// Mean next-token cross-entropy over rows with a target; rows with
    /// `None` contribute nothing and are not evaluated.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "cross_entropy rows");
        let count = targets.iter().filter(|t| t.is_some()).count();
        let mut total = 0.0;
        let mut probs = Vec::new();
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                let ls = log_softmax(lv.row(r));
                total -= ls[*t];
                probs.push(ls.iter().map(|v| libm::exp(*v)).collect());
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy(logits, targets.to_vec(), probs),
        )
    }

    /// Gradient of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |v: Var, m: Matrix| match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&m),
                slot @ None => *slot = Some(m),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    send(*a, matmul_bt(&g, self.value(*b)));
                    send(*b, matmul_at(self.value(*a), &g));
                }
                Op::MatMulBt(a, b) => {
                    send(*a, matmul(&g, self.value(*b)));
                    send(*b, matmul_at(&g, self.value(*a)));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::AddRow(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    send(*b, gb);
                    send(*x, g);
                }
                Op::MulRow(x, gain) => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain);
                    let mut gx = g.clone();
                    let mut gg = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            let gr = g.get(r, c);
                            gx.data[r * g.cols + c] = gr * gv.data[c];
                            gg.data[c] += gr * xv.get(r, c);
                        }
                    }
                    send(*x, gx);
                    send(*gain, gg);
                }
                Op::Scale(x, s) => {
                    let mut m = g;
                    for v in &mut m.data {
                        *v *= s;
                    }
                    send(*x, m);
                }
                Op::Gather(table, ids) => {
                    let tv = self.value(*table);
                    let mut gt = Matrix::zeros(tv.rows, tv.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    send(*table, gt);
                }
                Op::Normalize(x, inv_std) => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut gx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let gy = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gy.iter().sum::<f64>() / n;
                        let mean_gy = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, a), b) in gx.row_mut(r).iter_mut().zip(gy).zip(yr) {
                            *o = inv_std[r] * (a - mean_g - b * mean_gy);
                        }
                    }
                    send(*x, gx);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let mut m = g;
                    for (v, xi) in m.data.iter_mut().zip(&xv.data) {
                        *v *= gelu_grad(*xi);
                    }
                    send(*x, m);
                }
                Op::Tanh(x) => {
                    let mut m = g;
                    for (v, y) in m.data.iter_mut().zip(&node.value.data) {
                        *v *= 1.0 - y * y;
                    }
                    send(*x, m);
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(*x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pc = self.value(*p).cols;
                        let mut gp = Matrix::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                        }
                        send(*p, gp);
                        off += pc;
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, yy), gg) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yy * (gg - dot);
                        }
                    }
                    send(*x, gx);
                }
                Op::BceWithLogits(logit, target) => {
                    let z = self.scalar(*logit);
                    send(*logit, Matrix::from_vec(1, 1, vec![g.data[0] * (sigmoid(z) - target)]));
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let lv = self.value(*logits);
                    let count = probs.len();
                    let mut gl = Matrix::zeros(lv.rows, lv.cols);
                    let scale = g.data[0] / count.max(1) as f64;
                    let mut k = 0;
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            let row = gl.row_mut(r);
                            for (o, p) in row.iter_mut().zip(&probs[k]) {
                                *o = scale * p;
                            }
                            row[*t] -= scale;
                            k += 1;
                        }
                    }
                    send(*logits, gl);
                }
            }
        }
        out
    }
}


#[cfg(test)]
mod tests {
    use super::gradcheck::max_relative_error;
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, r: &mut rng::Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut r = rng::seeded(3);
        let mut p = Parameters::new();
        let a = p.add("a", random(3, 4, &mut r));
        let b = p.add("b", random(4, 4, &mut r));
        let bias = p.add("bias", random(1, 4, &mut r));
        let gain = p.add("gain", random(1, 4, &mut r));
        let table = p.add("table", random(5, 4, &mut r));
        let probes: Vec<(ParamId, usize)> = [a, b, bias, gain, table]
            .iter()
            .flat_map(|&id| (0..4).map(move |i| (id, i)))
            .collect();
        let err = max_relative_error(&p, &probes, 1e-5, |t| {
            let av = t.param(a);
            let bv = t.param(b);
            let x = t.matmul(av, bv);
            let bv = t.param(bias);
            let x = t.add_row(x, bv);
            let e = t.param(table);
            let g = t.gather(e, &[4, 0, 4]);
            let x = t.add(x, g);
            let x = t.normalize(x);
            let gv = t.param(gain);
            let x = t.mul_row(x, gv);
            let x = t.gelu(x);
            let h1 = t.slice_cols(x, 0, 2);
            let h2 = t.slice_cols(x, 2, 2);
            let s = t.matmul_bt(h1, h2);
            let s = t.scale(s, 0.7);
            let pr = t.softmax(s, AttentionMask::Causal { offset: 0 });
            let o = t.matmul(pr, h2);
            let o = t.concat_cols(&[o, h1]);
            let o = t.tanh(o);
            let logits = t.matmul_bt(o, e);
            t.cross_entropy(logits, &[Some(1), None, Some(3)])
        });
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn bce_gradient() {
        let mut p = Parameters::new();
        let w = p.add("w", Matrix::from_vec(1, 1, vec![0.3]));
        let err = max_relative_error(&p, &[(w, 0)], 1e-5, |t| {
            let v = t.param(w);
            let v = t.scale(v, 2.0);
            t.bce_with_logits(v, 1.0)
        });
        assert!(err < 1e-8);
    }

    #[test]
    fn masked_softmax_zeroes_excluded_keys() {
        let p = Parameters::new();
        let mut t = Tape::new(&p);
        let x = t.constant(Matrix::from_vec(1, 3, vec![1.0, 2.0, 50.0]));
        let y = t.softmax(x, AttentionMask::Keys(vec![true, true, false]));
        let v = t.value(y);
        assert_eq!(v.data[2], 0.0);
        assert!((v.data[0] + v.data[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn load_checks_shapes_and_names() {
        let mut p = Parameters::new();
        p.add("w", Matrix::zeros(2, 2));
        assert!(p.load([("w", Matrix::zeros(2, 2))]).is_ok());
        assert!(matches!(p.load([("w", Matrix::zeros(1, 2))]), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(p.load([("v", Matrix::zeros(2, 2))]), Err(Error::UnknownParameter(_))));
        assert!(matches!(
            p.load(core::iter::empty::<(&str, Matrix)>()),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
