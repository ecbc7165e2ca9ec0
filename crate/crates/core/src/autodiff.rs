//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every network in the crate is written against [`Graph`]. Parameters live in
//! a [`ParamStore`] and enter a graph as leaves via [`Graph::param`]; after
//! [`Graph::backward`] the gradient of every touched parameter is returned as a
//! [`Grads`] table indexed like the store. Constants (inputs, detached values)
//! never receive gradients, and subgraphs that do not depend on any parameter
//! are skipped during the backward sweep.

use ndarray::{concatenate, s, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Index of a parameter tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, shaped parameter tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    /// Scalar count of the given subset of parameters.
    pub fn numel_of(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|id| self.values[id.0].len()).sum()
    }

    /// Copies every value from `other`, which must have the same layout.
    pub fn copy_from(&mut self, other: &ParamStore) {
        assert_eq!(self.names, other.names, "parameter layouts differ");
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            dst.assign(src);
        }
    }

    /// Whether `other` holds the same names with the same shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| a.dim() == b.dim())
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect()
    }
}

/// Per-parameter gradients produced by [`Graph::backward`]. Parameters that
/// did not influence the loss have no entry.
#[derive(Clone, Debug, Default)]
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Mat)> {
        self.grads
            .iter_mut()
            .enumerate()
            .filter_map(|(i, g)| g.as_mut().map(|g| (ParamId(i), g)))
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * factor);
        }
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub(crate) fn from_vec(grads: Vec<Option<Mat>>) -> Self {
        Self { grads }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Elu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    Reshape(Var),
    GatherCols(Var, Vec<usize>),
    RowSum(Var),
    Sum(Var),
    BlockRowMatVec(Var, Var, usize),
    BceWithLogits(Var, Mat),
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// The tape. Nodes are appended in evaluation order, so the backward sweep is
/// a reverse walk over the node list.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    param_of: HashMap<usize, ParamId>,
    stop_gradients: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
            params: HashMap::new(),
            param_of: HashMap::new(),
            stop_gradients: true,
        }
    }

    /// A graph on which `detach` passes gradients through, so the backward
    /// pass differentiates the loss value itself. Used by gradient checks.
    pub fn without_stop_gradients() -> Self {
        Self {
            stop_gradients: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.len(), 1);
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// A constant leaf; never receives gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.constant(Mat::from_elem((1, 1), x))
    }

    /// The leaf for a parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params.insert(id, v);
        self.param_of.insert(v.0, id);
        v
    }

    /// A constant copy of `v`: same value, gradient stops here.
    pub fn detach(&mut self, v: Var) -> Var {
        if !self.stop_gradients {
            return v;
        }
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// `a` (m×n) plus row vector `row` (1×n) broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row shape mismatch");
        let value = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a, row), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// `a` (m×n) times column vector `col` (m×1) broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (m, _) = self.shape(a);
        assert_eq!(self.shape(col), (m, 1), "mul_col shape mismatch");
        let value = self.value(a) * self.value(col);
        let rg = self.rg(a) || self.rg(col);
        self.push(value, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// `c - a`
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, c)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).mapv(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { x.exp_m1() }, Op::Elu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Elementwise clamp; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Column-wise concatenation.
    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("hcat row mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::HCat(parts.to_vec()), rg)
    }

    /// Row-wise concatenation.
    pub fn vcat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = concatenate(Axis(0), &views).expect("vcat column mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::VCat(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start, end), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceRows(a, start, end), rg)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), rows * cols, "reshape size mismatch");
        let flat: Vec<f64> = src.iter().copied().collect();
        let value = Mat::from_shape_vec((rows, cols), flat).expect("reshape");
        let rg = self.rg(a);
        self.push(value, Op::Reshape(a), rg)
    }

    /// Picks `a[i, idx[i]]` into an m×1 column.
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), idx.len(), "gather_cols length mismatch");
        let value = Mat::from_shape_fn((idx.len(), 1), |(i, _)| src[[i, idx[i]]]);
        let rg = self.rg(a);
        self.push(value, Op::GatherCols(a, idx.to_vec()), rg)
    }

    /// Sum over columns: m×n → m×1.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Mat::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-row vector–matrix product. `v` is B×n and `w` is B×(n·cols), each
    /// row of `w` being a row-major n×cols matrix; the result is B×cols with
    /// `out[b, j] = Σ_i v[b, i] · w[b, i·cols + j]`.
    pub fn block_row_matvec(&mut self, v: Var, w: Var, cols: usize) -> Var {
        let (b, n) = self.shape(v);
        assert_eq!(self.shape(w), (b, n * cols), "block_row_matvec shape mismatch");
        let vv = self.value(v);
        let wv = self.value(w);
        let mut out = Mat::zeros((b, cols));
        for r in 0..b {
            for i in 0..n {
                let x = vv[[r, i]];
                for j in 0..cols {
                    out[[r, j]] += x * wv[[r, i * cols + j]];
                }
            }
        }
        let rg = self.rg(v) || self.rg(w);
        self.push(out, Op::BlockRowMatVec(v, w, cols), rg)
    }

    /// Elementwise numerically stable binary cross-entropy of `logits`
    /// against constant `targets` in [0, 1].
    pub fn bce_with_logits(&mut self, logits: Var, targets: Mat) -> Var {
        assert_eq!(self.shape(logits), targets.dim(), "bce shape mismatch");
        let mut value = self.value(logits).clone();
        Zip::from(&mut value).and(&targets).for_each(|x, &y| {
            let l = *x;
            *x = l.max(0.0) - l * y + (-l.abs()).exp().ln_1p();
        });
        let rg = self.rg(logits);
        self.push(value, Op::BceWithLogits(logits, targets), rg)
    }

    /// Reverse sweep from scalar `loss`. Returns gradients for every parameter
    /// leaf reachable from it, sized to `store`.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Grads {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        let mut out = vec![None; store.len()];
        for (&node, &pid) in &self.param_of {
            if let Some(g) = grads[node].take() {
                out[pid.0] = Some(g);
            }
        }
        Grads::from_vec(out)
    }

    /// Gradient of scalar `loss` with respect to arbitrary nodes (leaves or
    /// intermediates) that require grad.
    pub fn grad_wrt(&self, loss: Var, wrt: &[Var]) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::ones((1, 1)));
        let keep: std::collections::HashSet<usize> = wrt.iter().map(|v| v.0).collect();
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = if keep.contains(&i) {
                grads[i].clone()
            } else {
                grads[i].take()
            };
            if let Some(g) = g {
                self.propagate(i, &g, &mut grads);
            }
        }
        wrt.iter().map(|v| grads[v.0].clone()).collect()
    }

    fn accum(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accum(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    self.accum(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                self.accum(grads, *a, g.clone());
                if self.rg(*row) {
                    self.accum(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                if self.rg(*b) {
                    self.accum(grads, *b, -g);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accum(grads, *a, g * self.value(*b));
                }
                if self.rg(*b) {
                    self.accum(grads, *b, g * self.value(*a));
                }
            }
            Op::MulCol(a, col) => {
                if self.rg(*a) {
                    self.accum(grads, *a, g * self.value(*col));
                }
                if self.rg(*col) {
                    let gc = (g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    self.accum(grads, *col, gc);
                }
            }
            Op::Scale(a, c) => self.accum(grads, *a, g * *c),
            Op::AddScalar(a) => self.accum(grads, *a, g.clone()),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                self.accum(grads, *a, d);
            }
            Op::Elu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d *= x.exp()
                        }
                    });
                self.accum(grads, *a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                self.accum(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= y * (1.0 - y));
                self.accum(grads, *a, d);
            }
            Op::Exp(a) => self.accum(grads, *a, g * &node.value),
            Op::Abs(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| *d *= sign(x));
                self.accum(grads, *a, d);
            }
            Op::Square(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| *d *= 2.0 * x);
                self.accum(grads, *a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0
                        }
                    });
                self.accum(grads, *a, d);
            }
            Op::HCat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    if self.rg(p) {
                        self.accum(grads, p, g.slice(s![.., start..start + w]).to_owned());
                    }
                    start += w;
                }
            }
            Op::VCat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value(p).nrows();
                    if self.rg(p) {
                        self.accum(grads, p, g.slice(s![start..start + h, ..]).to_owned());
                    }
                    start += h;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Mat::zeros(self.value(*a).raw_dim());
                d.slice_mut(s![.., *start..*end]).assign(g);
                self.accum(grads, *a, d);
            }
            Op::SliceRows(a, start, end) => {
                let mut d = Mat::zeros(self.value(*a).raw_dim());
                d.slice_mut(s![*start..*end, ..]).assign(g);
                self.accum(grads, *a, d);
            }
            Op::Reshape(a) => {
                let dim = self.value(*a).raw_dim();
                let flat: Vec<f64> = g.iter().copied().collect();
                self.accum(grads, *a, Mat::from_shape_vec(dim, flat).expect("reshape"));
            }
            Op::GatherCols(a, idx) => {
                let mut d = Mat::zeros(self.value(*a).raw_dim());
                for (r, &c) in idx.iter().enumerate() {
                    d[[r, c]] = g[[r, 0]];
                }
                self.accum(grads, *a, d);
            }
            Op::RowSum(a) => {
                let dim = self.value(*a).raw_dim();
                let d = Mat::from_shape_fn(dim, |(r, _)| g[[r, 0]]);
                self.accum(grads, *a, d);
            }
            Op::Sum(a) => {
                let d = Mat::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                self.accum(grads, *a, d);
            }
            Op::BlockRowMatVec(v, w, cols) => {
                let vv = self.value(*v);
                let wv = self.value(*w);
                let (b, n) = vv.dim();
                if self.rg(*v) {
                    let mut dv = Mat::zeros((b, n));
                    for r in 0..b {
                        for i in 0..n {
                            let mut acc = 0.0;
                            for j in 0..*cols {
                                acc += g[[r, j]] * wv[[r, i * cols + j]];
                            }
                            dv[[r, i]] = acc;
                        }
                    }
                    self.accum(grads, *v, dv);
                }
                if self.rg(*w) {
                    let mut dw = Mat::zeros(wv.raw_dim());
                    for r in 0..b {
                        for i in 0..n {
                            let x = vv[[r, i]];
                            for j in 0..*cols {
                                dw[[r, i * cols + j]] = x * g[[r, j]];
                            }
                        }
                    }
                    self.accum(grads, *w, dw);
                }
            }
            Op::BceWithLogits(a, targets) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .and(targets)
                    .for_each(|d, &x, &y| *d *= sigmoid(x) - y);
                self.accum(grads, *a, d);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Compares reverse-mode gradients from `build` with central differences on
/// up to `per_tensor` evenly spaced entries of each parameter in `ids`.
/// Returns the worst per-tensor relative error `‖a − n‖ / max(‖a‖, ‖n‖)`,
/// treating tensors whose gradients are both below `1e-7` in norm as exact.
pub fn gradient_check(
    store: &ParamStore,
    ids: &[ParamId],
    per_tensor: usize,
    eps: f64,
    build: &dyn Fn(&ParamStore) -> (Graph, Var),
) -> f64 {
    let (g, loss) = build(store);
    let grads = g.backward(loss, store);
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for &id in ids {
        let len = store.get(id).len();
        let cols = store.get(id).ncols();
        let take = per_tensor.min(len).max(1);
        let step = (len / take).max(1);
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for idx in (0..len).step_by(step).take(take) {
            let (r, c) = (idx / cols, idx % cols);
            let orig = probe.get(id)[[r, c]];
            probe.get_mut(id)[[r, c]] = orig + eps;
            let (gu, lu) = build(&probe);
            let up = gu.scalar(lu);
            probe.get_mut(id)[[r, c]] = orig - eps;
            let (gd, ld) = build(&probe);
            let down = gd.scalar(ld);
            probe.get_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |m| m[[r, c]]);
            diff += (analytic - numeric).powi(2);
            na += analytic * analytic;
            nn += numeric * numeric;
        }
        let scale = na.sqrt().max(nn.sqrt());
        if scale > 1e-7 {
            worst = worst.max(diff.sqrt() / scale);
        }
    }
    worst
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Central differences of `f` with respect to every entry of parameter `id`.
    fn numeric_grad(store: &ParamStore, id: ParamId, f: &dyn Fn(&ParamStore) -> f64) -> Mat {
        let eps = 1e-6;
        let mut s = store.clone();
        let shape = store.get(id).raw_dim();
        let mut out = Mat::zeros(shape);
        for idx in 0..out.len() {
            let (r, c) = (idx / out.ncols(), idx % out.ncols());
            let orig = s.get(id)[[r, c]];
            s.get_mut(id)[[r, c]] = orig + eps;
            let up = f(&s);
            s.get_mut(id)[[r, c]] = orig - eps;
            let down = f(&s);
            s.get_mut(id)[[r, c]] = orig;
            out[[r, c]] = (up - down) / (2.0 * eps);
        }
        out
    }

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            let denom = x.abs().max(y.abs()).max(1e-8);
            assert!(
                (x - y).abs() / denom < tol || (x - y).abs() < 1e-9,
                "analytic {x} vs numeric {y}"
            );
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let a = store.add("a", random_mat(&mut rng, 4, 3));
        let b = store.add("b", random_mat(&mut rng, 3, 6));
        let row = store.add("row", random_mat(&mut rng, 1, 6));
        let col = store.add("col", random_mat(&mut rng, 4, 1));
        let targets = Mat::from_shape_fn((4, 2), |(i, j)| ((i + j) % 2) as f64);

        let build = |s: &ParamStore| -> (Graph, Var) {
            let mut g = Graph::new();
            let a = g.param(s, a);
            let b = g.param(s, b);
            let row = g.param(s, row);
            let col = g.param(s, col);
            let x = g.matmul(a, b);
            let x = g.add_row(x, row);
            let x = g.mul_col(x, col);
            let t = g.tanh(x);
            let e = g.elu(x);
            let sg = g.sigmoid(x);
            let y = g.add(t, e);
            let y = g.mul(y, sg);
            let y = g.sub(y, t);
            let ab = g.abs(y);
            let sq = g.square(ab);
            let ex = g.exp(sq);
            let cl = g.clamp(ex, 0.0, 1.5);
            let r = g.relu(cl);
            let r = g.reshape(r, 8, 3);
            let left = g.slice_cols(r, 0, 2);
            let right = g.slice_rows(r, 2, 6);
            let stacked = g.vcat(&[left, left]);
            let wide = g.hcat(&[right, right]);
            let v = g.slice_cols(wide, 0, 2);
            let mv = g.block_row_matvec(v, wide, 3);
            let gathered = g.gather_cols(mv, &[0, 2, 1, 2]);
            let bce = g.bce_with_logits(left.clone(), Mat::zeros((8, 2)));
            let bce2 = g.slice_rows(bce, 0, 4);
            let bce3 = g.bce_with_logits(bce2, targets.clone());
            let rs = g.row_sum(stacked);
            let s1 = g.sum(rs);
            let s2 = g.sum(gathered);
            let s3 = g.mean(bce3);
            let tot = g.add(s1, s2);
            let tot = g.add(tot, s3);
            let tot = g.scale(tot, 0.7);
            let tot = g.add_scalar(tot, 1.0);
            (g, tot)
        };
        let (g, loss) = build(&store);
        let grads = g.backward(loss, &store);
        let f = |s: &ParamStore| {
            let (g, l) = build(s);
            g.scalar(l)
        };
        for id in [a, b, row, col] {
            let num = numeric_grad(&store, id, &f);
            assert_close(grads.get(id).unwrap(), &num, 1e-5);
        }
    }

    #[test]
    fn detach_blocks_gradient_but_keeps_value() {
        let mut store = ParamStore::new();
        let p = store.add("p", array![[2.0]]);
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let d = g.detach(x);
        assert_eq!(g.value(d), g.value(x));
        let y = g.mul(d, d);
        let loss = g.sum(y);
        let grads = g.backward(loss, &store);
        assert!(grads.get(p).is_none());
    }

    #[test]
    fn clip_global_norm_scales_to_limit() {
        let grads = Grads::from_vec(vec![Some(array![[60.0, 80.0]])]);
        let mut grads = grads;
        let before = grads.clip_global_norm(10.0);
        assert_eq!(before, 100.0);
        assert!((grads.global_norm() - 10.0).abs() < 1e-12);
        let g = grads.get(ParamId(0)).unwrap();
        assert!((g[[0, 0]] - 6.0).abs() < 1e-12 && (g[[0, 1]] - 8.0).abs() < 1e-12);
    }
}
