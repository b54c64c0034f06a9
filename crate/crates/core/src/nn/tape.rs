//! Reverse-mode differentiation over row-major matrices.
//!
//! Every node holds a `rows × cols` value. Rows are batch examples for most
//! operations; parameters enter as leaves bound to a [`ParamId`]. Nodes are
//! appended in evaluation order, so the node list is already topologically
//! sorted and [`Tape::backward`] is a single reverse sweep.

use super::activations::{sigmoid, softplus};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A weighted set of table rows; an embedding lookup returns `Σ w · table[row]`.
pub type RowMix = Vec<(usize, f64)>;

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Embed { table: usize, rows: Vec<RowMix> },
    Dense { x: usize, w: usize, b: usize },
    Relu(usize),
    Softplus(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Affine { a: usize, scale: f64 },
    ColAffine { a: usize, scale: Vec<f64> },
    Concat(Vec<usize>),
    Slice { a: usize, start: usize },
    LogSoftmaxRows(usize),
    LogSumExpRows(usize),
    GroupSumCols { a: usize, group: usize },
    Mean(usize),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let n = &self.nodes[a.0];
        let (rows, cols) = (n.rows, n.cols);
        let value = n.value.iter().map(|&x| f(x)).collect();
        let ng = self.needs(a.0);
        self.push(rows, cols, value, op, ng)
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(Error::shape(op, format!("{da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (rows, cols) = self.same_dims(name, a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(rows, cols, value, op, ng))
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if rows * cols != value.len() {
            return Err(Error::shape(
                "constant",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, value.len()),
            ));
        }
        Ok(self.push(rows, cols, value, Op::Constant, false))
    }

    /// Binds a parameter as a leaf. The value is copied at bind time.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        let (rows, cols) = t.dims();
        self.push(rows, cols, t.values.clone(), Op::Param(id), true)
    }

    /// Per-row weighted sum of table rows. With one-hot weights this equals a
    /// bias-free dense layer applied to the indicator vector.
    pub fn embed(&mut self, table: Var, rows: Vec<RowMix>) -> Result<Var> {
        let (vocab, dim) = self.dims(table);
        let mut value = vec![0.0; rows.len() * dim];
        {
            let t = &self.nodes[table.0].value;
            for (r, mix) in rows.iter().enumerate() {
                let out = &mut value[r * dim..(r + 1) * dim];
                for &(idx, w) in mix {
                    if idx >= vocab {
                        return Err(Error::OutOfRange {
                            what: "embedding row",
                            index: idx,
                            size: vocab,
                        });
                    }
                    for (o, &tv) in out.iter_mut().zip(&t[idx * dim..(idx + 1) * dim]) {
                        *o += w * tv;
                    }
                }
            }
        }
        let n = rows.len();
        let ng = self.needs(table.0);
        Ok(self.push(n, dim, value, Op::Embed { table: table.0, rows }, ng))
    }

    /// `x · Wᵀ + b` with `x: B×in`, `W: out×in`, `b: 1×out`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, input) = self.dims(x);
        let (out, w_in) = self.dims(w);
        let (b_rows, b_cols) = self.dims(b);
        if w_in != input || b_rows != 1 || b_cols != out {
            return Err(Error::shape(
                "dense",
                format!("input {batch}x{input}, weight {out}x{w_in}, bias {b_rows}x{b_cols}"),
            ));
        }
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let bv = &self.nodes[b.0].value;
        let mut value = vec![0.0; batch * out];
        for r in 0..batch {
            let xr = &xv[r * input..(r + 1) * input];
            let yr = &mut value[r * out..(r + 1) * out];
            for (o, y) in yr.iter_mut().enumerate() {
                let wr = &wv[o * input..(o + 1) * input];
                *y = bv[o] + dot(xr, wr);
            }
        }
        let ng = self.needs(x.0) || self.needs(w.0) || self.needs(b.0);
        Ok(self.push(batch, out, value, Op::Dense { x: x.0, w: w.0, b: b.0 }, ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| x.max(0.0))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a.0), softplus)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a.0), sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a.0), f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a.0), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a.0, b.0), |x, y| x / y)
    }

    /// `scale · a + shift` elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.unary(a, Op::Affine { a: a.0, scale }, |x| scale * x + shift)
    }

    /// Per-column `scale[c] · a + shift[c]`.
    pub fn col_affine(&mut self, a: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let (rows, cols) = self.dims(a);
        if scale.len() != cols || shift.len() != cols {
            return Err(Error::shape(
                "col_affine",
                format!("{cols} columns, {} scales, {} shifts", scale.len(), shift.len()),
            ));
        }
        let av = &self.nodes[a.0].value;
        let mut value = Vec::with_capacity(av.len());
        for r in 0..rows {
            for c in 0..cols {
                value.push(scale[c] * av[r * cols + c] + shift[c]);
            }
        }
        let ng = self.needs(a.0);
        Ok(self.push(
            rows,
            cols,
            value,
            Op::ColAffine {
                a: a.0,
                scale: scale.to_vec(),
            },
            ng,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or(Error::Empty("concat inputs"))?;
        if let Some(&bad) = parts.iter().find(|&&p| self.dims(p).0 != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("row counts {} vs {}", rows, self.dims(bad).0),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut value = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let n = &self.nodes[p.0];
                value.extend_from_slice(&n.value[r * n.cols..(r + 1) * n.cols]);
            }
        }
        let ng = parts.iter().any(|p| self.needs(p.0));
        let ids = parts.iter().map(|p| p.0).collect();
        Ok(self.push(rows, cols, value, Op::Concat(ids), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a);
        if start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {cols} columns", start + len),
            ));
        }
        let av = &self.nodes[a.0].value;
        let mut value = Vec::with_capacity(rows * len);
        for r in 0..rows {
            value.extend_from_slice(&av[r * cols + start..r * cols + start + len]);
        }
        let ng = self.needs(a.0);
        Ok(self.push(rows, len, value, Op::Slice { a: a.0, start }, ng))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (rows, cols) = self.dims(a);
        let av = &self.nodes[a.0].value;
        let mut value = Vec::with_capacity(av.len());
        for r in 0..rows {
            let row = &av[r * cols..(r + 1) * cols];
            let lse = super::activations::log_sum_exp(row);
            value.extend(row.iter().map(|&x| x - lse));
        }
        let ng = self.needs(a.0);
        self.push(rows, cols, value, Op::LogSoftmaxRows(a.0), ng)
    }

    /// Max-shifted log-sum-exp of each row; output is `rows × 1`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let (rows, cols) = self.dims(a);
        let av = &self.nodes[a.0].value;
        let value = (0..rows)
            .map(|r| super::activations::log_sum_exp(&av[r * cols..(r + 1) * cols]))
            .collect();
        let ng = self.needs(a.0);
        self.push(rows, 1, value, Op::LogSumExpRows(a.0), ng)
    }

    /// Sums consecutive runs of `group` columns: `rows × (k·group)` → `rows × k`.
    pub fn group_sum_cols(&mut self, a: Var, group: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a);
        if group == 0 || cols % group != 0 {
            return Err(Error::shape(
                "group_sum_cols",
                format!("{cols} columns in groups of {group}"),
            ));
        }
        let k = cols / group;
        let av = &self.nodes[a.0].value;
        let value = av.chunks(group).map(|c| c.iter().sum()).collect();
        let ng = self.needs(a.0);
        Ok(self.push(rows, k, value, Op::GroupSumCols { a: a.0, group }, ng))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let m = av.iter().sum::<f64>() / av.len() as f64;
        let ng = self.needs(a.0);
        self.push(1, 1, vec![m], Op::Mean(a.0), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum::<f64>();
        let ng = self.needs(a.0);
        self.push(1, 1, vec![s], Op::Sum(a.0), ng)
    }

    /// Writes `∂loss/∂param` into every parameter's `grad`. Parameters not
    /// reachable from `loss` end with a zero gradient.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let (r, c) = self.dims(loss);
        if (r, c) != (1, 1) {
            return Err(Error::shape("backward", format!("loss must be 1x1, got {r}x{c}")));
        }
        for t in store.tensors_mut() {
            t.ensure_grad();
            t.zero_grad();
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let t = store.get_mut(*id);
                    for (acc, gv) in t.grad.iter_mut().zip(&g) {
                        *acc += gv;
                    }
                }
                Op::Embed { table, rows } => {
                    let dim = node.cols;
                    let dt = self.grad_slot(&mut grads, *table);
                    for (r, mix) in rows.iter().enumerate() {
                        let gr = &g[r * dim..(r + 1) * dim];
                        for &(idx, w) in mix {
                            axpy(&mut dt[idx * dim..(idx + 1) * dim], w, gr);
                        }
                    }
                }
                Op::Dense { x, w, b } => {
                    let (batch, out) = (node.rows, node.cols);
                    let input = self.nodes[*x].cols;
                    if self.needs(*b) {
                        let db = self.grad_slot(&mut grads, *b);
                        for r in 0..batch {
                            axpy(db, 1.0, &g[r * out..(r + 1) * out]);
                        }
                    }
                    if self.needs(*w) {
                        let xv = &self.nodes[*x].value;
                        let dw = self.grad_slot(&mut grads, *w);
                        for r in 0..batch {
                            let xr = &xv[r * input..(r + 1) * input];
                            for o in 0..out {
                                let go = g[r * out + o];
                                if go != 0.0 {
                                    axpy(&mut dw[o * input..(o + 1) * input], go, xr);
                                }
                            }
                        }
                    }
                    if self.needs(*x) {
                        let wv = &self.nodes[*w].value;
                        let dx = self.grad_slot(&mut grads, *x);
                        for r in 0..batch {
                            let dxr = &mut dx[r * input..(r + 1) * input];
                            for o in 0..out {
                                let go = g[r * out + o];
                                if go != 0.0 {
                                    axpy(dxr, go, &wv[o * input..(o + 1) * input]);
                                }
                            }
                        }
                    }
                }
                Op::Relu(a) => self.elementwise_back(&mut grads, *a, &g, |x, _| if x > 0.0 { 1.0 } else { 0.0 }, i),
                Op::Softplus(a) => self.elementwise_back(&mut grads, *a, &g, |x, _| sigmoid(x), i),
                Op::Sigmoid(a) => self.elementwise_back(&mut grads, *a, &g, |_, y| y * (1.0 - y), i),
                Op::Exp(a) => self.elementwise_back(&mut grads, *a, &g, |_, y| y, i),
                Op::Ln(a) => self.elementwise_back(&mut grads, *a, &g, |x, _| 1.0 / x, i),
                Op::Square(a) => self.elementwise_back(&mut grads, *a, &g, |x, _| 2.0 * x, i),
                Op::Affine { a, scale } => {
                    let s = *scale;
                    self.elementwise_back(&mut grads, *a, &g, |_, _| s, i)
                }
                Op::ColAffine { a, scale } => {
                    if self.needs(*a) {
                        let cols = node.cols;
                        let da = self.grad_slot(&mut grads, *a);
                        for (j, (d, gv)) in da.iter_mut().zip(&g).enumerate() {
                            *d += gv * scale[j % cols];
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.pass_through(&mut grads, *a, &g, 1.0);
                    self.pass_through(&mut grads, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    self.pass_through(&mut grads, *a, &g, 1.0);
                    self.pass_through(&mut grads, *b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.needs(*a) {
                        let da = self.grad_slot(&mut grads, *a);
                        for ((d, gv), y) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    if self.needs(*b) {
                        let db = self.grad_slot(&mut grads, *b);
                        for ((d, gv), x) in db.iter_mut().zip(&g).zip(av) {
                            *d += gv * x;
                        }
                    }
                }
                Op::Div(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.needs(*a) {
                        let da = self.grad_slot(&mut grads, *a);
                        for ((d, gv), y) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gv / y;
                        }
                    }
                    if self.needs(*b) {
                        let db = self.grad_slot(&mut grads, *b);
                        for (((d, gv), x), y) in db.iter_mut().zip(&g).zip(av).zip(bv) {
                            *d -= gv * x / (y * y);
                        }
                    }
                }
                Op::Concat(parts) => {
                    let (rows, cols) = (node.rows, node.cols);
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.nodes[p].cols;
                        if self.needs(p) {
                            let dp = self.grad_slot(&mut grads, p);
                            for r in 0..rows {
                                axpy(
                                    &mut dp[r * pc..(r + 1) * pc],
                                    1.0,
                                    &g[r * cols + offset..r * cols + offset + pc],
                                );
                            }
                        }
                        offset += pc;
                    }
                }
                Op::Slice { a, start } => {
                    if self.needs(*a) {
                        let (rows, len) = (node.rows, node.cols);
                        let ac = self.nodes[*a].cols;
                        let da = self.grad_slot(&mut grads, *a);
                        for r in 0..rows {
                            axpy(
                                &mut da[r * ac + start..r * ac + start + len],
                                1.0,
                                &g[r * len..(r + 1) * len],
                            );
                        }
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    if self.needs(*a) {
                        let (rows, cols) = (node.rows, node.cols);
                        let y = &node.value;
                        let da = self.grad_slot(&mut grads, *a);
                        for r in 0..rows {
                            let gr = &g[r * cols..(r + 1) * cols];
                            let gsum: f64 = gr.iter().sum();
                            for c in 0..cols {
                                let j = r * cols + c;
                                da[j] += gr[c] - y[j].exp() * gsum;
                            }
                        }
                    }
                }
                Op::LogSumExpRows(a) => {
                    if self.needs(*a) {
                        let cols = self.nodes[*a].cols;
                        let av = &self.nodes[*a].value;
                        let y = &node.value;
                        let da = self.grad_slot(&mut grads, *a);
                        for (r, (&gr, &lse)) in g.iter().zip(y).enumerate() {
                            for c in 0..cols {
                                let j = r * cols + c;
                                da[j] += gr * (av[j] - lse).exp();
                            }
                        }
                    }
                }
                Op::GroupSumCols { a, group } => {
                    if self.needs(*a) {
                        let da = self.grad_slot(&mut grads, *a);
                        for (chunk, &gv) in da.chunks_mut(*group).zip(&g) {
                            chunk.iter_mut().for_each(|d| *d += gv);
                        }
                    }
                }
                Op::Mean(a) => {
                    if self.needs(*a) {
                        let n = self.nodes[*a].value.len() as f64;
                        let da = self.grad_slot(&mut grads, *a);
                        da.iter_mut().for_each(|d| *d += g[0] / n);
                    }
                }
                Op::Sum(a) => {
                    if self.needs(*a) {
                        let da = self.grad_slot(&mut grads, *a);
                        da.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
            }
        }
        Ok(())
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], i: usize) -> &'g mut Vec<f64> {
        let len = self.nodes[i].value.len();
        grads[i].get_or_insert_with(|| vec![0.0; len])
    }

    fn pass_through(&self, grads: &mut [Option<Vec<f64>>], a: usize, g: &[f64], sign: f64) {
        if self.needs(a) {
            axpy(self.grad_slot(grads, a), sign, g);
        }
    }

    /// `da += g · f'(x, y)` with `x` the input and `y` the output of node `out`.
    fn elementwise_back(
        &self,
        grads: &mut [Option<Vec<f64>>],
        a: usize,
        g: &[f64],
        deriv: impl Fn(f64, f64) -> f64,
        out: usize,
    ) {
        if !self.needs(a) {
            return;
        }
        let xv = &self.nodes[a].value;
        let yv = &self.nodes[out].value;
        let da = self.grad_slot(grads, a);
        for (((d, gv), &x), &y) in da.iter_mut().zip(g).zip(xv).zip(yv) {
            *d += gv * deriv(x, y);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::ParamTensor;
    use approx::assert_abs_diff_eq;

    fn store_with(shape: &[usize], values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", ParamTensor::from_values(shape, values).unwrap());
        (s, id)
    }

    #[test]
    fn square_gradient() {
        let (mut store, id) = store_with(&[1], vec![3.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(id).grad, vec![6.0]);
    }

    #[test]
    fn sigmoid_gradient() {
        let (mut store, id) = store_with(&[1], vec![0.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.sigmoid(x);
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        assert_abs_diff_eq!(store.get(id).grad[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn dense_forward_cases() {
        let cases: [(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>); 2] = [
            (vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], vec![1.0, 2.0], vec![1.0, 2.0]),
            (
                vec![1.0, 1.0, 1.0, -1.0],
                vec![0.0, 0.0],
                vec![3.0, 4.0],
                vec![7.0, -1.0],
            ),
        ];
        for (w, b, x, expected) in cases {
            let mut tape = Tape::new();
            let w = tape.constant(2, 2, w).unwrap();
            let b = tape.constant(1, 2, b).unwrap();
            let x = tape.constant(1, 2, x).unwrap();
            let y = tape.dense(x, w, b).unwrap();
            assert_eq!(tape.value(y), expected.as_slice());
        }
        let mut tape = Tape::new();
        let w = tape.constant(1, 3, vec![0.0; 3]).unwrap();
        let b = tape.constant(1, 1, vec![5.0]).unwrap();
        let x = tape.constant(1, 3, vec![9.0, -2.0, 0.5]).unwrap();
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y), &[5.0]);
    }

    #[test]
    fn dense_rejects_mismatch() {
        let mut tape = Tape::new();
        let w = tape.constant(2, 3, vec![0.0; 6]).unwrap();
        let b = tape.constant(1, 2, vec![0.0; 2]).unwrap();
        let x = tape.constant(1, 2, vec![0.0; 2]).unwrap();
        let err = tape.dense(x, w, b).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "dense", .. }), "{err}");
    }

    #[test]
    fn backward_requires_scalar() {
        let (mut store, id) = store_with(&[2], vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.square(x);
        assert!(tape.backward(y, &mut store).is_err());
    }

    #[test]
    fn disconnected_params_get_zero_grad() {
        let mut store = ParamStore::new();
        let a = store.add("a", ParamTensor::from_values(&[2], vec![1.0, 2.0]).unwrap());
        let b = store.add("b", ParamTensor::from_values(&[2], vec![3.0, 4.0]).unwrap());
        store.get_mut(b).grad = vec![9.0, 9.0];
        let mut tape = Tape::new();
        let xa = tape.param(&store, a);
        let _xb = tape.param(&store, b);
        let y = tape.square(xa);
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(a).grad, vec![2.0, 4.0]);
        assert_eq!(store.get(b).grad, vec![0.0, 0.0]);
    }

    #[test]
    fn embed_matches_indicator_dense() {
        // table 4x3; indicator [1,0,1,0] against a bias-free dense layer on Wᵀ
        let table: Vec<f64> = (0..12).map(|v| v as f64 * 0.5 - 2.0).collect();
        let mut tape = Tape::new();
        let t = tape.constant(4, 3, table.clone()).unwrap();
        let e = tape.embed(t, vec![vec![(0, 1.0), (2, 1.0)]]).unwrap();
        let mut wt = vec![0.0; 12];
        for r in 0..4 {
            for c in 0..3 {
                wt[c * 4 + r] = table[r * 3 + c];
            }
        }
        let w = tape.constant(3, 4, wt).unwrap();
        let b = tape.constant(1, 3, vec![0.0; 3]).unwrap();
        let x = tape.constant(1, 4, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let d = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(e), tape.value(d));
    }

    /// Central differences over every parameter value of a small composite graph.
    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut store = ParamStore::new();
        let w = store.add(
            "w",
            ParamTensor::from_values(&[3, 2], vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7]).unwrap(),
        );
        let b = store.add("b", ParamTensor::from_values(&[3], vec![0.05, -0.1, 0.2]).unwrap());
        let e = store.add(
            "e",
            ParamTensor::from_values(&[2, 2], vec![0.4, -0.3, 0.2, 0.9]).unwrap(),
        );

        let loss_of = |store: &ParamStore| -> (Tape, Var) {
            let mut tape = Tape::new();
            let tw = tape.param(store, w);
            let tb = tape.param(store, b);
            let te = tape.param(store, e);
            let emb = tape.embed(te, vec![vec![(0, 1.0)], vec![(1, 0.5), (0, 0.5)]]).unwrap();
            let h = tape.dense(emb, tw, tb).unwrap();
            let a = tape.softplus(h);
            let s = tape.sigmoid(h);
            let r = tape.relu(h);
            let m = tape.mul(a, s).unwrap();
            let d = tape.div(m, a).unwrap();
            let q = tape.add(d, r).unwrap();
            let q = tape.col_affine(q, &[1.0, 2.0, -1.0], &[0.5, 0.0, 3.0]).unwrap();
            let l = tape.log_softmax_rows(q);
            let sl = tape.slice_cols(l, 1, 2).unwrap();
            let c = tape.concat_cols(&[sl, h]).unwrap();
            let g = tape.group_sum_cols(c, 5).unwrap();
            let x = tape.exp(g);
            let y = tape.ln(x);
            let sq = tape.square(y);
            let z = tape.concat_cols(&[sq, y]).unwrap();
            let lse = tape.log_sum_exp_rows(z);
            let z2 = tape.affine(lse, -0.7, 0.2);
            let loss = tape.mean(z2);
            (tape, loss)
        };

        let (tape, loss) = loss_of(&store);
        tape.backward(loss, &mut store).unwrap();
        let analytic = store.flat_grads();
        let h = 1e-5;
        for i in 0..store.num_values() {
            let orig = *store.flat_value_mut(i);
            *store.flat_value_mut(i) = orig + h;
            let (t1, l1) = loss_of(&store);
            *store.flat_value_mut(i) = orig - h;
            let (t2, l2) = loss_of(&store);
            *store.flat_value_mut(i) = orig;
            let fd = (t1.scalar(l1) - t2.scalar(l2)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-6,
                "param {i}: {} vs {fd}",
                analytic[i]
            );
        }
    }
}
