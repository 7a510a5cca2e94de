use std::sync::Arc;

use ndarray::{s, Axis};
use rand::Rng;

use super::tensor::{Matrix, ParamId, ParamStore};
use crate::error::{ensure, Result};
use crate::graph::CsrMatrix;

/// Handle to a value recorded on a [`ComputeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Elu(Var, f64),
    Dropout(Var, Matrix),
    Concat(Vec<Var>),
    Sum(Vec<Var>),
    Mean(Vec<Var>),
    Max(Vec<Var>, Vec<u32>),
    Attention(Box<AttentionCache>),
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct AttentionCache {
    values: Var,
    dst_score: Option<Var>,
    src_score: Var,
    structure: Arc<CsrMatrix>,
    slope: Option<f64>,
    /// Softmax weights, aligned with `structure.values`.
    alpha: Vec<f64>,
    /// Pre-activation scores, aligned with `structure.values`.
    pre: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Dynamic tape of recorded operations, rebuilt for every forward pass.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct ComputeGraph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Gradient of a node after [`ComputeGraph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Records an input value. With `requires_grad` its gradient is kept
    /// on the graph and can be read through [`ComputeGraph::grad`].
    pub fn input(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Records a parameter; backward accumulates into the store's grad slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(t.values.clone(), t.requires_grad(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        ensure!(k == k2, "matmul inner dims {m}x{k} * {k2}x{n}");
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// `M * H` for a constant sparse `M`.
    pub fn spmm(&mut self, m: &Arc<CsrMatrix>, h: Var) -> Result<Var> {
        let (rows, d) = self.shape(h);
        ensure!(
            m.n_cols == rows,
            "spmm: operator has {} columns, dense input has {rows} rows",
            m.n_cols
        );
        let x = self.value(h);
        let mut out = Matrix::zeros((m.n_rows, d));
        for i in 0..m.n_rows {
            let (cols, vals) = m.row(i);
            let mut out_row = out.row_mut(i);
            for (&j, &w) in cols.iter().zip(vals) {
                out_row.scaled_add(w, &x.row(j));
            }
        }
        let rg = self.rg(h);
        Ok(self.push(out, rg, Op::SpMM(Arc::clone(m), h)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(
            self.shape(a) == self.shape(b),
            "add: shapes {:?} and {:?}",
            self.shape(a),
            self.shape(b)
        );
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    /// Adds a `1 x d` row (bias) to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, d) = self.shape(x);
        ensure!(self.shape(row) == (1, d), "add_row: bias shape {:?}", self.shape(row));
        let value = self.value(x) + self.value(row);
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, rg, Op::AddRow(x, row)))
    }

    /// Multiplies `x` by a `1 x 1` scalar node.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        ensure!(self.shape(s) == (1, 1), "scale: factor must be 1x1");
        let value = self.value(x) * self.scalar(s);
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(value, rg, Op::Scale(x, s)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, rg, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).mapv(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(value, rg, Op::LeakyRelu(x, slope))
    }

    pub fn elu(&mut self, x: Var, alpha: f64) -> Var {
        let value = self
            .value(x)
            .mapv(|v| if v > 0.0 { v } else { alpha * v.exp_m1() });
        let rg = self.rg(x);
        self.push(value, rg, Op::Elu(x, alpha))
    }

    /// Inverted dropout. The mask is drawn from `rng` and reused in backward.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
        ensure!((0.0..1.0).contains(&p), "dropout probability {p} not in [0, 1)");
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask = Matrix::from_shape_simple_fn(self.shape(x), || {
            if rng.random::<f64>() < p {
                0.0
            } else {
                keep
            }
        });
        let value = self.value(x) * &mask;
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::Dropout(x, mask)))
    }

    /// Horizontal concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        ensure!(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0]).0;
        ensure!(
            parts.iter().all(|&p| self.shape(p).0 == rows),
            "concat: row counts differ"
        );
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, rg, Op::Concat(parts.to_vec())))
    }

    fn check_same(&self, parts: &[Var], what: &str) -> Result<()> {
        ensure!(!parts.is_empty(), "{what} of nothing");
        let shape = self.shape(parts[0]);
        ensure!(
            parts.iter().all(|&p| self.shape(p) == shape),
            "{what}: operand shapes differ"
        );
        Ok(())
    }

    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        self.check_same(parts, "sum")?;
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let mut value = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            value += self.value(p);
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, rg, Op::Sum(parts.to_vec())))
    }

    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        self.check_same(parts, "mean")?;
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let mut value = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            value += self.value(p);
        }
        value /= parts.len() as f64;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, rg, Op::Mean(parts.to_vec())))
    }

    /// Elementwise maximum; ties go to the earliest operand.
    pub fn max(&mut self, parts: &[Var]) -> Result<Var> {
        self.check_same(parts, "max")?;
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let mut value = self.value(parts[0]).clone();
        let mut arg = vec![0u32; value.len()];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            for ((v, a), &x) in value.iter_mut().zip(arg.iter_mut()).zip(self.value(p).iter()) {
                if x > *v {
                    *v = x;
                    *a = k as u32;
                }
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, rg, Op::Max(parts.to_vec(), arg)))
    }

    /// Neighbourhood softmax attention.
    ///
    /// For every row `i` of `structure`, scores over its columns `j` are
    /// `act(dst_score[i] + src_score[j])` (with `act` a leaky ReLU of the
    /// given slope, or identity when `slope` is `None`), normalized by a
    /// softmax over the row, and used to average `values[j]`. Rows with no
    /// entries produce zeros.
    pub fn attention(
        &mut self,
        values: Var,
        dst_score: Option<Var>,
        src_score: Var,
        structure: &Arc<CsrMatrix>,
        slope: Option<f64>,
    ) -> Result<Var> {
        let (n, d) = self.shape(values);
        ensure!(
            structure.n_cols == n && structure.n_rows == n,
            "attention: structure is {}x{}, values have {n} rows",
            structure.n_rows,
            structure.n_cols
        );
        ensure!(self.shape(src_score) == (n, 1), "attention: src_score must be {n}x1");
        if let Some(ds) = dst_score {
            ensure!(self.shape(ds) == (n, 1), "attention: dst_score must be {n}x1");
        }
        let nnz = structure.nnz();
        let mut alpha = vec![0.0; nnz];
        let mut pre = vec![0.0; nnz];
        let mut out = Matrix::zeros((n, d));
        {
            let v = self.value(values);
            let src = self.value(src_score);
            let dst = dst_score.map(|ds| self.value(ds));
            for i in 0..n {
                let (start, end) = (structure.row_ptr[i], structure.row_ptr[i + 1]);
                if start == end {
                    continue;
                }
                let base = dst.map_or(0.0, |m| m[[i, 0]]);
                let mut max = f64::NEG_INFINITY;
                for e in start..end {
                    let z = base + src[[structure.col_idx[e], 0]];
                    pre[e] = z;
                    let act = match slope {
                        Some(s) if z <= 0.0 => s * z,
                        _ => z,
                    };
                    alpha[e] = act;
                    max = max.max(act);
                }
                let mut total = 0.0;
                for a in &mut alpha[start..end] {
                    *a = (*a - max).exp();
                    total += *a;
                }
                let mut row = out.row_mut(i);
                for e in start..end {
                    alpha[e] /= total;
                    row.scaled_add(alpha[e], &v.row(structure.col_idx[e]));
                }
            }
        }
        let rg = self.rg(values) || self.rg(src_score) || dst_score.is_some_and(|ds| self.rg(ds));
        let cache = AttentionCache {
            values,
            dst_score,
            src_score,
            structure: Arc::clone(structure),
            slope,
            alpha,
            pre,
        };
        Ok(self.push(out, rg, Op::Attention(Box::new(cache))))
    }

    /// Mean cross-entropy of row-softmaxed `logits` over rows where `mask`
    /// holds. Returns a 1x1 node.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: &[i64], mask: &[bool]) -> Result<Var> {
        let (n, c) = self.shape(logits);
        ensure!(labels.len() == n && mask.len() == n, "cross entropy: length mismatch");
        let mut targets = Vec::new();
        for i in 0..n {
            if mask[i] {
                let l = labels[i];
                ensure!(l >= 0 && (l as usize) < c, "cross entropy: row {i} has label {l}");
                targets.push((i, l as usize));
            }
        }
        ensure!(!targets.is_empty(), "cross entropy over an empty mask");
        let probs = softmax_rows(self.value(logits));
        let x = self.value(logits);
        let mut loss = 0.0;
        for &(i, l) in &targets {
            let row = x.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[l];
        }
        loss /= targets.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::from_elem((1, 1), loss),
            rg,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
        ))
    }

    /// Reverse sweep from a 1x1 `loss`. Gradients accumulate into the
    /// parameter store; calling this twice without zeroing doubles them.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        ensure!(self.shape(loss) == (1, 1), "backward from a non-scalar node");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads, store);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>], store: &mut ParamStore) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                if let Some(pg) = &mut store.get_mut(*id).grad {
                    *pg += g;
                }
            }
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    acc(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::SpMM(m, h) => {
                let (rows, d) = self.shape(*h);
                let mut gh = Matrix::zeros((rows, d));
                for i in 0..m.n_rows {
                    let (cols, vals) = m.row(i);
                    let gi = g.row(i);
                    for (&j, &w) in cols.iter().zip(vals) {
                        gh.row_mut(j).scaled_add(w, &gi);
                    }
                }
                acc(grads, *h, gh);
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        acc(grads, v, g.clone());
                    }
                }
            }
            Op::AddRow(x, row) => {
                if self.rg(*x) {
                    acc(grads, *x, g.clone());
                }
                if self.rg(*row) {
                    acc(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(x, s) => {
                if self.rg(*x) {
                    acc(grads, *x, g * self.scalar(*s));
                }
                if self.rg(*s) {
                    let v = (g * self.value(*x)).sum();
                    acc(grads, *s, Matrix::from_elem((1, 1), v));
                }
            }
            Op::Relu(x) => {
                let mut gx = g.clone();
                gx.zip_mut_with(self.value(*x), |a, &v| {
                    if v <= 0.0 {
                        *a = 0.0
                    }
                });
                acc(grads, *x, gx);
            }
            Op::LeakyRelu(x, slope) => {
                let mut gx = g.clone();
                gx.zip_mut_with(self.value(*x), |a, &v| {
                    if v <= 0.0 {
                        *a *= slope
                    }
                });
                acc(grads, *x, gx);
            }
            Op::Elu(x, alpha) => {
                let mut gx = g.clone();
                gx.zip_mut_with(self.value(*x), |a, &v| {
                    if v <= 0.0 {
                        *a *= alpha * v.exp()
                    }
                });
                acc(grads, *x, gx);
            }
            Op::Dropout(x, mask) => acc(grads, *x, g * mask),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if self.rg(p) {
                        acc(grads, p, g.slice(s![.., offset..offset + w]).to_owned());
                    }
                    offset += w;
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    if self.rg(p) {
                        acc(grads, p, g.clone());
                    }
                }
            }
            Op::Mean(parts) => {
                let k = parts.len() as f64;
                for &p in parts {
                    if self.rg(p) {
                        acc(grads, p, g / k);
                    }
                }
            }
            Op::Max(parts, arg) => {
                for (k, &p) in parts.iter().enumerate() {
                    if !self.rg(p) {
                        continue;
                    }
                    let mut gp = g.clone();
                    for (v, &a) in gp.iter_mut().zip(arg) {
                        if a as usize != k {
                            *v = 0.0;
                        }
                    }
                    acc(grads, p, gp);
                }
            }
            Op::Attention(cache) => self.attention_backward(cache, g, grads),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let upstream = g[[0, 0]] / targets.len() as f64;
                let mut gl = Matrix::zeros(probs.raw_dim());
                for &(i, l) in targets {
                    let mut row = gl.row_mut(i);
                    row.scaled_add(upstream, &probs.row(i));
                    row[l] -= upstream;
                }
                acc(grads, *logits, gl);
            }
        }
    }

    fn attention_backward(&self, c: &AttentionCache, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let v = self.value(c.values);
        let (n, d) = v.dim();
        let st = &c.structure;
        let mut gv = Matrix::zeros((n, d));
        let mut g_src = Matrix::zeros((n, 1));
        let mut g_dst = Matrix::zeros((n, 1));
        let mut dalpha = vec![0.0; st.nnz()];
        for i in 0..n {
            let (start, end) = (st.row_ptr[i], st.row_ptr[i + 1]);
            if start == end {
                continue;
            }
            let gi = g.row(i);
            let mut weighted = 0.0;
            for e in start..end {
                let j = st.col_idx[e];
                gv.row_mut(j).scaled_add(c.alpha[e], &gi);
                dalpha[e] = gi.dot(&v.row(j));
                weighted += c.alpha[e] * dalpha[e];
            }
            for e in start..end {
                let mut dz = c.alpha[e] * (dalpha[e] - weighted);
                if let Some(s) = c.slope {
                    if c.pre[e] <= 0.0 {
                        dz *= s;
                    }
                }
                g_dst[[i, 0]] += dz;
                g_src[[st.col_idx[e], 0]] += dz;
            }
        }
        if self.rg(c.values) {
            acc(grads, c.values, gv);
        }
        if self.rg(c.src_score) {
            acc(grads, c.src_score, g_src);
        }
        if let Some(ds) = c.dst_score {
            if self.rg(ds) {
                acc(grads, ds, g_dst);
            }
        }
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &delta,
        slot @ None => *slot = Some(delta),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}
