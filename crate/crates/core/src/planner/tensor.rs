//! Dense matrices and a small reverse-mode tape with exactly the operations
//! the attention model needs.

use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Mat::zeros(m, n);
        let kernel = |(r, dst): (usize, &mut [f64])| {
            let a = &self.data[r * k..(r + 1) * k];
            for (i, &av) in a.iter().enumerate() {
                if av != 0.0 {
                    let b = &other.data[i * n..(i + 1) * n];
                    for (d, &bv) in dst.iter_mut().zip(b) {
                        *d += av * bv;
                    }
                }
            }
        };
        if m * k * n >= 1 << 18 {
            out.data.par_chunks_mut(n.max(1)).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(n.max(1)).enumerate().for_each(kernel);
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul row dimension");
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Mat::zeros(m, n);
        for i in 0..k {
            let a = self.row(i);
            let b = other.row(i);
            for (r, &av) in a.iter().enumerate() {
                if av != 0.0 {
                    let dst = &mut out.data[r * n..(r + 1) * n];
                    for (d, &bv) in dst.iter_mut().zip(b) {
                        *d += av * bv;
                    }
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t inner dimension");
        let mut out = Mat::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a = self.row(r);
            for c in 0..other.rows {
                out.data[r * other.rows + c] = dot(a, other.row(c));
            }
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x + row` broadcast over rows.
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    /// Multi-head scaled dot-product attention inside groups of `group`
    /// consecutive rows.
    Attention { q: Var, k: Var, v: Var, group: usize, heads: usize, probs: Vec<f64> },
    /// `out[r] = sum w x[i]` over `(r, i, w)` terms.
    Combine { x: Var, terms: Vec<(usize, usize, f64)> },
    ConcatCols(Vec<Var>),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64>, batch_stats: bool },
    /// `out[b][i] = q[b] . k[b * group + i]`.
    GroupDot { q: Var, k: Var, group: usize },
    /// Log-probability of `picks[r]` under a masked softmax of row `r`.
    LogSoftmaxPick { x: Var, picks: Vec<Option<usize>>, probs: Mat },
    /// `sum_r w[r] x[r][0]`.
    WeightedSum { x: Var, w: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    value: Mat,
    op: Op,
    param: Option<usize>,
}

/// Batch statistics produced by a training-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;

/// Records operations eagerly and replays them backwards.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Leaf whose gradient is reported under parameter index `index`.
    pub fn param(&mut self, index: usize, m: Mat) -> Var {
        let v = self.push(m, Op::Leaf);
        self.nodes[v.0].param = Some(index);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let m = self.value(a).matmul(self.value(b));
        self.push(m, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut m = self.value(a).clone();
        m.add_assign(self.value(b));
        self.push(m, Op::Add(a, b))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1, "add_row expects a row vector");
        let r = r.data.clone();
        let mut m = self.value(x).clone();
        for chunk in m.data.chunks_mut(r.len()) {
            for (a, b) in chunk.iter_mut().zip(&r) {
                *a += b;
            }
        }
        self.push(m, Op::AddRow(x, row))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut m = self.value(x).clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        self.push(m, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut m = self.value(x).clone();
        m.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(m, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut m = self.value(x).clone();
        m.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(m, Op::Tanh(x))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, group: usize, heads: usize) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let (rows, dim) = qm.shape();
        assert!(group > 0 && rows % group == 0, "attention rows must split into groups");
        assert!(heads > 0 && dim % heads == 0, "attention dim must split into heads");
        let dh = dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let groups = rows / group;
        let mut out = Mat::zeros(rows, dim);
        // probs[((g * heads + h) * group + i) * group + j]
        let mut probs = vec![0.0; groups * heads * group * group];
        for g in 0..groups {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..group {
                    let qi = &qm.row(g * group + i)[off..off + dh];
                    let p = &mut probs[((g * heads + h) * group + i) * group..][..group];
                    let mut mx = f64::NEG_INFINITY;
                    for (j, pj) in p.iter_mut().enumerate() {
                        *pj = scale * dot(qi, &km.row(g * group + j)[off..off + dh]);
                        mx = mx.max(*pj);
                    }
                    let mut z = 0.0;
                    for pj in p.iter_mut() {
                        *pj = (*pj - mx).exp();
                        z += *pj;
                    }
                    for pj in p.iter_mut() {
                        *pj /= z;
                    }
                    let dst = &mut out.data[(g * group + i) * dim + off..][..dh];
                    for (j, &pj) in p.iter().enumerate() {
                        let vj = &vm.row(g * group + j)[off..off + dh];
                        for (d, &x) in dst.iter_mut().zip(vj) {
                            *d += pj * x;
                        }
                    }
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, group, heads, probs })
    }

    /// Attention weights of the most recent [`Tape::attention`] node `v`,
    /// indexed `[group][head][query][key]` flattened.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn combine(&mut self, x: Var, out_rows: usize, terms: Vec<(usize, usize, f64)>) -> Var {
        let xm = self.value(x);
        let mut m = Mat::zeros(out_rows, xm.cols);
        for &(r, i, w) in &terms {
            let src = xm.row(i);
            for (d, &s) in m.row_mut(r).iter_mut().zip(src) {
                *d += w * s;
            }
        }
        self.push(m, Op::Combine { x, terms })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let src = self.value(p);
                assert_eq!(src.rows, rows, "concat_cols row mismatch");
                m.data[r * cols + c0..r * cols + c0 + src.cols].copy_from_slice(src.row(r));
                c0 += src.cols;
            }
        }
        self.push(m, Op::ConcatCols(parts.to_vec()))
    }

    /// Per-column batch norm. With `running = None` the batch statistics are
    /// used (and returned); otherwise the given mean and variance.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, running: Option<&BatchStats>) -> (Var, BatchStats) {
        let xm = self.value(x);
        let (rows, cols) = xm.shape();
        let stats = match running {
            Some(s) => s.clone(),
            None => {
                let mut mean = vec![0.0; cols];
                for r in 0..rows {
                    for (m, &v) in mean.iter_mut().zip(xm.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    for ((s, &v), &m) in var.iter_mut().zip(xm.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                BatchStats { mean, var }
            }
        };
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                xhat.data[r * cols + c] = (xm.get(r, c) - stats.mean[c]) * inv_std[c];
            }
        }
        let (g, b) = (self.value(gamma).data.clone(), self.value(beta).data.clone());
        let mut y = xhat.clone();
        for r in 0..rows {
            for c in 0..cols {
                y.data[r * cols + c] = xhat.get(r, c) * g[c] + b[c];
            }
        }
        let var = self.push(y, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: running.is_none() });
        (var, stats)
    }

    pub fn group_dot(&mut self, q: Var, k: Var, group: usize) -> Var {
        let (qm, km) = (self.value(q), self.value(k));
        assert_eq!(km.rows, qm.rows * group, "group_dot key rows");
        let mut m = Mat::zeros(qm.rows, group);
        for b in 0..qm.rows {
            for i in 0..group {
                m.data[b * group + i] = dot(qm.row(b), km.row(b * group + i));
            }
        }
        self.push(m, Op::GroupDot { q, k, group })
    }

    /// Masked softmax over each row, returning the log-probability of the
    /// picked column (0 for rows without a pick) and the probabilities.
    pub fn log_softmax_pick(&mut self, x: Var, mask: &[Vec<bool>], picks: Vec<Option<usize>>) -> Var {
        let probs = masked_softmax(self.value(x), mask);
        let mut out = Mat::zeros(probs.rows, 1);
        for (r, pick) in picks.iter().enumerate() {
            if let Some(i) = *pick {
                assert!(mask[r][i], "picked a masked entry");
                out.data[r] = probs.get(r, i).ln();
            }
        }
        self.push(out, Op::LogSoftmaxPick { x, picks, probs })
    }

    pub fn weighted_sum(&mut self, x: Var, w: Vec<f64>) -> Var {
        let xm = self.value(x);
        assert_eq!(xm.cols, 1);
        let s = xm.data.iter().zip(&w).map(|(a, b)| a * b).sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::WeightedSum { x, w })
    }

    /// Reverse pass from scalar `out`; returns one gradient per parameter
    /// index below `n_params` (zero for unused ones).
    pub fn backward(&self, out: Var, n_params: usize, shapes: &[(usize, usize)]) -> Vec<Mat> {
        let mut grads: Vec<Option<Mat>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        let mut params: Vec<Mat> = shapes.iter().take(n_params).map(|&(r, c)| Mat::zeros(r, c)).collect();
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(p) = node.param {
                params[p].add_assign(&g);
            }
            let mut acc = |v: Var, d: Mat| match &mut grads[v.0] {
                Some(e) => e.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    acc(*a, g.matmul_t(bm));
                    acc(*b, am.t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(x, row) => {
                    let mut s = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, &v) in s.data.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(*row, s);
                    acc(*x, g);
                }
                Op::Scale(x, s) => {
                    let mut d = g;
                    d.data.iter_mut().for_each(|v| *v *= s);
                    acc(*x, d);
                }
                Op::Relu(x) => {
                    let mut d = g;
                    for (dv, &y) in d.data.iter_mut().zip(&node.value.data) {
                        if y <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    acc(*x, d);
                }
                Op::Tanh(x) => {
                    let mut d = g;
                    for (dv, &y) in d.data.iter_mut().zip(&node.value.data) {
                        *dv *= 1.0 - y * y;
                    }
                    acc(*x, d);
                }
                Op::Attention { q, k, v, group, heads, probs } => {
                    let (dq, dk, dv) = attention_backward(self.value(*q), self.value(*k), self.value(*v), &g, *group, *heads, probs);
                    acc(*q, dq);
                    acc(*k, dk);
                    acc(*v, dv);
                }
                Op::Combine { x, terms } => {
                    let xm = self.value(*x);
                    let mut d = Mat::zeros(xm.rows, xm.cols);
                    for &(r, i, w) in terms {
                        for (dv, &gv) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                            *dv += w * gv;
                        }
                    }
                    acc(*x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut d = Mat::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        acc(p, d);
                        c0 += cols;
                    }
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                    let (rows, cols) = g.shape();
                    let gam = &self.value(*gamma).data;
                    let mut dgamma = Mat::zeros(1, cols);
                    let mut dbeta = Mat::zeros(1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            dgamma.data[c] += g.get(r, c) * xhat.get(r, c);
                            dbeta.data[c] += g.get(r, c);
                        }
                    }
                    let mut dx = Mat::zeros(rows, cols);
                    let n = rows as f64;
                    for c in 0..cols {
                        let k = gam[c] * inv_std[c];
                        for r in 0..rows {
                            let gh = g.get(r, c);
                            dx.data[r * cols + c] = if *batch_stats {
                                k * (gh - dbeta.data[c] / n - xhat.get(r, c) * dgamma.data[c] / n)
                            } else {
                                k * gh
                            };
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dgamma);
                    acc(*beta, dbeta);
                }
                Op::GroupDot { q, k, group } => {
                    let (qm, km) = (self.value(*q), self.value(*k));
                    let mut dq = Mat::zeros(qm.rows, qm.cols);
                    let mut dk = Mat::zeros(km.rows, km.cols);
                    for b in 0..qm.rows {
                        for i in 0..*group {
                            let gv = g.get(b, i);
                            if gv == 0.0 {
                                continue;
                            }
                            let kr = b * group + i;
                            for c in 0..qm.cols {
                                dq.data[b * qm.cols + c] += gv * km.get(kr, c);
                                dk.data[kr * km.cols + c] += gv * qm.get(b, c);
                            }
                        }
                    }
                    acc(*q, dq);
                    acc(*k, dk);
                }
                Op::LogSoftmaxPick { x, picks, probs } => {
                    let mut d = Mat::zeros(probs.rows, probs.cols);
                    for (r, pick) in picks.iter().enumerate() {
                        if let Some(i) = *pick {
                            let gv = g.data[r];
                            for c in 0..probs.cols {
                                let onehot = if c == i { 1.0 } else { 0.0 };
                                d.data[r * probs.cols + c] = gv * (onehot - probs.get(r, c));
                            }
                        }
                    }
                    acc(*x, d);
                }
                Op::WeightedSum { x, w } => {
                    let gv = g.data[0];
                    acc(*x, Mat::from_vec(w.len(), 1, w.iter().map(|wi| wi * gv).collect()));
                }
            }
        }
        params
    }
}

/// Row-wise softmax restricted to `mask`; masked entries get probability 0.
pub fn masked_softmax(x: &Mat, mask: &[Vec<bool>]) -> Mat {
    let mut p = Mat::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let mx = (0..x.cols).filter(|&c| mask[r][c]).map(|c| x.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            continue;
        }
        let mut z = 0.0;
        for c in 0..x.cols {
            if mask[r][c] {
                let e = (x.get(r, c) - mx).exp();
                p.data[r * x.cols + c] = e;
                z += e;
            }
        }
        for c in 0..x.cols {
            p.data[r * x.cols + c] /= z;
        }
    }
    p
}

fn attention_backward(q: &Mat, k: &Mat, v: &Mat, g: &Mat, group: usize, heads: usize, probs: &[f64]) -> (Mat, Mat, Mat) {
    let (rows, dim) = q.shape();
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Mat::zeros(rows, dim);
    let mut dk = Mat::zeros(rows, dim);
    let mut dv = Mat::zeros(rows, dim);
    let mut dp = vec![0.0; group];
    for gi in 0..rows / group {
        for h in 0..heads {
            let off = h * dh;
            for i in 0..group {
                let ri = gi * group + i;
                let p = &probs[((gi * heads + h) * group + i) * group..][..group];
                let go = &g.row(ri)[off..off + dh];
                // dV_j += p_ij dO_i ; dP_ij = dO_i . V_j
                for j in 0..group {
                    let rj = gi * group + j;
                    dp[j] = dot(go, &v.row(rj)[off..off + dh]);
                    for (d, &x) in dv.data[rj * dim + off..][..dh].iter_mut().zip(go) {
                        *d += p[j] * x;
                    }
                }
                let s: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                for j in 0..group {
                    let rj = gi * group + j;
                    let ds = p[j] * (dp[j] - s) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        dq.data[ri * dim + off + c] += ds * k.get(rj, off + c);
                        dk.data[rj * dim + off + c] += ds * q.get(ri, off + c);
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}
