//! Reverse-mode automatic differentiation over 2-D matrices.
//!
//! A [`Graph`] is built eagerly: every operation computes its value at
//! construction time and records how to push gradients back to its inputs.
//! Parameters are borrowed from a [`ParamStore`] and never copied; calling
//! [`Graph::backward`] accumulates their gradients into a [`Gradients`]
//! buffer. The same graph type is used for inference, simply without the
//! backward pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::{gemm, Matrix};
use crate::params::{Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulBT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        inv_std: Vec<f64>,
    },
    Gather(NodeId, Vec<usize>),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize),
    Transpose(NodeId),
    MeanRows(NodeId),
    Sum(NodeId),
    CrossEntropy {
        logits: NodeId,
        probs: Matrix,
        targets: Vec<usize>,
        smoothing: f64,
    },
}

struct Node {
    value: Option<Matrix>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.get(*p),
            _ => unreachable!("node without value"),
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.shape(), (1, 1));
        v.data[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(av.rows, bv.cols);
        gemm(av, false, bv, false, &mut out, 0.0);
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(av.rows, bv.rows);
        gemm(av, false, bv, true, &mut out, 0.0);
        self.push(out, Op::MatMulBT(a, b))
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        Matrix::from_vec(
            av.rows,
            av.cols,
            av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds the `1 × n` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, r: NodeId) -> NodeId {
        let (av, rv) = (self.value(a), self.value(r));
        assert_eq!((1, av.cols), rv.shape(), "add_row shape mismatch");
        let mut out = av.clone();
        for i in 0..out.rows {
            for (x, y) in out.row_mut(i).iter_mut().zip(&rv.data) {
                *x += y;
            }
        }
        self.push(out, Op::AddRow(a, r))
    }

    pub fn mul_row(&mut self, a: NodeId, r: NodeId) -> NodeId {
        let (av, rv) = (self.value(a), self.value(r));
        assert_eq!((1, av.cols), rv.shape(), "mul_row shape mismatch");
        let mut out = av.clone();
        for i in 0..out.rows {
            for (x, y) in out.row_mut(i).iter_mut().zip(&rv.data) {
                *x *= y;
            }
        }
        self.push(out, Op::MulRow(a, r))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            crate::matrix::softmax_in_place(v.row_mut(i));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Per-row standardization (zero mean, unit variance). Gain and bias are
    /// applied by the caller with [`Graph::mul_row`] / [`Graph::add_row`].
    pub fn layer_norm(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut xhat = Matrix::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        let n = xv.cols as f64;
        for i in 0..xv.rows {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (o, v) in xhat.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(xhat, Op::LayerNorm { x, inv_std })
    }

    /// Row lookup (embedding gather).
    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> NodeId {
        let tv = self.value(table);
        let mut out = Matrix::zeros(indices.len(), tv.cols);
        for (r, &ix) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(tv.row(ix));
        }
        self.push(out, Op::Gather(table, indices.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.rows, rows, "concat_cols row mismatch");
            for i in 0..rows {
                out.row_mut(i)[offset..offset + pv.cols].copy_from_slice(pv.row(i));
            }
            offset += pv.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let av = self.value(a);
        assert!(start + len <= av.cols, "slice_cols out of range");
        let mut out = Matrix::zeros(av.rows, len);
        for i in 0..av.rows {
            out.row_mut(i).copy_from_slice(&av.row(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let av = self.value(a);
        assert!(start + len <= av.rows, "slice_rows out of range");
        let data = av.data[start * av.cols..(start + len) * av.cols].to_vec();
        let cols = av.cols;
        self.push(Matrix::from_vec(len, cols, data), Op::SliceRows(a, start))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut out = Matrix::zeros(1, av.cols);
        for i in 0..av.rows {
            for (o, v) in out.data.iter_mut().zip(av.row(i)) {
                *o += v;
            }
        }
        out.scale_assign(1.0 / av.rows as f64);
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout(&mut self, a: NodeId, p: f64, rng: &mut ChaCha8Rng) -> NodeId {
        if p <= 0.0 {
            return a;
        }
        let (rows, cols) = self.value(a).shape();
        let keep = 1.0 - p;
        let mask = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = self.constant(Matrix::from_vec(rows, cols, mask));
        self.mul(a, m)
    }

    /// Summed (label-smoothed) cross-entropy of each row of `logits` against
    /// `targets`. Returns a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], smoothing: f64) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "cross_entropy row/target mismatch");
        let v = lv.cols as f64;
        let mut probs = lv.clone();
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = probs.row_mut(i);
            let logp = crate::matrix::log_softmax(row);
            loss -= (1.0 - smoothing) * logp[t];
            if smoothing > 0.0 {
                loss -= smoothing / v * logp.iter().sum::<f64>();
            }
            for (p, l) in row.iter_mut().zip(&logp) {
                *p = l.exp();
            }
        }
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
                smoothing,
            },
        )
    }

    /// Back-propagates from the scalar `loss`, adding parameter gradients
    /// into `grads`.
    pub fn backward(&self, loss: NodeId, grads: &mut Gradients) {
        let mut g: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        g.resize_with(self.nodes.len(), || None);
        g[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        fn acc(g: &mut [Option<Matrix>], id: NodeId, m: Matrix) {
            match &mut g[id.0] {
                Some(existing) => existing.add_assign(&m),
                slot => *slot = Some(m),
            }
        }

        fn slot(g: &mut [Option<Matrix>], id: NodeId, rows: usize, cols: usize) -> &mut Matrix {
            g[id.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
        }

        // Weight gradients of `x · W` are collected as stacked rows of `x`
        // and of the output gradient, then reduced with one product when the
        // parameter node itself is reached.
        let mut deferred: Vec<Option<(Vec<f64>, Vec<f64>)>> = Vec::new();
        deferred.resize_with(self.nodes.len(), || None);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if let (Op::Param(p), Some((xs, gs))) = (&node.op, deferred[idx].take()) {
                let target = &mut grads.grads[p.0];
                let (k, n) = target.shape();
                let r = xs.len() / k;
                let x = Matrix::from_vec(r, k, xs);
                let gm = Matrix::from_vec(r, n, gs);
                gemm(&x, true, &gm, false, target, 1.0);
            }
            let Some(gout) = g[idx].take() else { continue };
            match &node.op {
                Op::Const => {}
                Op::Param(p) => grads.accumulate(*p, &gout),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if !matches!(self.nodes[a.0].op, Op::Const) {
                        let da = slot(&mut g, *a, av.rows, av.cols);
                        gemm(&gout, false, bv, true, da, 1.0);
                    }
                    if matches!(self.nodes[b.0].op, Op::Param(_)) {
                        let (xs, gs) = deferred[b.0].get_or_insert_with(Default::default);
                        xs.extend_from_slice(&av.data);
                        gs.extend_from_slice(&gout.data);
                    } else {
                        let db = slot(&mut g, *b, bv.rows, bv.cols);
                        gemm(av, true, &gout, false, db, 1.0);
                    }
                }
                Op::MatMulBT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if !matches!(self.nodes[a.0].op, Op::Const) {
                        let da = slot(&mut g, *a, av.rows, av.cols);
                        gemm(&gout, false, bv, false, da, 1.0);
                    }
                    let db = match self.nodes[b.0].op {
                        Op::Param(p) => &mut grads.grads[p.0],
                        _ => slot(&mut g, *b, bv.rows, bv.cols),
                    };
                    gemm(&gout, true, av, false, db, 1.0);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *b, gout.clone());
                    acc(&mut g, *a, gout);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, gout.map(|x| -x));
                    acc(&mut g, *a, gout);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = Matrix::from_vec(
                        gout.rows,
                        gout.cols,
                        gout.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect(),
                    );
                    let db = Matrix::from_vec(
                        gout.rows,
                        gout.cols,
                        gout.data.iter().zip(&av.data).map(|(x, y)| x * y).collect(),
                    );
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::AddRow(a, r) => {
                    let mut dr = Matrix::zeros(1, gout.cols);
                    for i in 0..gout.rows {
                        for (o, v) in dr.data.iter_mut().zip(gout.row(i)) {
                            *o += v;
                        }
                    }
                    acc(&mut g, *r, dr);
                    acc(&mut g, *a, gout);
                }
                Op::MulRow(a, r) => {
                    let (av, rv) = (self.value(*a), self.value(*r));
                    let mut da = gout.clone();
                    let mut dr = Matrix::zeros(1, gout.cols);
                    for i in 0..gout.rows {
                        let ga = gout.row(i);
                        let ar = av.row(i);
                        for j in 0..gout.cols {
                            dr.data[j] += ga[j] * ar[j];
                        }
                        for (x, y) in da.row_mut(i).iter_mut().zip(&rv.data) {
                            *x *= y;
                        }
                    }
                    acc(&mut g, *r, dr);
                    acc(&mut g, *a, da);
                }
                Op::Scale(a, s) => acc(&mut g, *a, gout.map(|x| x * s)),
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    let da = Matrix::from_vec(
                        y.rows,
                        y.cols,
                        y.data
                            .iter()
                            .zip(&gout.data)
                            .map(|(y, gy)| gy * y * (1.0 - y))
                            .collect(),
                    );
                    acc(&mut g, *a, da);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let da = Matrix::from_vec(
                        y.rows,
                        y.cols,
                        y.data
                            .iter()
                            .zip(&gout.data)
                            .map(|(y, gy)| gy * (1.0 - y * y))
                            .collect(),
                    );
                    acc(&mut g, *a, da);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let da = Matrix::from_vec(
                        x.rows,
                        x.cols,
                        x.data
                            .iter()
                            .zip(&gout.data)
                            .map(|(x, gy)| if *x > 0.0 { *gy } else { 0.0 })
                            .collect(),
                    );
                    acc(&mut g, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().unwrap();
                    let mut da = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let (yr, gr) = (y.row(i), gout.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in da.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut g, *a, da);
                }
                Op::LayerNorm { x, inv_std } => {
                    let xhat = node.value.as_ref().unwrap();
                    let n = xhat.cols as f64;
                    let mut dx = Matrix::zeros(xhat.rows, xhat.cols);
                    for i in 0..xhat.rows {
                        let (xh, gr) = (xhat.row(i), gout.row(i));
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gx = gr.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (o, (gv, xv)) in dx.row_mut(i).iter_mut().zip(gr.iter().zip(xh)) {
                            *o = inv_std[i] * (gv - mean_g - xv * mean_gx);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Gather(table, indices) => {
                    let tv = self.value(*table);
                    let dt = match self.nodes[table.0].op {
                        Op::Param(p) => &mut grads.grads[p.0],
                        _ => slot(&mut g, *table, tv.rows, tv.cols),
                    };
                    for (r, &ix) in indices.iter().enumerate() {
                        for (o, v) in dt.row_mut(ix).iter_mut().zip(gout.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.value(*p).cols;
                        let mut dp = Matrix::zeros(gout.rows, pc);
                        for i in 0..gout.rows {
                            dp.row_mut(i)
                                .copy_from_slice(&gout.row(i)[offset..offset + pc]);
                        }
                        offset += pc;
                        acc(&mut g, *p, dp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let da = slot(&mut g, *a, av.rows, av.cols);
                    for i in 0..av.rows {
                        for (o, v) in da.row_mut(i)[*start..*start + gout.cols].iter_mut().zip(gout.row(i)) {
                            *o += v;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pr = self.value(*p).rows;
                        let data =
                            gout.data[offset * gout.cols..(offset + pr) * gout.cols].to_vec();
                        offset += pr;
                        acc(&mut g, *p, Matrix::from_vec(pr, gout.cols, data));
                    }
                }
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let da = slot(&mut g, *a, av.rows, av.cols);
                    for (o, v) in da.data[start * av.cols..(start + gout.rows) * av.cols]
                        .iter_mut()
                        .zip(&gout.data)
                    {
                        *o += v;
                    }
                }
                Op::Transpose(a) => acc(&mut g, *a, gout.transpose()),
                Op::MeanRows(a) => {
                    let av = self.value(*a);
                    let mut da = Matrix::zeros(av.rows, av.cols);
                    let s = 1.0 / av.rows as f64;
                    for i in 0..av.rows {
                        for (o, v) in da.row_mut(i).iter_mut().zip(&gout.data) {
                            *o = v * s;
                        }
                    }
                    acc(&mut g, *a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut g, *a, Matrix::filled(r, c, gout.data[0]));
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    targets,
                    smoothing,
                } => {
                    let scale = gout.data[0];
                    let uniform = smoothing / probs.cols as f64;
                    let mut dl = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        let row = dl.row_mut(i);
                        if *smoothing > 0.0 {
                            for p in row.iter_mut() {
                                *p -= uniform;
                            }
                        }
                        row[t] -= 1.0 - smoothing;
                        for p in row.iter_mut() {
                            *p *= scale;
                        }
                    }
                    acc(&mut g, *logits, dl);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;

    /// Central finite differences against the tape for a closure that builds
    /// a scalar loss from the parameter store.
    fn check(store: &mut ParamStore, build: impl Fn(&mut Graph) -> NodeId) {
        let mut grads = store.zero_grads();
        {
            let mut g = Graph::new(store);
            let loss = build(&mut g);
            g.backward(loss, &mut grads);
        }
        let eps = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            for j in 0..store.get(id).len() {
                let orig = store.get(id).data[j];
                store.get_mut(id).data[j] = orig + eps;
                let plus = {
                    let mut g = Graph::new(store);
                    let l = build(&mut g);
                    g.scalar(l)
                };
                store.get_mut(id).data[j] = orig - eps;
                let minus = {
                    let mut g = Graph::new(store);
                    let l = build(&mut g);
                    g.scalar(l)
                };
                store.get_mut(id).data[j] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grads.get(id).data[j];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-5 || (numeric - analytic).abs() < 1e-9,
                    "{}[{j}]: numeric {numeric} analytic {analytic}",
                    store.name(id)
                );
            }
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let a = store.add_normal("a", 3, 4, 1.0, &mut rng);
        let b = store.add_normal("b", 4, 2, 1.0, &mut rng);
        let c = store.add_normal("c", 3, 4, 1.0, &mut rng);
        let r = store.add_normal("r", 1, 4, 1.0, &mut rng);
        let emb = store.add_normal("emb", 5, 4, 1.0, &mut rng);
        check(&mut store, |g| {
            let (a, b, c, r, emb) = (g.param(a), g.param(b), g.param(c), g.param(r), g.param(emb));
            let ab = g.matmul(a, b);
            let cbt = g.matmul_bt(c, a);
            let s = g.add(a, c);
            let d = g.sub(s, c);
            let m = g.mul(d, c);
            let ar = g.add_row(m, r);
            let mr = g.mul_row(ar, r);
            let ln = g.layer_norm(mr);
            let sg = g.sigmoid(ln);
            let th = g.tanh(a);
            let re = g.relu(c);
            let cc = g.concat_cols(&[sg, th]);
            let sl = g.slice_cols(cc, 2, 4);
            let sm = g.softmax_rows(sl);
            let e = g.gather(emb, &[0, 3, 3]);
            let cr = g.concat_rows(&[sm, e, re]);
            let sr = g.slice_rows(cr, 1, 6);
            let t = g.transpose(sr);
            let mean = g.mean_rows(t);
            let sc = g.scale(mean, 0.7);
            let ce = g.cross_entropy(ab, &[0, 1, 1], 0.0);
            let ce2 = g.cross_entropy(cbt, &[1, 0, 2], 0.1);
            let total = g.sum(sc);
            let l1 = g.add(total, ce);
            g.add(l1, ce2)
        });
    }
}
