//! Reverse-mode automatic differentiation on a per-forward-pass tape.
//!
//! Parameters are read from a borrowed [`ParamStore`] instead of being copied
//! onto the tape; [`Graph::backward`] returns their gradients as [`Grads`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, mismatch, sigmoid, softmax_in_place, NnError, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Softmax(Var),
    LstmCell { pre: Var, c_prev: Var, gates: Tensor, tanh_c: Tensor },
    Blend(Var, Var, Vec<f64>),
    PickSum(Var, Vec<(usize, usize)>),
    NegLogFloor(Var, f64),
    SumAll(Var),
    Dropout(Var, Vec<f64>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param(_) => vec![],
            MatMul(a, b) | MatMulBt(a, b) | Add(a, b) | Sub(a, b) | AddRow(a, b) | Mul(a, b) | MulScalar(a, b) | Blend(a, b, _) => {
                vec![*a, *b]
            }
            LstmCell { pre, c_prev, .. } => vec![*pre, *c_prev],
            Scale(a, _) | Sigmoid(a) | Tanh(a) | SliceCols(a, _) | SliceRows(a, _) | GatherRows(a, _) | Softmax(a) | PickSum(a, _)
            | NegLogFloor(a, _) | SumAll(a) | Dropout(a, _) => vec![*a],
            ConcatCols(vs) | ConcatRows(vs) => vs.clone(),
        }
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    values: Vec<Tensor>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
    param_vars: Vec<Option<Var>>,
    dropout_rng: Option<ChaCha8Rng>,
}

fn check(op: &'static str, ok: bool, left: [usize; 2], right: [usize; 2]) -> Result<(), NnError> {
    if ok {
        Ok(())
    } else {
        Err(mismatch(op, left, right))
    }
}

impl<'p> Graph<'p> {
    /// Evaluation graph: dropout is the identity.
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            param_vars: vec![None; params.len()],
            dropout_rng: None,
        }
    }

    /// Training graph with dropout masks drawn from `rng`.
    pub fn training(params: &'p ParamStore, rng: ChaCha8Rng) -> Self {
        let mut g = Graph::new(params);
        g.dropout_rng = Some(rng);
        g
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            other => other.inputs().iter().any(|v| self.needs_grad[v.0]),
        };
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs);
        Var(self.ops.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.ops[v.0] {
            Op::Param(id) => self.params.get(id),
            _ => &self.values[v.0],
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).as_scalar()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// The parameter's node; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(Tensor::zeros(0, 0), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        let out = x.matmul(y)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        check("matmul_t", x.cols() == y.cols(), x.shape(), y.shape())?;
        let mut out = Tensor::zeros(x.rows(), y.rows());
        matmul_bt_acc(x.data(), y.data(), out.data_mut(), x.rows(), x.cols(), y.rows());
        Ok(self.push(out, Op::MatMulBt(a, b)))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        check(name, x.shape() == y.shape(), x.shape(), y.shape())?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| f(*p, *q)).collect();
        let out = Tensor::new(x.rows(), x.cols(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (x, r) = (self.value(a), self.value(row));
        check("add_row", r.rows() == 1 && r.cols() == x.cols(), x.shape(), r.shape())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies every entry of `a` by the `1×1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var, NnError> {
        let (x, k) = (self.value(a), self.value(s));
        check("mul_scalar", k.len() == 1, x.shape(), k.shape())?;
        let out = x.map(|v| v * k.as_scalar());
        Ok(self.push(out, Op::MulScalar(a, s)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|v| v * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            check("concat_cols", t.rows() == rows, [rows, cols], t.shape())?;
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            check("concat_rows", t.cols() == cols, [rows, cols], t.shape())?;
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(NnError::Index { op: "slice_cols", index: start + len, len: x.cols() });
        }
        let mut out = Tensor::zeros(x.rows(), len);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(NnError::Index { op: "slice_rows", index: start + len, len: x.rows() });
        }
        let data = x.data()[start * x.cols()..(start + len) * x.cols()].to_vec();
        let out = Tensor::new(len, x.cols(), data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    /// Row lookup; also the embedding operation.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var, NnError> {
        let x = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * x.cols());
        for &r in rows {
            if r >= x.rows() {
                return Err(NnError::Index { op: "gather_rows", index: r, len: x.rows() });
            }
            data.extend_from_slice(x.row(r));
        }
        let out = Tensor::new(rows.len(), x.cols(), data)?;
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec())))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax_rows();
        self.push(out, Op::Softmax(a))
    }

    /// Row-wise softmax where columns with `keep[c] == false` get exactly zero mass.
    pub fn masked_softmax_rows(&mut self, a: Var, keep: &[bool]) -> Result<Var, NnError> {
        let x = self.value(a);
        check("masked_softmax_rows", keep.len() == x.cols(), x.shape(), [1, keep.len()])?;
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let max = x.row(r).iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (c, &k) in keep.iter().enumerate() {
                if k {
                    let e = (x.get(r, c) - max).exp();
                    out.set(r, c, e);
                    total += e;
                }
            }
            if total > 0.0 {
                out.row_mut(r).iter_mut().for_each(|v| *v /= total);
            }
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Fused LSTM cell. `pre` holds the `n×4h` gate pre-activations in
    /// input, forget, candidate, output order; returns `(h, c)`.
    pub fn lstm_cell(&mut self, pre: Var, c_prev: Var) -> Result<(Var, Var), NnError> {
        let (p, c0) = (self.value(pre), self.value(c_prev));
        let h = c0.cols();
        check("lstm_cell", p.rows() == c0.rows() && p.cols() == 4 * h, p.shape(), c0.shape())?;
        let n = p.rows();
        let mut gates = Tensor::zeros(n, 4 * h);
        let mut tanh_c = Tensor::zeros(n, h);
        let mut out = Tensor::zeros(n, 2 * h);
        for r in 0..n {
            let pr = p.row(r);
            let gr = gates.row_mut(r);
            for j in 0..h {
                gr[j] = sigmoid(pr[j]);
                gr[h + j] = sigmoid(pr[h + j]);
                gr[2 * h + j] = pr[2 * h + j].tanh();
                gr[3 * h + j] = sigmoid(pr[3 * h + j]);
            }
            let (cp, gr) = (c0.row(r), gates.row(r));
            for j in 0..h {
                let c = gr[h + j] * cp[j] + gr[j] * gr[2 * h + j];
                let tc = c.tanh();
                tanh_c.set(r, j, tc);
                out.set(r, j, gr[3 * h + j] * tc);
                out.set(r, h + j, c);
            }
        }
        let both = self.push(out, Op::LstmCell { pre, c_prev, gates, tanh_c });
        let hv = self.slice_cols(both, 0, h)?;
        let cv = self.slice_cols(both, h, h)?;
        Ok((hv, cv))
    }

    /// Per-row mix `m·new + (1−m)·old`, used to hold state across padding.
    pub fn blend_rows(&mut self, new: Var, old: Var, mask: &[f64]) -> Result<Var, NnError> {
        let (x, y) = (self.value(new), self.value(old));
        check("blend_rows", x.shape() == y.shape() && mask.len() == x.rows(), x.shape(), y.shape())?;
        let mut out = x.clone();
        for (r, &m) in mask.iter().enumerate() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(y.row(r)) {
                *o = m * *o + (1.0 - m) * b;
            }
        }
        Ok(self.push(out, Op::Blend(new, old, mask.to_vec())))
    }

    /// Sum of the selected entries, as a `1×1` node. Repeated positions count repeatedly.
    pub fn pick_sum(&mut self, a: Var, positions: &[(usize, usize)]) -> Result<Var, NnError> {
        let x = self.value(a);
        let mut total = 0.0;
        for &(r, c) in positions {
            if r >= x.rows() || c >= x.cols() {
                return Err(NnError::Index { op: "pick_sum", index: r * x.cols() + c, len: x.len() });
            }
            total += x.get(r, c);
        }
        Ok(self.push(Tensor::scalar(total), Op::PickSum(a, positions.to_vec())))
    }

    /// `−ln(max(a, floor))` for a `1×1` node.
    pub fn neg_log_floor(&mut self, a: Var, floor: f64) -> Result<Var, NnError> {
        let x = self.value(a);
        check("neg_log_floor", x.len() == 1, x.shape(), [1, 1])?;
        let out = Tensor::scalar(-x.as_scalar().max(floor).ln());
        Ok(self.push(out, Op::NegLogFloor(a, floor)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    /// Sums `1×1` nodes (or any equally shaped nodes).
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Inverted dropout; the identity on evaluation graphs or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 || self.dropout_rng.is_none() {
            return a;
        }
        let keep = 1.0 - p;
        let n = self.value(a).len();
        let rng = self.dropout_rng.as_mut().expect("training graph");
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(x.rows(), x.cols(), data).expect("same shape");
        self.push(out, Op::Dropout(a, mask))
    }

    /// `x·W + b` with `b` a `1×n` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    /// Embedding lookup: rows of the table `e` for `ids`.
    pub fn embed(&mut self, e: Var, ids: &[usize]) -> Result<Var, NnError> {
        self.gather_rows(e, ids)
    }

    /// `−ln p[0, target]` for a `1×n` distribution.
    pub fn cross_entropy(&mut self, p: Var, target: usize) -> Result<Var, NnError> {
        let picked = self.pick_sum(p, &[(0, target)])?;
        self.neg_log_floor(picked, 0.0)
    }

    /// Gradients of the `1×1` node `loss` with respect to every parameter it depends on.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.ops.len());
        grads.resize_with(self.ops.len(), || None);
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));
        let mut out = Grads::for_store(self.params);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.needs_grad[i] {
                continue;
            }
            self.backprop(i, &g, &mut grads);
            if let Op::Param(id) = self.ops[i] {
                out.accumulate(id, &g);
            }
        }
        out
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut Tensor> {
        if !self.needs_grad[v.0] {
            return None;
        }
        let [r, c] = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    fn backprop(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        use Op::*;
        let out = &self.values[i];
        match &self.ops[i] {
            Leaf | Param(_) => {}
            MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                if let Some(ga) = self.grad_slot(grads, *a) {
                    matmul_bt_acc(g.data(), y.data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    matmul_at_acc(x.data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            MatMulBt(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.rows());
                if let Some(ga) = self.grad_slot(grads, *a) {
                    matmul_acc(g.data(), y.data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    matmul_at_acc(g.data(), x.data(), gb.data_mut(), m, n, k);
                }
            }
            Add(a, b) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Sub(a, b) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= v;
                    }
                }
            }
            AddRow(a, row) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gr) = self.grad_slot(grads, *row) {
                    for r in 0..g.rows() {
                        for (o, v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gv), yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gv * yv;
                    }
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    for ((o, gv), xv) in gb.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *o += gv * xv;
                    }
                }
            }
            MulScalar(a, s) => {
                let (x, k) = (self.value(*a), self.value(*s).as_scalar());
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (o, gv) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += gv * k;
                    }
                }
                if let Some(gs) = self.grad_slot(grads, *s) {
                    gs.data_mut()[0] += g.data().iter().zip(x.data()).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            Scale(a, k) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (o, gv) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += gv * k;
                    }
                }
            }
            Sigmoid(a) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gv * y * (1.0 - y);
                    }
                }
            }
            Tanh(a) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gv * (1.0 - y * y);
                    }
                }
            }
            ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if let Some(gp) = self.grad_slot(grads, p) {
                        for r in 0..g.rows() {
                            for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[at..at + w]) {
                                *o += v;
                            }
                        }
                    }
                    at += w;
                }
            }
            ConcatRows(parts) => {
                let mut at = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if let Some(gp) = self.grad_slot(grads, p) {
                        for (o, v) in gp.data_mut().iter_mut().zip(&g.data()[at..at + n]) {
                            *o += v;
                        }
                    }
                    at += n;
                }
            }
            SliceCols(a, start) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for r in 0..g.rows() {
                        for (o, v) in ga.row_mut(r)[*start..].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            SliceRows(a, start) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    let cols = g.cols();
                    for (o, v) in ga.data_mut()[start * cols..].iter_mut().zip(g.data()) {
                        *o += v;
                    }
                }
            }
            GatherRows(a, rows) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Softmax(a) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for r in 0..g.rows() {
                        let (y, gy) = (out.row(r), g.row(r));
                        let dot: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                        for ((o, yv), gv) in ga.row_mut(r).iter_mut().zip(y).zip(gy) {
                            *o += yv * (gv - dot);
                        }
                    }
                }
            }
            LstmCell { pre, c_prev, gates, tanh_c } => {
                let h = tanh_c.cols();
                let c0 = self.value(*c_prev).clone();
                let mut dpre = Tensor::zeros(g.rows(), 4 * h);
                let mut dc_prev = Tensor::zeros(g.rows(), h);
                for r in 0..g.rows() {
                    let (gr, tc, cp, gg) = (gates.row(r), tanh_c.row(r), c0.row(r), g.row(r));
                    let dp = dpre.row_mut(r);
                    for j in 0..h {
                        let (ig, fg, cg, og) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                        let dh = gg[j];
                        let dc = gg[h + j] + dh * og * (1.0 - tc[j] * tc[j]);
                        dp[j] = dc * cg * ig * (1.0 - ig);
                        dp[h + j] = dc * cp[j] * fg * (1.0 - fg);
                        dp[2 * h + j] = dc * ig * (1.0 - cg * cg);
                        dp[3 * h + j] = dh * tc[j] * og * (1.0 - og);
                        dc_prev.set(r, j, dc * fg);
                    }
                }
                if let Some(gp) = self.grad_slot(grads, *pre) {
                    gp.add_assign(&dpre);
                }
                if let Some(gc) = self.grad_slot(grads, *c_prev) {
                    gc.add_assign(&dc_prev);
                }
            }
            Blend(new, old, mask) => {
                if let Some(gn) = self.grad_slot(grads, *new) {
                    for (r, &m) in mask.iter().enumerate() {
                        for (o, v) in gn.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += m * v;
                        }
                    }
                }
                if let Some(go) = self.grad_slot(grads, *old) {
                    for (r, &m) in mask.iter().enumerate() {
                        for (o, v) in go.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += (1.0 - m) * v;
                        }
                    }
                }
            }
            PickSum(a, positions) => {
                let gv = g.as_scalar();
                if let Some(ga) = self.grad_slot(grads, *a) {
                    let cols = ga.cols();
                    for &(r, c) in positions {
                        ga.data_mut()[r * cols + c] += gv;
                    }
                }
            }
            NegLogFloor(a, floor) => {
                let x = self.value(*a).as_scalar();
                if let Some(ga) = self.grad_slot(grads, *a) {
                    if x > *floor {
                        ga.data_mut()[0] -= g.as_scalar() / x;
                    }
                }
            }
            SumAll(a) => {
                let gv = g.as_scalar();
                if let Some(ga) = self.grad_slot(grads, *a) {
                    ga.data_mut().iter_mut().for_each(|o| *o += gv);
                }
            }
            Dropout(a, mask) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gv), m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
        }
    }
}

/// Softmax of a plain slice, for inference code that does not need a tape.
pub fn softmax_vec(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    softmax_in_place(&mut v);
    v
}
