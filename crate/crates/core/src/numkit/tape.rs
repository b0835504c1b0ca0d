use std::sync::atomic::{AtomicU64, Ordering};

use super::{sigmoid, softplus, NumError, ParamStore, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    id: usize,
}

#[derive(Debug)]
enum Op {
    Constant,
    Watched,
    Param(String),
    MatMul(usize, usize),
    AddBias(usize, usize),
    AddCol(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Relu(usize),
    Softplus(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    LogSoftmaxRows(usize),
    Sum(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    Gather(usize, Vec<usize>),
    CrossEntropy(usize, Tensor),
    /// Scalar output with precomputed local gradients, one per input.
    Fused(Vec<(usize, Tensor)>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation so it can be replayed backwards.
///
/// Operations validate shapes eagerly and return [`NumError::Shape`]
/// on mismatch. Constants never receive gradients; parameters and
/// watched inputs do.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does
    /// not require gradients or was not reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.id).and_then(Option::as_ref)
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<(), NumError> {
    if a.shape() != b.shape() {
        return Err(NumError::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

/// `a [n,k] x b [k,m]`
fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a [n,k] x b^T` where `b` is `[m,k]`
fn matmul_bt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T x b` where `a` is `[n,k]`, `b` is `[n,m]`
fn matmul_at(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|&v| v - lse).collect()
}

impl Tape {
    pub fn new() -> Self {
        Tape {
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize, NumError> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(NumError::State(format!(
                "value {} does not belong to this tape",
                v.id
            )));
        }
        Ok(v.id)
    }

    fn node(&self, v: Var) -> Result<(usize, &Tensor, bool), NumError> {
        let i = self.idx(v)?;
        let n = &self.nodes[i];
        Ok((i, &n.value, n.requires_grad))
    }

    pub fn value(&self, v: Var) -> Result<&Tensor, NumError> {
        Ok(self.node(v)?.1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn watch(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Watched, true)
    }

    /// Loads parameter `name` from `store`; its gradient is routed back by
    /// [`Tape::backward_into`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumError> {
        let t = store
            .get(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?
            .clone();
        Ok(self.push(t, Op::Param(name.to_string()), true))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (ib, tb, gb) = self.node(b)?;
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(NumError::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::matrix(n, m, matmul(ta.data(), tb.data(), n, k, m))?;
        Ok(self.push(out, Op::MatMul(ia, ib), ga || gb))
    }

    /// Adds a `[m]` bias to every row of an `[n, m]` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (ib, tb, gb) = self.node(bias)?;
        let (n, m) = ta.dims2();
        if ta.shape().len() != 2 || tb.len() != m {
            return Err(NumError::shape(
                "add_bias",
                format!("{:?} + {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut data = ta.data().to_vec();
        for r in 0..n {
            for (d, b) in data[r * m..(r + 1) * m].iter_mut().zip(tb.data()) {
                *d += b;
            }
        }
        let out = Tensor::matrix(n, m, data)?;
        Ok(self.push(out, Op::AddBias(ia, ib), ga || gb))
    }

    /// Adds an `[n, 1]` column to every column of an `[n, m]` matrix.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (ic, tc, gc) = self.node(col)?;
        let (n, m) = ta.dims2();
        if ta.shape().len() != 2 || tc.shape() != [n, 1] {
            return Err(NumError::shape(
                "add_col",
                format!("{:?} + {:?}", ta.shape(), tc.shape()),
            ));
        }
        let mut data = ta.data().to_vec();
        for r in 0..n {
            let c = tc.data()[r];
            for d in &mut data[r * m..(r + 1) * m] {
                *d += c;
            }
        }
        let out = Tensor::matrix(n, m, data)?;
        Ok(self.push(out, Op::AddCol(ia, ic), ga || gc))
    }

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (ib, tb, gb) = self.node(b)?;
        same_shape(name, ta, tb)?;
        let out = zip(ta, tb, f);
        Ok(self.push(out, op(ia, ib), ga || gb))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: impl Fn(usize) -> Op,
    ) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let out = ta.map(f);
        Ok(self.push(out, op(ia), ga))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumError> {
        self.unary(a, |x| x * c, |i| Op::Scale(i, c))
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var, NumError> {
        self.unary(a, |x| x + c, Op::Shift)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, softplus, Op::Softplus)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, f64::ln, Op::Log)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, |x| x * x, Op::Square)
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (n, m) = ta.dims2();
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            data.extend(log_softmax_row(ta.row(r)));
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::LogSoftmaxRows(ia), ga))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let out = Tensor::scalar(ta.data().iter().sum());
        Ok(self.push(out, Op::Sum(ia), ga))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (ib, tb, gb) = self.node(b)?;
        let (na, ma) = ta.dims2();
        let (nb, mb) = tb.dims2();
        if ta.shape().len() != 2 || tb.shape().len() != 2 || na != nb {
            return Err(NumError::shape(
                "concat_cols",
                format!("{:?} | {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut data = Vec::with_capacity(na * (ma + mb));
        for r in 0..na {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor::matrix(na, ma + mb, data)?;
        Ok(self.push(out, Op::ConcatCols(ia, ib), ga || gb))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let (ia, ta, ga) = self.node(a)?;
        let (n, m) = ta.dims2();
        if ta.shape().len() != 2 || start >= end || end > m {
            return Err(NumError::shape(
                "slice_cols",
                format!("{start}..{end} of {:?}", ta.shape()),
            ));
        }
        let mut data = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            data.extend_from_slice(&ta.row(r)[start..end]);
        }
        let out = Tensor::matrix(n, end - start, data)?;
        Ok(self.push(out, Op::SliceCols(ia, start, end), ga))
    }

    /// Selects rows of a `[v, e]` table (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var, NumError> {
        let (it, tt, gt) = self.node(table)?;
        let (v, e) = tt.dims2();
        if tt.shape().len() != 2 {
            return Err(NumError::shape("gather_rows", format!("table {:?}", tt.shape())));
        }
        let mut data = Vec::with_capacity(rows.len() * e);
        for &r in rows {
            if r >= v {
                return Err(NumError::shape(
                    "gather_rows",
                    format!("row {r} out of range for {v} rows"),
                ));
            }
            data.extend_from_slice(tt.row(r));
        }
        let out = Tensor::matrix(rows.len(), e, data)?;
        Ok(self.push(out, Op::Gather(it, rows.to_vec()), gt))
    }

    /// Summed softmax cross-entropy of `[n, c]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumError> {
        let (il, tl, gl) = self.node(logits)?;
        let (n, c) = tl.dims2();
        if tl.shape().len() != 2 || targets.len() != n {
            return Err(NumError::shape(
                "cross_entropy",
                format!("logits {:?}, {} targets", tl.shape(), targets.len()),
            ));
        }
        let mut loss = 0.0;
        let mut local = Vec::with_capacity(n * c);
        for (r, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(NumError::shape(
                    "cross_entropy",
                    format!("target {t} out of range for {c} classes"),
                ));
            }
            let ls = log_softmax_row(tl.row(r));
            loss -= ls[t];
            local.extend(ls.iter().enumerate().map(|(j, &l)| {
                let p = l.exp();
                if j == t {
                    p - 1.0
                } else {
                    p
                }
            }));
        }
        let local = Tensor::new(tl.shape().to_vec(), local)?;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(il, local), gl))
    }

    /// Records a scalar computed outside the tape together with its
    /// gradient with respect to each input.
    pub fn fused_scalar(
        &mut self,
        value: f64,
        inputs: Vec<(Var, Tensor)>,
    ) -> Result<Var, NumError> {
        let mut parts = Vec::with_capacity(inputs.len());
        let mut requires = false;
        for (v, g) in inputs {
            let (i, t, r) = self.node(v)?;
            same_shape("fused_scalar", t, &g)?;
            requires |= r;
            parts.push((i, g));
        }
        Ok(self.push(Tensor::scalar(value), Op::Fused(parts), requires))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        let li = self.idx(loss)?;
        if self.nodes[li].value.len() != 1 {
            return Err(NumError::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[li].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[li] = Some(Tensor::filled(self.nodes[li].value.shape(), 1.0));
        for i in (0..=li).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    /// Runs [`Tape::backward`] and writes parameter gradients into `store`.
    /// Every gradient slot is reset first, so parameters the loss does not
    /// reach end up with an exact zero gradient.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients, NumError> {
        let grads = self.backward(loss)?;
        store.zero_grad();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(name), Some(g)) = (&node.op, &grads.grads[i]) {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(grads)
    }

    fn send(&self, grads: &mut [Option<Tensor>], to: usize, g: Tensor) {
        if self.nodes[to].requires_grad {
            accumulate(&mut grads[to], g);
        }
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Constant | Op::Watched | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ta = &self.nodes[*a].value;
                let tb = &self.nodes[*b].value;
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    let d = matmul_bt(g.data(), tb.data(), n, m, k);
                    self.send(grads, *a, Tensor::matrix(n, k, d).unwrap());
                }
                if self.wants(*b) {
                    let d = matmul_at(ta.data(), g.data(), n, k, m);
                    self.send(grads, *b, Tensor::matrix(k, m, d).unwrap());
                }
            }
            Op::AddBias(a, b) => {
                self.send(grads, *a, g.clone());
                if self.wants(*b) {
                    let (n, m) = g.dims2();
                    let mut d = vec![0.0; m];
                    for r in 0..n {
                        for (acc, v) in d.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    let shape = self.nodes[*b].value.shape().to_vec();
                    self.send(grads, *b, Tensor::new(shape, d).unwrap());
                }
            }
            Op::AddCol(a, c) => {
                self.send(grads, *a, g.clone());
                if self.wants(*c) {
                    let (n, _) = g.dims2();
                    let d = (0..n).map(|r| g.row(r).iter().sum()).collect();
                    self.send(grads, *c, Tensor::matrix(n, 1, d).unwrap());
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.clone());
                self.send(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.send(grads, *a, g.clone());
                self.send(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ta = &self.nodes[*a].value;
                let tb = &self.nodes[*b].value;
                if self.wants(*a) {
                    self.send(grads, *a, zip(g, tb, |x, y| x * y));
                }
                if self.wants(*b) {
                    self.send(grads, *b, zip(g, ta, |x, y| x * y));
                }
            }
            Op::Scale(a, c) => self.send(grads, *a, g.map(|v| v * c)),
            Op::Shift(a) => self.send(grads, *a, g.clone()),
            Op::Relu(a) => {
                let ta = &self.nodes[*a].value;
                self.send(grads, *a, zip(g, ta, |d, x| if x > 0.0 { d } else { 0.0 }));
            }
            Op::Softplus(a) => {
                let ta = &self.nodes[*a].value;
                self.send(grads, *a, zip(g, ta, |d, x| d * sigmoid(x)));
            }
            Op::Sigmoid(a) => self.send(grads, *a, zip(g, out, |d, y| d * y * (1.0 - y))),
            Op::Exp(a) => self.send(grads, *a, zip(g, out, |d, y| d * y)),
            Op::Log(a) => {
                let ta = &self.nodes[*a].value;
                self.send(grads, *a, zip(g, ta, |d, x| d / x));
            }
            Op::Square(a) => {
                let ta = &self.nodes[*a].value;
                self.send(grads, *a, zip(g, ta, |d, x| 2.0 * d * x));
            }
            Op::LogSoftmaxRows(a) => {
                let (n, m) = out.dims2();
                let mut d = Vec::with_capacity(n * m);
                for r in 0..n {
                    let gr = g.row(r);
                    let total: f64 = gr.iter().sum();
                    d.extend(out.row(r).iter().zip(gr).map(|(&y, &gv)| gv - y.exp() * total));
                }
                self.send(grads, *a, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Sum(a) => {
                let shape = self.nodes[*a].value.shape().to_vec();
                self.send(grads, *a, Tensor::filled(&shape, g.data()[0]));
            }
            Op::ConcatCols(a, b) => {
                let (n, ma) = self.nodes[*a].value.dims2();
                let (_, mb) = self.nodes[*b].value.dims2();
                let mut da = Vec::with_capacity(n * ma);
                let mut db = Vec::with_capacity(n * mb);
                for r in 0..n {
                    let row = g.row(r);
                    da.extend_from_slice(&row[..ma]);
                    db.extend_from_slice(&row[ma..]);
                }
                self.send(grads, *a, Tensor::matrix(n, ma, da).unwrap());
                self.send(grads, *b, Tensor::matrix(n, mb, db).unwrap());
            }
            Op::SliceCols(a, start, end) => {
                let (n, m) = self.nodes[*a].value.dims2();
                let mut d = vec![0.0; n * m];
                for r in 0..n {
                    d[r * m + start..r * m + end].copy_from_slice(g.row(r));
                }
                self.send(grads, *a, Tensor::matrix(n, m, d).unwrap());
            }
            Op::Gather(t, rows) => {
                let (v, e) = self.nodes[*t].value.dims2();
                let mut d = vec![0.0; v * e];
                for (k, &r) in rows.iter().enumerate() {
                    for (acc, x) in d[r * e..(r + 1) * e].iter_mut().zip(g.row(k)) {
                        *acc += x;
                    }
                }
                self.send(grads, *t, Tensor::matrix(v, e, d).unwrap());
            }
            Op::CrossEntropy(a, local) => {
                let s = g.data()[0];
                self.send(grads, *a, local.map(|v| v * s));
            }
            Op::Fused(parts) => {
                let s = g.data()[0];
                for (a, local) in parts {
                    if self.wants(*a) {
                        self.send(grads, *a, local.map(|v| v * s));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_gradient_is_outer_structure() {
        // loss = sum(x W) => dW[i][j] = x[i]
        let mut store = ParamStore::new();
        store.insert("w", Tensor::matrix(3, 2, vec![0.5; 6]).unwrap());
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        let w = tape.param(&store, "w").unwrap();
        let y = tape.matmul(x, w).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward_into(loss, &mut store).unwrap();
        assert_eq!(
            store.grad("w").unwrap().data(),
            &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]
        );
    }

    #[test]
    fn disconnected_parameter_gets_exact_zero() {
        let mut store = ParamStore::new();
        store.insert("used", Tensor::vector(vec![2.0]));
        store.insert("unused", Tensor::vector(vec![5.0, 6.0]));
        let mut tape = Tape::new();
        let u = tape.param(&store, "used").unwrap();
        let sq = tape.square(u).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.grad("used").unwrap().data(), &[4.0]);
        assert_eq!(store.grad("unused").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn foreign_var_is_a_state_error() {
        let mut a = Tape::new();
        let b = Tape::new();
        let v = a.watch(Tensor::scalar(1.0));
        assert!(matches!(b.backward(v), Err(NumError::State(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let v = t.watch(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(v), Err(NumError::State(_))));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = t.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        assert!(matches!(t.matmul(a, b), Err(NumError::Shape { .. })));
    }

    #[test]
    fn input_gradient_through_cross_entropy() {
        // uniform logits: d/dlogit = p - onehot = (1/3 - 1, 1/3, 1/3)
        let mut t = Tape::new();
        let z = t.watch(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
        let loss = t.cross_entropy(z, &[0]).unwrap();
        let g = t.backward(loss).unwrap();
        let d = g.wrt(z).unwrap().data();
        assert!((d[0] + 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.value(loss).unwrap().data()[0] - 3f64.ln()).abs() < 1e-15);
    }
}
