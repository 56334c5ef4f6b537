//! Reverse-mode automatic differentiation over flat `f64` buffers.
//!
//! The graph is define-by-run: every forward operation allocates a node that
//! records its parents, and [`Tensor::backward`] replays the recorded ops in
//! reverse topological order. Tensors are cheap reference-counted handles;
//! cloning one clones the handle, not the buffer. Only the op set needed by
//! the MLP/GAN/DQN stack is implemented — there is no broadcasting beyond
//! the bias/column cases used by those networks.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Backward records. Each variant stores the parent handles (and any scalar
/// attributes) needed to push the output gradient back through the op.
enum Op {
    MatMul(Tensor, Tensor),
    /// x[m,n] + b[n], bias broadcast over rows.
    AddBias(Tensor, Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    /// mul * x + add, elementwise; only the slope matters for gradients.
    Affine(Tensor, f64),
    Relu(Tensor),
    LeakyRelu(Tensor, f64),
    Sigmoid(Tensor),
    Log(Tensor),
    Clamp(Tensor, f64, f64),
    MeanAll(Tensor),
    /// Row means: [m,n] -> [m,1].
    MeanRows(Tensor),
    /// x[m,n] + v[m,1], column broadcast over columns of each row.
    AddCol(Tensor, Tensor),
    /// x[m,n] - v[m,1].
    SubCol(Tensor, Tensor),
    /// Per-row column selection: out[i] = x[i, idx[i]], -> [m,1].
    GatherCols(Tensor, Rc<[usize]>),
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    op: Option<Op>,
    requires_grad: bool,
}

/// A 1-D or 2-D tensor participating in the autodiff graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl Tensor {
    fn new(data: Vec<f64>, shape: Vec<usize>, op: Option<Op>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                op,
                requires_grad,
            }),
        }
    }

    /// Leaf tensor that does not require gradients (inputs, targets).
    pub fn constant(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Self::check_shape(&data, shape)?;
        Ok(Tensor::new(data, shape.to_vec(), None, false))
    }

    /// Leaf tensor tracked by the optimizer (weights, biases).
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Self::check_shape(&data, shape)?;
        Ok(Tensor::new(data, shape.to_vec(), None, true))
    }

    fn check_shape(data: &[f64], shape: &[usize]) -> Result<()> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::Shape(format!(
                "tensors are 1-D or 2-D, got {}-D",
                shape.len()
            )));
        }
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::Shape(format!(
                "buffer holds {} values but shape {:?} needs {}",
                data.len(),
                shape,
                want
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    /// Rows/cols view: 1-D tensors count as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match *self.inner.shape.as_slice() {
            [n] => (1, n),
            [m, n] => (m, n),
            _ => unreachable!("tensors are 1-D or 2-D"),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Borrow the value buffer (row-major).
    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Single-element accessor for scalar tensors.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::Contract(format!(
                "item() needs a scalar tensor, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data.borrow()[0])
    }

    /// Overwrite the value buffer in place (optimizer updates, tests).
    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.len() {
            return Err(Error::Shape(format!(
                "set_data with {} values on tensor of {}",
                data.len(),
                self.len()
            )));
        }
        *self.inner.data.borrow_mut() = data;
        Ok(())
    }

    /// Gradient accumulated by the latest backward pass, if this tensor
    /// participated in it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Gradient buffer, with zeros standing in for "never reached".
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad().unwrap_or_else(|| vec![0.0; self.len()])
    }

    /// Mutate the gradient buffer in place (gradient clipping).
    pub fn map_grad(&self, f: impl Fn(f64) -> f64) {
        if let Some(g) = self.inner.grad.borrow_mut().as_mut() {
            for v in g.iter_mut() {
                *v = f(*v);
            }
        }
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    // ── forward ops ─────────────────────────────────────────────────────

    fn unary(&self, data: Vec<f64>, op: Op) -> Tensor {
        let req = self.inner.requires_grad;
        Tensor::new(
            data,
            self.inner.shape.clone(),
            if req { Some(op) } else { None },
            req,
        )
    }

    fn binary(&self, other: &Tensor, data: Vec<f64>, shape: Vec<usize>, op: Op) -> Tensor {
        let req = self.inner.requires_grad || other.inner.requires_grad;
        Tensor::new(data, shape, if req { Some(op) } else { None }, req)
    }

    /// Matrix product `self[m,k] @ other[k,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2();
        let (k2, n) = other.dims2();
        if self.inner.shape.len() != 2 || other.inner.shape.len() != 2 || k != k2 {
            return Err(Error::Shape(format!(
                "matmul {:?} @ {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, &self.data(), &other.data(), m, k, n);
        Ok(self.binary(
            other,
            out,
            vec![m, n],
            Op::MatMul(self.clone(), other.clone()),
        ))
    }

    /// Broadcast bias add: `self[m,n] + bias[n]`.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2();
        if bias.inner.shape.len() != 1 || bias.len() != n {
            return Err(Error::Shape(format!(
                "add_bias {:?} + {:?}",
                self.shape(),
                bias.shape()
            )));
        }
        let x = self.data();
        let b = bias.data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(x[i * n + j] + b[j]);
            }
        }
        Ok(self.binary(
            bias,
            out,
            self.inner.shape.clone(),
            Op::AddBias(self.clone(), bias.clone()),
        ))
    }

    fn same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.inner.shape != other.inner.shape {
            return Err(Error::Shape(format!(
                "{what} {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        let out = zip_map(&self.data(), &other.data(), |a, b| a + b);
        Ok(self.binary(
            other,
            out,
            self.inner.shape.clone(),
            Op::Add(self.clone(), other.clone()),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        let out = zip_map(&self.data(), &other.data(), |a, b| a - b);
        Ok(self.binary(
            other,
            out,
            self.inner.shape.clone(),
            Op::Sub(self.clone(), other.clone()),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        let out = zip_map(&self.data(), &other.data(), |a, b| a * b);
        Ok(self.binary(
            other,
            out,
            self.inner.shape.clone(),
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&self, mul: f64, add: f64) -> Tensor {
        let out = self.data().iter().map(|v| mul * v + add).collect();
        self.unary(out, Op::Affine(self.clone(), mul))
    }

    pub fn relu(&self) -> Tensor {
        let out = self.data().iter().map(|v| v.max(0.0)).collect();
        self.unary(out, Op::Relu(self.clone()))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let out = self
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        self.unary(out, Op::LeakyRelu(self.clone(), slope))
    }

    pub fn sigmoid(&self) -> Tensor {
        let out = self.data().iter().map(|&v| sigmoid(v)).collect();
        self.unary(out, Op::Sigmoid(self.clone()))
    }

    /// Natural log. Callers guard the domain with [`Tensor::clamp`] first.
    pub fn log(&self) -> Tensor {
        let out = self.data().iter().map(|v| v.ln()).collect();
        self.unary(out, Op::Log(self.clone()))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let out = self.data().iter().map(|v| v.clamp(lo, hi)).collect();
        self.unary(out, Op::Clamp(self.clone(), lo, hi))
    }

    /// Mean of every element, producing a scalar `[1]`.
    pub fn mean_all(&self) -> Tensor {
        let d = self.data();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let req = self.inner.requires_grad;
        Tensor::new(
            vec![m],
            vec![1],
            if req { Some(Op::MeanAll(self.clone())) } else { None },
            req,
        )
    }

    /// Per-row mean: `[m,n] -> [m,1]`.
    pub fn mean_rows(&self) -> Tensor {
        let (m, n) = self.dims2();
        let d = self.data();
        let out: Vec<f64> = (0..m)
            .map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let req = self.inner.requires_grad;
        Tensor::new(
            out,
            vec![m, 1],
            if req { Some(Op::MeanRows(self.clone())) } else { None },
            req,
        )
    }

    /// Column broadcast add: `self[m,n] + v[m,1]`.
    pub fn add_col(&self, v: &Tensor) -> Result<Tensor> {
        self.check_col(v, "add_col")?;
        let (m, n) = self.dims2();
        let x = self.data();
        let c = v.data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(x[i * n + j] + c[i]);
            }
        }
        Ok(self.binary(
            v,
            out,
            self.inner.shape.clone(),
            Op::AddCol(self.clone(), v.clone()),
        ))
    }

    /// Column broadcast subtract: `self[m,n] - v[m,1]`.
    pub fn sub_col(&self, v: &Tensor) -> Result<Tensor> {
        self.check_col(v, "sub_col")?;
        let (m, n) = self.dims2();
        let x = self.data();
        let c = v.data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(x[i * n + j] - c[i]);
            }
        }
        Ok(self.binary(
            v,
            out,
            self.inner.shape.clone(),
            Op::SubCol(self.clone(), v.clone()),
        ))
    }

    fn check_col(&self, v: &Tensor, what: &str) -> Result<()> {
        let (m, _) = self.dims2();
        if v.inner.shape.as_slice() != [m, 1] {
            return Err(Error::Shape(format!(
                "{what} {:?} with column {:?}",
                self.shape(),
                v.shape()
            )));
        }
        Ok(())
    }

    /// Select one column per row: `out[i,0] = self[i, idx[i]]`.
    pub fn gather_cols(&self, idx: &[usize]) -> Result<Tensor> {
        let (m, n) = self.dims2();
        if idx.len() != m {
            return Err(Error::Shape(format!(
                "gather_cols needs {m} indices, got {}",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
            return Err(Error::Contract(format!(
                "gather_cols index {bad} out of range for {n} columns"
            )));
        }
        let d = self.data();
        let out: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| d[i * n + j]).collect();
        let req = self.inner.requires_grad;
        let idx: Rc<[usize]> = idx.into();
        Ok(Tensor::new(
            out,
            vec![m, 1],
            if req { Some(Op::GatherCols(self.clone(), idx)) } else { None },
            req,
        ))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse-mode pass from a scalar loss. Gradients of every tensor in
    /// the graph are reset and freshly accumulated, so calling this twice on
    /// the same loss reproduces the same gradients rather than doubling
    /// them. Leaves outside the graph keep their previous (or absent) grad.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, shape is {:?}",
                self.shape()
            )));
        }
        if !self.inner.requires_grad {
            return Err(Error::Contract(
                "backward on a graph with no trainable parameters".into(),
            ));
        }
        let order = self.topo_order();
        for t in &order {
            *t.inner.grad.borrow_mut() = Some(vec![0.0; t.len()]);
        }
        self.inner.grad.borrow_mut().as_mut().unwrap()[0] = 1.0;
        for t in order.iter().rev() {
            t.push_grad_to_parents();
        }
        Ok(())
    }

    /// Post-order over the requires-grad subgraph: parents precede children.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        // Iterative DFS; graphs are shallow but batch code should not gamble
        // on stack depth.
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.inner.id) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(op) = &t.inner.op {
                for p in op.parents() {
                    if p.inner.requires_grad && !seen.contains(&p.inner.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }

    fn push_grad_to_parents(&self) {
        let Some(op) = &self.inner.op else { return };
        let g = self.inner.grad.borrow();
        let g = g.as_ref().expect("gradient allocated by backward");
        op.backward(g);
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("data", &self.inner.data.borrow())
            .finish()
    }
}

impl Op {
    fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddCol(a, b)
            | Op::SubCol(a, b) => vec![a, b],
            Op::Affine(x, _)
            | Op::Relu(x)
            | Op::LeakyRelu(x, _)
            | Op::Sigmoid(x)
            | Op::Log(x)
            | Op::Clamp(x, _, _)
            | Op::MeanAll(x)
            | Op::MeanRows(x)
            | Op::GatherCols(x, _) => vec![x],
        }
    }

    /// Accumulate `g` (the output gradient) into each parent that wants it.
    fn backward(&self, g: &[f64]) {
        match self {
            Op::MatMul(a, b) => {
                let (m, k) = a.dims2();
                let (_, n) = b.dims2();
                if a.inner.requires_grad {
                    // da = g @ b^T, computed as ikj over the transpose.
                    let bt = transpose(&b.data(), k, n);
                    accumulate(a, |da| matmul_into(da, g, &bt, m, n, k));
                }
                if b.inner.requires_grad {
                    // db = a^T @ g.
                    let at = transpose(&a.data(), m, k);
                    accumulate(b, |db| matmul_into(db, &at, g, k, m, n));
                }
            }
            Op::AddBias(x, b) => {
                let (m, n) = x.dims2();
                if x.inner.requires_grad {
                    accumulate(x, |dx| add_assign(dx, g));
                }
                if b.inner.requires_grad {
                    accumulate(b, |db| {
                        for i in 0..m {
                            for j in 0..n {
                                db[j] += g[i * n + j];
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                for t in [a, b] {
                    if t.inner.requires_grad {
                        accumulate(t, |dt| add_assign(dt, g));
                    }
                }
            }
            Op::Sub(a, b) => {
                if a.inner.requires_grad {
                    accumulate(a, |da| add_assign(da, g));
                }
                if b.inner.requires_grad {
                    accumulate(b, |db| {
                        for (d, &gv) in db.iter_mut().zip(g) {
                            *d -= gv;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                if a.inner.requires_grad {
                    let bd = b.data();
                    accumulate(a, |da| {
                        for ((d, &gv), &bv) in da.iter_mut().zip(g).zip(bd.iter()) {
                            *d += gv * bv;
                        }
                    });
                }
                if b.inner.requires_grad {
                    let ad = a.data();
                    accumulate(b, |db| {
                        for ((d, &gv), &av) in db.iter_mut().zip(g).zip(ad.iter()) {
                            *d += gv * av;
                        }
                    });
                }
            }
            Op::Affine(x, mul) => {
                if x.inner.requires_grad {
                    accumulate(x, |dx| {
                        for (d, &gv) in dx.iter_mut().zip(g) {
                            *d += mul * gv;
                        }
                    });
                }
            }
            Op::Relu(x) => grad_mask(x, g, |xv| if xv > 0.0 { 1.0 } else { 0.0 }),
            Op::LeakyRelu(x, slope) => {
                let slope = *slope;
                grad_mask(x, g, move |xv| if xv > 0.0 { 1.0 } else { slope })
            }
            Op::Sigmoid(x) => {
                if x.inner.requires_grad {
                    let y: Vec<f64> = x.data().iter().map(|&v| sigmoid(v)).collect();
                    accumulate(x, |dx| {
                        for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y.iter()) {
                            *d += gv * yv * (1.0 - yv);
                        }
                    });
                }
            }
            Op::Log(x) => {
                if x.inner.requires_grad {
                    let xd = x.data();
                    accumulate(x, |dx| {
                        for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(xd.iter()) {
                            *d += gv / xv;
                        }
                    });
                }
            }
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                grad_mask(x, g, move |xv| if xv > lo && xv < hi { 1.0 } else { 0.0 })
            }
            Op::MeanAll(x) => {
                if x.inner.requires_grad {
                    let gv = g[0] / x.len() as f64;
                    accumulate(x, |dx| {
                        for d in dx.iter_mut() {
                            *d += gv;
                        }
                    });
                }
            }
            Op::MeanRows(x) => {
                if x.inner.requires_grad {
                    let (m, n) = x.dims2();
                    accumulate(x, |dx| {
                        for i in 0..m {
                            let gv = g[i] / n as f64;
                            for d in dx[i * n..(i + 1) * n].iter_mut() {
                                *d += gv;
                            }
                        }
                    });
                }
            }
            Op::AddCol(x, v) | Op::SubCol(x, v) => {
                let sign = if matches!(self, Op::AddCol(..)) { 1.0 } else { -1.0 };
                let (m, n) = x.dims2();
                if x.inner.requires_grad {
                    accumulate(x, |dx| add_assign(dx, g));
                }
                if v.inner.requires_grad {
                    accumulate(v, |dv| {
                        for i in 0..m {
                            dv[i] += sign * g[i * n..(i + 1) * n].iter().sum::<f64>();
                        }
                    });
                }
            }
            Op::GatherCols(x, idx) => {
                if x.inner.requires_grad {
                    let (_, n) = x.dims2();
                    accumulate(x, |dx| {
                        for (i, &j) in idx.iter().enumerate() {
                            dx[i * n + j] += g[i];
                        }
                    });
                }
            }
        }
    }
}

/// Run `f` over the parent's gradient buffer, allocating zeros on first use.
fn accumulate(t: &Tensor, f: impl FnOnce(&mut [f64])) {
    let mut slot = t.inner.grad.borrow_mut();
    let buf = slot.get_or_insert_with(|| vec![0.0; t.len()]);
    f(buf);
}

fn grad_mask(x: &Tensor, g: &[f64], mask: impl Fn(f64) -> f64) {
    if x.inner.requires_grad {
        let xd = x.data();
        accumulate(x, |dx| {
            for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(xd.iter()) {
                *d += gv * mask(xv);
            }
        });
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `c += a[m,k] @ b[k,n]`, row-major, ikj order so the inner loop runs along
/// contiguous rows of `b` and `c`. Rows of `a` that are exactly zero are
/// skipped, which makes one-hot input batches cheap without changing the
/// result for finite weights.
pub(crate) fn matmul_into(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

pub(crate) fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
