//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! Every op executes eagerly when recorded, so forward values are available
//! immediately; [`Tape::backward`] then walks the record once in reverse
//! order and accumulates parameter gradients into the owning [`ParamSet`].
//! A tape belongs to exactly one forward pass — build a fresh one per
//! sample.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamSet};
use crate::real::Real;
use crate::tensor::Tensor;

/// Floor added to the picked probability inside the negative
/// log-likelihood, keeping the loss finite when a probability underflows.
pub const NLL_EPSILON: f64 = 1e-12;

/// Handle to one recorded value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    /// Input or captured constant; no gradient is propagated.
    Const,
    /// Leaf bound to a parameter; the backward sweep deposits its gradient
    /// into the parameter's accumulator.
    Param(ParamId),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    MatMul(usize, usize),
    MatVec(usize, usize),
    VecMat(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    Concat(Vec<usize>),
    Sum(usize),
    Nll { probs: usize, class: usize },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
    bound: BTreeMap<ParamId, usize>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a recorded variable.
    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Const)
    }

    /// Binds a parameter's current value onto the tape. Repeated binds of
    /// the same parameter return the same variable, so every use shares one
    /// gradient accumulator.
    pub fn param(&mut self, params: &ParamSet<F>, id: ParamId) -> Var {
        if let Some(&idx) = self.bound.get(&id) {
            return Var(idx);
        }
        let v = self.push(params.value(id).clone(), Op::Param(id));
        self.bound.insert(id, v.0);
        v
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    /// Elementwise (Hadamard) product; shapes must match exactly.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va, vb));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a.0, b.0)))
    }

    /// Multiplication by a fixed scalar constant.
    pub fn scale(&mut self, a: Var, k: F) -> Var {
        let value = self.nodes[a.0].value.map(|x| x * k);
        self.push(value, Op::Scale(a.0, k))
    }

    /// Matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0) {
            return Err(shape_err("matmul", va, vb));
        }
        let (m, k, n) = (va.dim(0), va.dim(1), vb.dim(1));
        let mut data = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = F::zero();
                for l in 0..k {
                    acc += va.data()[i * k + l] * vb.data()[l * n + j];
                }
                data[i * n + j] = acc;
            }
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    /// Matrix–vector product `[m,n] x [n] -> [m]`.
    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let (vm, vx) = (&self.nodes[m.0].value, &self.nodes[x.0].value);
        if vm.rank() != 2 || vx.rank() != 1 || vm.dim(1) != vx.dim(0) {
            return Err(shape_err("matvec", vm, vx));
        }
        let (rows, cols) = (vm.dim(0), vm.dim(1));
        let mut data = vec![F::zero(); rows];
        for i in 0..rows {
            let mut acc = F::zero();
            for j in 0..cols {
                acc += vm.data()[i * cols + j] * vx.data()[j];
            }
            data[i] = acc;
        }
        let value = Tensor::vector(data);
        Ok(self.push(value, Op::MatVec(m.0, x.0)))
    }

    /// Vector–matrix product `[m] x [m,n] -> [n]`: the weighted sum of the
    /// matrix rows with the vector entries as weights.
    pub fn vecmat(&mut self, x: Var, m: Var) -> Result<Var> {
        let (vx, vm) = (&self.nodes[x.0].value, &self.nodes[m.0].value);
        if vx.rank() != 1 || vm.rank() != 2 || vx.dim(0) != vm.dim(0) {
            return Err(shape_err("vecmat", vx, vm));
        }
        let (rows, cols) = (vm.dim(0), vm.dim(1));
        let mut data = vec![F::zero(); cols];
        for j in 0..cols {
            let mut acc = F::zero();
            for i in 0..rows {
                acc += vx.data()[i] * vm.data()[i * cols + j];
            }
            data[j] = acc;
        }
        let value = Tensor::vector(data);
        Ok(self.push(value, Op::VecMat(x.0, m.0)))
    }

    /// Elementwise logistic function. Evaluated branch-wise so the exponent
    /// argument never overflows; the result saturates cleanly at 0 and 1.
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(sigmoid_scalar);
        self.push(value, Op::Sigmoid(a.0))
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|x| x.tanh());
        self.push(value, Op::Tanh(a.0))
    }

    /// Softmax over a rank-1 tensor, computed with max-subtraction for
    /// stability. Outputs are positive and sum to 1.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        if va.rank() != 1 {
            return Err(Error::Data(alloc::format!(
                "softmax expects a rank-1 tensor, got shape {:?}",
                va.shape()
            )));
        }
        let mut max = va.data()[0];
        for &x in &va.data()[1..] {
            if x > max {
                max = x;
            }
        }
        let mut data: Vec<F> = va.data().iter().map(|&x| (x - max).exp()).collect();
        let mut sum = F::zero();
        for &e in &data {
            sum += e;
        }
        for e in &mut data {
            *e = *e / sum;
        }
        Ok(self.push(Tensor::vector(data), Op::Softmax(a.0)))
    }

    /// Concatenation of rank-1 tensors in argument order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Data("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let vp = &self.nodes[p.0].value;
            if vp.rank() != 1 {
                return Err(Error::Data(alloc::format!(
                    "concat expects rank-1 tensors, got shape {:?}",
                    vp.shape()
                )));
            }
            data.extend_from_slice(vp.data());
        }
        let op = Op::Concat(parts.iter().map(|p| p.0).collect());
        Ok(self.push(Tensor::vector(data), op))
    }

    /// Sum of all elements, yielding a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = F::zero();
        for &x in self.nodes[a.0].value.data() {
            acc += x;
        }
        self.push(Tensor::scalar(acc), Op::Sum(a.0))
    }

    /// Negative log-likelihood `-ln(probs[class] + eps)` of one class under
    /// a probability vector.
    pub fn nll(&mut self, probs: Var, class: usize) -> Result<Var> {
        let vp = &self.nodes[probs.0].value;
        if vp.rank() != 1 {
            return Err(Error::Data(alloc::format!(
                "nll expects a rank-1 probability vector, got shape {:?}",
                vp.shape()
            )));
        }
        if class >= vp.dim(0) {
            return Err(Error::Data(alloc::format!(
                "class index {class} out of range for {} classes",
                vp.dim(0)
            )));
        }
        let p = vp.data()[class] + F::of(NLL_EPSILON);
        let value = Tensor::scalar(-p.ln());
        Ok(self.push(value, Op::Nll { probs: probs.0, class }))
    }

    /// Runs the reverse sweep from a scalar root and adds each parameter's
    /// gradient contribution into `params`. Gradients of constants are
    /// discarded. May be called once per tape; the tape is consumed.
    pub fn backward(self, root: Var, params: &mut ParamSet<F>) -> Result<()> {
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Data(alloc::format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(F::one()));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(id) => params.accumulate_grad(*id, &g),
                Op::Add(a, b) => {
                    add_into(&mut grads[*a], g.clone());
                    add_into(&mut grads[*b], g);
                }
                Op::Mul(a, b) => {
                    let da = elementwise(&g, &self.nodes[*b].value, |x, y| x * y);
                    let db = elementwise(&g, &self.nodes[*a].value, |x, y| x * y);
                    add_into(&mut grads[*a], da);
                    add_into(&mut grads[*b], db);
                }
                Op::Scale(a, k) => {
                    add_into(&mut grads[*a], g.map(|x| x * *k));
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k, n) = (va.dim(0), va.dim(1), vb.dim(1));
                    let mut da = vec![F::zero(); m * k];
                    for i in 0..m {
                        for j in 0..k {
                            let mut acc = F::zero();
                            for l in 0..n {
                                acc += g.data()[i * n + l] * vb.data()[j * n + l];
                            }
                            da[i * k + j] = acc;
                        }
                    }
                    let mut db = vec![F::zero(); k * n];
                    for j in 0..k {
                        for l in 0..n {
                            let mut acc = F::zero();
                            for i in 0..m {
                                acc += va.data()[i * k + j] * g.data()[i * n + l];
                            }
                            db[j * n + l] = acc;
                        }
                    }
                    add_into(&mut grads[*a], Tensor::new(vec![m, k], da)?);
                    add_into(&mut grads[*b], Tensor::new(vec![k, n], db)?);
                }
                Op::MatVec(m, x) => {
                    let (vm, vx) = (&self.nodes[*m].value, &self.nodes[*x].value);
                    let (rows, cols) = (vm.dim(0), vm.dim(1));
                    let mut dm = vec![F::zero(); rows * cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            dm[i * cols + j] = g.data()[i] * vx.data()[j];
                        }
                    }
                    let mut dx = vec![F::zero(); cols];
                    for j in 0..cols {
                        let mut acc = F::zero();
                        for i in 0..rows {
                            acc += vm.data()[i * cols + j] * g.data()[i];
                        }
                        dx[j] = acc;
                    }
                    add_into(&mut grads[*m], Tensor::new(vec![rows, cols], dm)?);
                    add_into(&mut grads[*x], Tensor::vector(dx));
                }
                Op::VecMat(x, m) => {
                    let (vx, vm) = (&self.nodes[*x].value, &self.nodes[*m].value);
                    let (rows, cols) = (vm.dim(0), vm.dim(1));
                    let mut dx = vec![F::zero(); rows];
                    for i in 0..rows {
                        let mut acc = F::zero();
                        for j in 0..cols {
                            acc += vm.data()[i * cols + j] * g.data()[j];
                        }
                        dx[i] = acc;
                    }
                    let mut dm = vec![F::zero(); rows * cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            dm[i * cols + j] = vx.data()[i] * g.data()[j];
                        }
                    }
                    add_into(&mut grads[*x], Tensor::vector(dx));
                    add_into(&mut grads[*m], Tensor::new(vec![rows, cols], dm)?);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let da = elementwise(&g, y, |gi, yi| gi * yi * (F::one() - yi));
                    add_into(&mut grads[*a], da);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let da = elementwise(&g, y, |gi, yi| gi * (F::one() - yi * yi));
                    add_into(&mut grads[*a], da);
                }
                Op::Softmax(a) => {
                    let y = &self.nodes[i].value;
                    let mut dot = F::zero();
                    for (gi, yi) in g.data().iter().zip(y.data()) {
                        dot += *gi * *yi;
                    }
                    let da = elementwise(&g, y, |gi, yi| yi * (gi - dot));
                    add_into(&mut grads[*a], da);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.numel();
                        let slice = g.data()[offset..offset + len].to_vec();
                        add_into(&mut grads[p], Tensor::vector(slice));
                        offset += len;
                    }
                }
                Op::Sum(a) => {
                    let gs = g.scalar_value();
                    let shape = self.nodes[*a].value.shape().to_vec();
                    add_into(&mut grads[*a], Tensor::full(shape, gs));
                }
                Op::Nll { probs, class } => {
                    let vp = &self.nodes[*probs].value;
                    let mut dp = Tensor::zeros(vp.shape().to_vec());
                    let p = vp.data()[*class] + F::of(NLL_EPSILON);
                    dp.data_mut()[*class] = -g.scalar_value() / p;
                    add_into(&mut grads[*probs], dp);
                }
            }
        }
        Ok(())
    }
}

fn sigmoid_scalar<F: Real>(x: F) -> F {
    // Branching on the sign keeps the exponent argument non-positive, so
    // exp never overflows in either precision.
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn shape_err<F: Real>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn elementwise<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    debug_assert_eq!(a.numel(), b.numel());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes verified by caller")
}

/// Adds `delta` into an optional gradient slot, initializing it on first
/// touch. Keeping untouched slots as `None` skips dead subgraphs entirely.
fn add_into<F: Real>(slot: &mut Option<Tensor<F>>, delta: Tensor<F>) {
    match slot {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(delta.data()) {
                *a += *b;
            }
        }
        None => *slot = Some(delta),
    }
}
