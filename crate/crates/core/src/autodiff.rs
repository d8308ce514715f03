//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as it executes. Nodes are appended in
//! execution order, so walking the node list backwards is a valid reverse
//! topological order for [`Graph::backward`].

use crate::error::{Error, Result};
use crate::tensor::{self, axis_split, ensure_same_shape, Conv2dGeometry, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    AddBias { x: Var, bias: Var, axis: usize },
    MatMul(Var, Var),
    Conv2d { input: Var, kernel: Var, geom: Conv2dGeometry },
    Sum(Var),
    SumAxis { x: Var, axis: usize },
    MaxAxis { x: Var, argmax: Vec<usize> },
    MaxPool { x: Var, argmax: Vec<usize> },
    Log(Var),
    Exp(Var),
    Relu(Var),
    PRelu { x: Var, slope: Var, axis: usize },
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Concat { xs: Vec<Var>, axis: usize },
    /// Scalar node whose gradient with respect to `input` was computed
    /// during the forward pass.
    Precomputed { input: Var, grad: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let v = self.value(a).zip_map(&c, "mul_const", |x, y| x * y)?;
        Ok(self.push(v, Op::MulConst(a, c), &[a]))
    }

    /// Adds a 1-D `bias` broadcast along `axis` of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x);
        if axis >= xs.len() || self.shape(bias) != [xs[axis]] {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} does not match axis {axis} of {:?}", self.shape(bias), xs),
            ));
        }
        let (outer, n, inner) = axis_split(xs, axis);
        let b = self.value(bias).data();
        let mut v = self.value(x).clone();
        let data = v.data_mut();
        for o in 0..outer {
            for (a, &bv) in b.iter().enumerate().take(n) {
                let start = (o * n + a) * inner;
                data[start..start + inner].iter_mut().for_each(|e| *e += bv);
            }
        }
        Ok(self.push(v, Op::AddBias { x, bias, axis }, &[x, bias]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, geom: Conv2dGeometry) -> Result<Var> {
        let v = tensor::conv2d(self.value(input), self.value(kernel), geom)?;
        Ok(self.push(v, Op::Conv2d { input, kernel, geom }, &[input, kernel]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.checked_axis("sum_axis", x, axis)?;
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..n {
                for i in 0..inner {
                    out[o * inner + i] += src[(o * n + a) * inner + i];
                }
            }
        }
        let mut oshape = shape.clone();
        oshape.remove(axis);
        let v = Tensor::new(&oshape, out)?;
        Ok(self.push(v, Op::SumAxis { x, axis }, &[x]))
    }

    /// Maximum along `axis`; ties resolve to the lowest index.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.checked_axis("max_axis", x, axis)?;
        let (outer, n, inner) = axis_split(&shape, axis);
        if n == 0 {
            return Err(Error::shape("max_axis", "cannot reduce an empty axis"));
        }
        let src = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                for a in 0..n {
                    let idx = (o * n + a) * inner + i;
                    if src[idx] > out[o * inner + i] {
                        out[o * inner + i] = src[idx];
                        argmax[o * inner + i] = idx;
                    }
                }
            }
        }
        let mut oshape = shape.clone();
        oshape.remove(axis);
        let v = Tensor::new(&oshape, out)?;
        Ok(self.push(v, Op::MaxAxis { x, argmax }, &[x]))
    }

    /// Max over non-overlapping windows of `width` along `axis`; a ragged
    /// tail shorter than `width` is dropped.
    pub fn max_pool(&mut self, x: Var, axis: usize, width: usize) -> Result<Var> {
        let shape = self.checked_axis("max_pool", x, axis)?;
        if width == 0 {
            return Err(Error::geometry("max_pool", "pool width must be at least 1"));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let pooled = n / width;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * pooled * inner);
        let mut argmax = Vec::with_capacity(outer * pooled * inner);
        for o in 0..outer {
            for p in 0..pooled {
                for i in 0..inner {
                    let mut best = (o * n + p * width) * inner + i;
                    for a in 1..width {
                        let idx = (o * n + p * width + a) * inner + i;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let mut oshape = shape;
        oshape[axis] = pooled;
        let v = Tensor::new(&oshape, out)?;
        Ok(self.push(v, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::ln);
        self.push(v, Op::Log(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.max(0.0));
        self.push(v, Op::Relu(x), &[x])
    }

    /// `v` for positive entries, `slope[c]·v` otherwise, where `c` is the
    /// index along `axis`.
    pub fn prelu(&mut self, x: Var, slope: Var, axis: usize) -> Result<Var> {
        let shape = self.checked_axis("prelu", x, axis)?;
        if self.shape(slope) != [shape[axis]] {
            return Err(Error::shape(
                "prelu",
                format!("{} slopes for {} channels", self.value(slope).len(), shape[axis]),
            ));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let a = self.value(slope).data().to_vec();
        let mut v = self.value(x).clone();
        let data = v.data_mut();
        for o in 0..outer {
            for (c, &ac) in a.iter().enumerate() {
                let start = (o * n + c) * inner;
                for e in &mut data[start..start + inner] {
                    if *e <= 0.0 {
                        *e *= ac;
                    }
                }
            }
        }
        Ok(self.push(v, Op::PRelu { x, slope, axis }, &[x, slope]))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.checked_axis("softmax", x, axis)?;
        let v = softmax_along(self.value(x), &shape, axis, false);
        Ok(self.push(v, Op::Softmax { x, axis }, &[x]))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.checked_axis("log_softmax", x, axis)?;
        let v = softmax_along(self.value(x), &shape, axis, true);
        Ok(self.push(v, Op::LogSoftmax { x, axis }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let v = permute_tensor(self.value(x), perm)?;
        Ok(self.push(v, Op::Permute { x, perm: perm.to_vec() }, &[x]))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.checked_axis("concat", *first, axis)?;
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let n = self.shape(v)[axis];
                out.extend_from_slice(&self.value(v).data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut oshape = base;
        oshape[axis] = total;
        let v = Tensor::new(&oshape, out)?;
        Ok(self.push(v, Op::Concat { xs: xs.to_vec(), axis }, xs))
    }

    /// Records a scalar whose gradient with respect to `input` is already
    /// known (losses that carry their own backward pass, such as CTC).
    pub fn precomputed(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        ensure_same_shape("precomputed", self.value(input), &grad)?;
        Ok(self.push(Tensor::scalar(value), Op::Precomputed { input, grad }, &[input]))
    }

    fn checked_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<Vec<usize>> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(op, format!("axis {axis} out of range for {shape:?}")));
        }
        Ok(shape)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, contrib: Tensor| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|e| -e));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    acc(*a, g.zip_map(vb, "mul", |x, y| x * y)?);
                }
                if self.wants(*b) {
                    acc(*b, g.zip_map(va, "mul", |x, y| x * y)?);
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|e| e * s)),
            Op::MulConst(a, c) => acc(*a, g.zip_map(c, "mul_const", |x, y| x * y)?),
            Op::AddBias { x, bias, axis } => {
                acc(*x, g.clone());
                if self.wants(*bias) {
                    let (outer, n, inner) = axis_split(g.shape(), *axis);
                    let mut gb = vec![0.0; n];
                    for o in 0..outer {
                        for (c, slot) in gb.iter_mut().enumerate() {
                            let start = (o * n + c) * inner;
                            *slot += g.data()[start..start + inner].iter().sum::<f64>();
                        }
                    }
                    acc(*bias, Tensor::new(&[n], gb)?);
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    tensor::gemm_nt_acc(g.data(), vb.data(), &mut ga, m, n, k);
                    acc(*a, Tensor::new(&[m, k], ga)?);
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    tensor::gemm_tn_acc(va.data(), g.data(), &mut gb, k, m, n);
                    acc(*b, Tensor::new(&[k, n], gb)?);
                }
            }
            Op::Conv2d { input, kernel, geom } => {
                let (gi, gk) = tensor::conv2d_backward(
                    self.value(*input),
                    self.value(*kernel),
                    *geom,
                    g,
                    self.wants(*input),
                    self.wants(*kernel),
                )?;
                if let Some(gi) = gi {
                    acc(*input, gi);
                }
                if let Some(gk) = gk {
                    acc(*kernel, gk);
                }
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                acc(*x, Tensor::full(self.shape(*x), gv));
            }
            Op::SumAxis { x, axis } => {
                let shape = self.shape(*x);
                let (outer, n, inner) = axis_split(shape, *axis);
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for a in 0..n {
                        for i in 0..inner {
                            gx[(o * n + a) * inner + i] = g.data()[o * inner + i];
                        }
                    }
                }
                acc(*x, Tensor::new(shape, gx)?);
            }
            Op::MaxAxis { x, argmax, .. } | Op::MaxPool { x, argmax } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    gx.data_mut()[src] += gv;
                }
                acc(*x, gx);
            }
            Op::Log(x) => acc(*x, g.zip_map(self.value(*x), "log", |gv, v| gv / v)?),
            Op::Exp(x) => acc(*x, g.zip_map(out, "exp", |gv, y| gv * y)?),
            Op::Relu(x) => {
                acc(*x, g.zip_map(self.value(*x), "relu", |gv, v| if v > 0.0 { gv } else { 0.0 })?)
            }
            Op::PRelu { x, slope, axis } => {
                let vx = self.value(*x);
                let a = self.value(*slope).data();
                let (outer, n, inner) = axis_split(vx.shape(), *axis);
                let mut gx = g.clone();
                let mut ga = vec![0.0; n];
                for o in 0..outer {
                    for c in 0..n {
                        let start = (o * n + c) * inner;
                        for i in start..start + inner {
                            let v = vx.data()[i];
                            if v <= 0.0 {
                                ga[c] += g.data()[i] * v;
                                gx.data_mut()[i] *= a[c];
                            }
                        }
                    }
                }
                acc(*x, gx);
                if self.wants(*slope) {
                    acc(*slope, Tensor::new(&[n], ga)?);
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = axis_split(out.shape(), *axis);
                let mut gx = vec![0.0; out.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * n + a) * inner + i;
                        let dot: f64 = (0..n).map(|a| g.data()[at(a)] * out.data()[at(a)]).sum();
                        for a in 0..n {
                            gx[at(a)] = out.data()[at(a)] * (g.data()[at(a)] - dot);
                        }
                    }
                }
                acc(*x, Tensor::new(out.shape(), gx)?);
            }
            Op::LogSoftmax { x, axis } => {
                let (outer, n, inner) = axis_split(out.shape(), *axis);
                let mut gx = vec![0.0; out.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * n + a) * inner + i;
                        let gsum: f64 = (0..n).map(|a| g.data()[at(a)]).sum();
                        for a in 0..n {
                            gx[at(a)] = g.data()[at(a)] - out.data()[at(a)].exp() * gsum;
                        }
                    }
                }
                acc(*x, Tensor::new(out.shape(), gx)?);
            }
            Op::Reshape(x) => acc(*x, g.reshape(self.shape(*x))?),
            Op::Permute { x, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                acc(*x, permute_tensor(g, &inverse)?);
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = axis_split(g.shape(), *axis);
                let mut offset = 0;
                for &v in xs {
                    let shape = self.shape(v);
                    let n = shape[*axis];
                    let mut part = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        part.extend_from_slice(&g.data()[start..start + n * inner]);
                    }
                    offset += n;
                    acc(v, Tensor::new(shape, part)?);
                }
            }
            Op::Precomputed { input, grad } => {
                let s = g.data()[0];
                acc(*input, grad.map(|e| e * s));
            }
        }
        Ok(())
    }
}

fn softmax_along(x: &Tensor, shape: &[usize], axis: usize, log: bool) -> Tensor {
    let (outer, n, inner) = axis_split(shape, axis);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * n + a) * inner + i;
            let m = (0..n).map(|a| src[at(a)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..n).map(|a| (src[at(a)] - m).exp()).sum();
            let lz = z.ln();
            for a in 0..n {
                out[at(a)] = if log { src[at(a)] - m - lz } else { (src[at(a)] - m).exp() / z };
            }
        }
    }
    Tensor::new(shape, out).expect("softmax preserves shape")
}

pub fn permute_tensor(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let shape = x.shape();
    let mut seen = vec![false; shape.len()];
    if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::shape("permute", format!("{perm:?} is not a permutation of {} axes", shape.len())));
    }
    let oshape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut in_strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0; oshape.len()];
    for _ in 0..x.len() {
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(x.data()[off]);
        for d in (0..oshape.len()).rev() {
            idx[d] += 1;
            if idx[d] < oshape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(&oshape, out)
}
