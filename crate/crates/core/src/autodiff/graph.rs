//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node whose
//! index is its topological position. [`Graph::backward`] walks the tape in
//! reverse, so no explicit topological sort is needed.

use std::collections::HashMap;

use super::tensor::{ParameterSet, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, row: Var },
    Scale { a: Var, c: T },
    Shift(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, inv_std: Vec<T> },
    ConcatCols(Vec<Var>),
    SliceCols { a: Var, start: usize },
    ConcatRows(Vec<Var>),
    GatherRows { a: Var, idx: Vec<usize> },
    ScaleRows { a: Var, w: Vec<T> },
    Reshape(Var),
    Im2Col1d { a: Var, k: usize, stride: usize, pad: usize },
    Im2Col2d { a: Var, kh: usize, kw: usize },
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<String, Var>,
}

fn check(cond: bool, op: &'static str, detail: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::contract(op, detail()))
    }
}

fn add_into<T: Real>(slot: &mut Option<Vec<T>>, n: usize) -> &mut Vec<T> {
    slot.get_or_insert_with(|| vec![T::zero(); n])
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
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

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Untracked leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Tracked leaf that is not a parameter (used for input gradients).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a named parameter. Each parameter appears once per tape.
    pub fn param(&mut self, params: &ParameterSet<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let p = params
            .param(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        let mut value = p.value.clone();
        value.set_grad(None);
        let v = self.push(value, Op::Leaf, !p.frozen);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    // ---- forward operations ------------------------------------------------

    /// `op(a) · op(b)`, with optional transposition of either operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (ar, ac) = self.dims2(a);
        let (br, bc) = self.dims2(b);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        check(k == k2, "matmul", || {
            format!("inner dimensions differ: {m}x{k} · {k2}x{n}")
        })?;
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            ta,
            self.value(b).data(),
            tb,
            T::zero(),
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul { a, b, ta, tb }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        check(
            self.value(a).numel() == self.value(b).numel() && sa[0] == sb[0],
            op,
            || format!("shapes differ: {sa:?} vs {sb:?}"),
        )
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape(), data).expect("shape preserved")
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let va = self.value(a);
        Tensor::new(va.shape(), va.data().iter().map(|&x| f(x)).collect()).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// Adds a `[1, d]` (or `[d]`) row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, d) = self.dims2(x);
        check(self.value(row).numel() == d, "add_row", || {
            format!("row of {} values for {n}x{d} input", self.value(row).numel())
        })?;
        let r = self.value(row).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for chunk in out.chunks_mut(d) {
            for (o, &b) in chunk.iter_mut().zip(&r) {
                *o += b;
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::new(&shape, out)?, Op::AddRow { x, row }, rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let t = self.map(a, |x| x * c);
        let rg = self.rg(a);
        self.push(t, Op::Scale { a, c }, rg)
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let t = self.map(a, |x| x + c);
        let rg = self.rg(a);
        self.push(t, Op::Shift(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| T::one() / (T::one() + (-x).exp()));
        let rg = self.rg(a);
        self.push(t, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.tanh());
        let rg = self.rg(a);
        self.push(t, Op::Tanh(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.exp());
        let rg = self.rg(a);
        self.push(t, Op::Exp(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (_, d) = self.dims2(a);
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(d) {
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let mut sum = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x = *x / sum;
            }
        }
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out).expect("shape"), Op::SoftmaxRows(a), rg)
    }

    /// Row-wise layer normalization with learned gain and bias (each `d` values).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (n, d) = self.dims2(x);
        check(
            self.value(gain).numel() == d && self.value(bias).numel() == d,
            "layer_norm",
            || format!("gain/bias length must be {d}"),
        )?;
        let eps = T::from_f64(eps);
        let df = T::from_f64(d as f64);
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![T::zero(); n * d];
        let mut inv_std = vec![T::zero(); n];
        let mut out = vec![T::zero(); n * d];
        for r in 0..n {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / df;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..d {
                let h = (row[c] - mean) * inv;
                xhat[r * d + c] = h;
                out[r * d + c] = g[c] * h + b[c];
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        check(!parts.is_empty(), "concat_cols", || "no inputs".into())?;
        let n = self.dims2(parts[0]).0;
        check(
            parts.iter().all(|&p| self.dims2(p).0 == n),
            "concat_cols",
            || {
                let rows: Vec<_> = parts.iter().map(|&p| self.dims2(p).0).collect();
                format!("row counts differ: {rows:?}")
            },
        )?;
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims2(p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(&[n, total], out)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (n, d) = self.dims2(a);
        check(start < end && end <= d, "slice_cols", || {
            format!("range {start}..{end} outside {d} columns")
        })?;
        let w = end - start;
        let mut out = Vec::with_capacity(n * w);
        for r in 0..n {
            out.extend_from_slice(&self.value(a).row(r)[start..end]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(&[n, w], out)?, Op::SliceCols { a, start }, rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        check(!parts.is_empty(), "concat_rows", || "no inputs".into())?;
        let d = self.dims2(parts[0]).1;
        check(
            parts.iter().all(|&p| self.dims2(p).1 == d),
            "concat_rows",
            || "column counts differ".into(),
        )?;
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
            n += self.dims2(p).0;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(&[n, d], out)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// Output row `i` is input row `idx[i]`; gradients scatter-add back.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, d) = self.dims2(a);
        check(!idx.is_empty(), "gather_rows", || "empty index list".into())?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::contract(
                "gather_rows",
                format!("row {bad} outside {n} rows"),
            ));
        }
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(self.value(a).row(i));
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(&[idx.len(), d], out)?,
            Op::GatherRows {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Multiplies row `i` by the constant `w[i]`.
    pub fn scale_rows(&mut self, a: Var, w: &[f64]) -> Result<Var> {
        let (n, d) = self.dims2(a);
        check(w.len() == n, "scale_rows", || {
            format!("{} weights for {n} rows", w.len())
        })?;
        let w: Vec<T> = w.iter().map(|&x| T::from_f64(x)).collect();
        let mut out = self.value(a).data().to_vec();
        for (row, &s) in out.chunks_mut(d).zip(&w) {
            for x in row {
                *x = *x * s;
            }
        }
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(&shape, out)?, Op::ScaleRows { a, w }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Unfolds `[t, d]` into `[t', k·d]` patches; column `j·d + c` of output
    /// row `r` holds input `[r·stride + j − pad, c]` (zero outside the input).
    pub fn im2col_1d(&mut self, a: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let (t, d) = self.dims2(a);
        check(stride >= 1, "conv1d", || "stride must be ≥ 1".into())?;
        check(k >= 1 && k <= t + 2 * pad, "conv1d", || {
            format!("kernel {k} longer than padded input {}", t + 2 * pad)
        })?;
        let t_out = (t + 2 * pad - k) / stride + 1;
        let x = self.value(a).data();
        let mut out = vec![T::zero(); t_out * k * d];
        for r in 0..t_out {
            for j in 0..k {
                let src = (r * stride + j) as isize - pad as isize;
                if src < 0 || src as usize >= t {
                    continue;
                }
                let s = src as usize;
                out[(r * k + j) * d..(r * k + j + 1) * d].copy_from_slice(&x[s * d..(s + 1) * d]);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(&[t_out, k * d], out)?,
            Op::Im2Col1d { a, k, stride, pad },
            rg,
        ))
    }

    /// Unfolds a `[h, w, c]` feature map into `[h·w, kh·kw·c]` patches with
    /// stride 1 and same padding.
    pub fn im2col_2d(&mut self, a: Var, kh: usize, kw: usize) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        check(shape.len() == 3, "conv2d", || {
            format!("expected [h, w, c] input, got {shape:?}")
        })?;
        check(kh % 2 == 1 && kw % 2 == 1, "conv2d", || {
            "same padding needs odd kernel extents".into()
        })?;
        let (h, w, c) = (shape[0], shape[1], shape[2]);
        let (ph, pw) = (kh / 2, kw / 2);
        let x = self.value(a).data();
        let cols = kh * kw * c;
        let mut out = vec![T::zero(); h * w * cols];
        for i in 0..h {
            for j in 0..w {
                let base = (i * w + j) * cols;
                for di in 0..kh {
                    let si = i as isize + di as isize - ph as isize;
                    if si < 0 || si as usize >= h {
                        continue;
                    }
                    for dj in 0..kw {
                        let sj = j as isize + dj as isize - pw as isize;
                        if sj < 0 || sj as usize >= w {
                            continue;
                        }
                        let src = (si as usize * w + sj as usize) * c;
                        let dst = base + (di * kw + dj) * c;
                        out[dst..dst + c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(&[h * w, cols], out)?,
            Op::Im2Col2d { a, kh, kw },
            rg,
        ))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        check(sa == sb, "mse_loss", || {
            format!("prediction {sa:?} vs target {sb:?}")
        })?;
        let n = T::from_f64(self.value(a).numel() as f64);
        let s: T = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_f64(self.value(a).numel() as f64);
        let s: T = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s / n), Op::Mean(a), rg)
    }

    // ---- reverse pass -----------------------------------------------------

    /// Computes d(loss)/d(node) for every tracked node on the tape.
    /// Gradients from a previous call are discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        check(self.value(loss).numel() == 1, "backward", || {
            format!("loss must be scalar, got shape {shape:?}")
        })?;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Adds tape gradients into the `grad` slots of the bound parameters.
    /// Frozen parameters are left untouched.
    pub fn accumulate_param_grads(&self, params: &mut ParameterSet<T>) {
        for (name, &v) in &self.params {
            let Some(p) = params.param_mut(name) else {
                continue;
            };
            if p.frozen {
                continue;
            }
            let n = p.value.numel();
            if p.value.grad().is_none() {
                p.value.set_grad(Some(vec![T::zero(); n]));
            }
            if let (Some(dst), Some(src)) = (p.value.grad_mut(), self.grad(v)) {
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        // Split borrows: nodes are read-only here, grads are written.
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let out = &node.value;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let numel = |v: Var| nodes[v.0].value.numel();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let m = out.rows();
                let n = out.cols();
                let k = if ta { va.rows() } else { va.cols() };
                if rg(a) {
                    let ga = add_into(&mut grads[a.0], va.numel());
                    if !ta {
                        T::gemm(m, n, k, T::one(), g, false, vb.data(), !tb, T::one(), ga);
                    } else {
                        T::gemm(k, n, m, T::one(), vb.data(), tb, g, true, T::one(), ga);
                    }
                }
                if rg(b) {
                    let gb = add_into(&mut grads[b.0], vb.numel());
                    if !tb {
                        T::gemm(k, m, n, T::one(), va.data(), !ta, g, false, T::one(), gb);
                    } else {
                        T::gemm(n, m, k, T::one(), g, true, va.data(), ta, T::one(), gb);
                    }
                }
            }
            &Op::Add(a, b) => {
                for (v, sign) in [(a, T::one()), (b, T::one())] {
                    if rg(v) {
                        let gv = add_into(&mut grads[v.0], g.len());
                        for (x, &y) in gv.iter_mut().zip(g) {
                            *x += sign * y;
                        }
                    }
                }
            }
            &Op::Sub(a, b) => {
                for (v, sign) in [(a, T::one()), (b, -T::one())] {
                    if rg(v) {
                        let gv = add_into(&mut grads[v.0], g.len());
                        for (x, &y) in gv.iter_mut().zip(g) {
                            *x += sign * y;
                        }
                    }
                }
            }
            &Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if rg(v) {
                        let o = nodes[other.0].value.data();
                        let gv = add_into(&mut grads[v.0], g.len());
                        for ((x, &y), &z) in gv.iter_mut().zip(g).zip(o) {
                            *x += y * z;
                        }
                    }
                }
            }
            &Op::AddRow { x, row } => {
                if rg(x) {
                    let gx = add_into(&mut grads[x.0], g.len());
                    for (a, &b) in gx.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                if rg(row) {
                    let d = numel(row);
                    let gr = add_into(&mut grads[row.0], d);
                    for chunk in g.chunks(d) {
                        for (a, &b) in gr.iter_mut().zip(chunk) {
                            *a += b;
                        }
                    }
                }
            }
            &Op::Scale { a, c } => {
                let ga = add_into(&mut grads[a.0], g.len());
                for (x, &y) in ga.iter_mut().zip(g) {
                    *x += c * y;
                }
            }
            &Op::Shift(a) => {
                let ga = add_into(&mut grads[a.0], g.len());
                for (x, &y) in ga.iter_mut().zip(g) {
                    *x += y;
                }
            }
            &Op::Relu(a) => {
                let ga = add_into(&mut grads[a.0], g.len());
                for ((x, &y), &o) in ga.iter_mut().zip(g).zip(out.data()) {
                    if o > T::zero() {
                        *x += y;
                    }
                }
            }
            &Op::Sigmoid(a) => {
                let ga = add_into(&mut grads[a.0], g.len());
                for ((x, &y), &o) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += y * o * (T::one() - o);
                }
            }
            &Op::Tanh(a) => {
                let ga = add_into(&mut grads[a.0], g.len());
                for ((x, &y), &o) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += y * (T::one() - o * o);
                }
            }
            &Op::Exp(a) => {
                let ga = add_into(&mut grads[a.0], g.len());
                for ((x, &y), &o) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += y * o;
                }
            }
            &Op::SoftmaxRows(a) => {
                let d = out.cols();
                let ga = add_into(&mut grads[a.0], g.len());
                for ((gx, gy), y) in ga.chunks_mut(d).zip(g.chunks(d)).zip(out.data().chunks(d)) {
                    let dot: T = gy.iter().zip(y).map(|(&u, &v)| u * v).sum();
                    for j in 0..d {
                        gx[j] += y[j] * (gy[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = out.cols();
                let df = T::from_f64(d as f64);
                let gvals = nodes[gain.0].value.data();
                if rg(*gain) {
                    let gg = add_into(&mut grads[gain.0], d);
                    for (gy, h) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += gy[j] * h[j];
                        }
                    }
                }
                if rg(*bias) {
                    let gb = add_into(&mut grads[bias.0], d);
                    for gy in g.chunks(d) {
                        for j in 0..d {
                            gb[j] += gy[j];
                        }
                    }
                }
                if rg(*x) {
                    let gx = add_into(&mut grads[x.0], g.len());
                    let mut dh = vec![T::zero(); d];
                    for (r, (gy, h)) in g.chunks(d).zip(xhat.chunks(d)).enumerate() {
                        for j in 0..d {
                            dh[j] = gy[j] * gvals[j];
                        }
                        let s1: T = dh.iter().copied().sum();
                        let s2: T = dh.iter().zip(h).map(|(&u, &v)| u * v).sum();
                        let k = inv_std[r] / df;
                        for j in 0..d {
                            gx[r * d + j] += k * (df * dh[j] - s1 - h[j] * s2);
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut off = 0;
                for &p in parts {
                    let w = nodes[p.0].value.cols();
                    if rg(p) {
                        let gp = add_into(&mut grads[p.0], numel(p));
                        for (r, row) in gp.chunks_mut(w).enumerate() {
                            let src = &g[r * total + off..r * total + off + w];
                            for (a, &b) in row.iter_mut().zip(src) {
                                *a += b;
                            }
                        }
                    }
                    off += w;
                }
            }
            &Op::SliceCols { a, start } => {
                let w = out.cols();
                let d = nodes[a.0].value.cols();
                let ga = add_into(&mut grads[a.0], numel(a));
                for (r, gy) in g.chunks(w).enumerate() {
                    for (a, &b) in ga[r * d + start..r * d + start + w].iter_mut().zip(gy) {
                        *a += b;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = numel(p);
                    if rg(p) {
                        let gp = add_into(&mut grads[p.0], n);
                        for (a, &b) in gp.iter_mut().zip(&g[off..off + n]) {
                            *a += b;
                        }
                    }
                    off += n;
                }
            }
            Op::GatherRows { a, idx } => {
                let d = out.cols();
                let ga = add_into(&mut grads[a.0], numel(*a));
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..d {
                        ga[src * d + j] += g[r * d + j];
                    }
                }
            }
            Op::ScaleRows { a, w } => {
                let d = out.cols();
                let ga = add_into(&mut grads[a.0], g.len());
                for ((gx, gy), &s) in ga.chunks_mut(d).zip(g.chunks(d)).zip(w) {
                    for (x, &y) in gx.iter_mut().zip(gy) {
                        *x += s * y;
                    }
                }
            }
            &Op::Reshape(a) => {
                let ga = add_into(&mut grads[a.0], g.len());
                for (x, &y) in ga.iter_mut().zip(g) {
                    *x += y;
                }
            }
            &Op::Im2Col1d { a, k, stride, pad } => {
                let va = &nodes[a.0].value;
                let (t, d) = (va.rows(), va.cols());
                let t_out = out.rows();
                let ga = add_into(&mut grads[a.0], t * d);
                for r in 0..t_out {
                    for j in 0..k {
                        let src = (r * stride + j) as isize - pad as isize;
                        if src < 0 || src as usize >= t {
                            continue;
                        }
                        let s = src as usize;
                        let gy = &g[(r * k + j) * d..(r * k + j + 1) * d];
                        for (x, &y) in ga[s * d..(s + 1) * d].iter_mut().zip(gy) {
                            *x += y;
                        }
                    }
                }
            }
            &Op::Im2Col2d { a, kh, kw } => {
                let shape = nodes[a.0].value.shape();
                let (h, w, c) = (shape[0], shape[1], shape[2]);
                let (ph, pw) = (kh / 2, kw / 2);
                let cols = kh * kw * c;
                let ga = add_into(&mut grads[a.0], h * w * c);
                for i in 0..h {
                    for j in 0..w {
                        let base = (i * w + j) * cols;
                        for di in 0..kh {
                            let si = i as isize + di as isize - ph as isize;
                            if si < 0 || si as usize >= h {
                                continue;
                            }
                            for dj in 0..kw {
                                let sj = j as isize + dj as isize - pw as isize;
                                if sj < 0 || sj as usize >= w {
                                    continue;
                                }
                                let dst = (si as usize * w + sj as usize) * c;
                                let src = base + (di * kw + dj) * c;
                                for q in 0..c {
                                    ga[dst + q] += g[src + q];
                                }
                            }
                        }
                    }
                }
            }
            &Op::Mse(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let k = g[0] * T::from_f64(2.0 / va.len() as f64);
                if rg(a) {
                    let ga = add_into(&mut grads[a.0], va.len());
                    for ((x, &p), &q) in ga.iter_mut().zip(va).zip(vb) {
                        *x += k * (p - q);
                    }
                }
                if rg(b) {
                    let gb = add_into(&mut grads[b.0], vb.len());
                    for ((x, &p), &q) in gb.iter_mut().zip(va).zip(vb) {
                        *x += k * (q - p);
                    }
                }
            }
            &Op::Sum(a) => {
                let n = numel(a);
                let ga = add_into(&mut grads[a.0], n);
                for x in ga.iter_mut() {
                    *x += g[0];
                }
            }
            &Op::Mean(a) => {
                let n = numel(a);
                let k = g[0] / T::from_f64(n as f64);
                let ga = add_into(&mut grads[a.0], n);
                for x in ga.iter_mut() {
                    *x += k;
                }
            }
        }
    }
}

/// Full backward step against a parameter set: resets every parameter's
/// gradient slot, runs the reverse pass and writes `∂loss/∂param` into the
/// unfrozen parameters. Frozen parameters end with no gradient.
pub fn backward<T: Real>(graph: &mut Graph<T>, loss: Var, params: &mut ParameterSet<T>) -> Result<()> {
    params.zero_grads();
    graph.backward(loss)?;
    graph.accumulate_param_grads(params);
    Ok(())
}
