//! Neural building blocks on top of [`Graph`].
//!
//! Layers are thin name holders: parameters live in a [`ParameterSet`] under
//! `"{prefix}.{field}"` paths, so the same layer description serves
//! initialization, training and checkpoint reload.

use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::{ParameterSet, Real, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `x · w + b`.
pub fn linear<T: Real>(g: &mut Graph<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// 1-D convolution over the time axis of `[t, d_in]` with a `[k, d_in, d_out]`
/// kernel. Output length is `(t + 2·padding − k) / stride + 1`.
pub fn conv1d<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    kernel: Var,
    bias: Option<Var>,
    stride: usize,
    padding: usize,
) -> Result<Var> {
    let ks = g.value(kernel).shape().to_vec();
    if ks.len() != 3 || ks[1] != g.value(x).cols() {
        return Err(Error::contract(
            "conv1d",
            format!("kernel {ks:?} does not fit input {:?}", g.value(x).shape()),
        ));
    }
    let (k, d_in, d_out) = (ks[0], ks[1], ks[2]);
    let cols = g.im2col_1d(x, k, stride, padding)?;
    let w = g.reshape(kernel, &[k * d_in, d_out])?;
    let y = g.matmul(cols, w)?;
    match bias {
        Some(b) => g.add_row(y, b),
        None => Ok(y),
    }
}

/// Same-padded stride-1 2-D convolution of an `[h, w, c_in]` map with a
/// `[kh, kw, c_in, c_out]` kernel, returning `[h, w, c_out]`.
pub fn conv2d<T: Real>(g: &mut Graph<T>, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
    let xs = g.value(x).shape().to_vec();
    let ks = g.value(kernel).shape().to_vec();
    if xs.len() != 3 || ks.len() != 4 || ks[2] != xs[2] {
        return Err(Error::contract(
            "conv2d",
            format!("kernel {ks:?} does not fit input {xs:?}"),
        ));
    }
    let cols = g.im2col_2d(x, ks[0], ks[1])?;
    let w = g.reshape(kernel, &[ks[0] * ks[1] * ks[2], ks[3]])?;
    let mut y = g.matmul(cols, w)?;
    if let Some(b) = bias {
        y = g.add_row(y, b)?;
    }
    g.reshape(y, &[xs[0], xs[1], ks[3]])
}

/// Recurrent weights of one LSTM direction. Gate order in the packed `4·H`
/// axis is input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

fn lstm_pointwise<T: Real>(g: &mut Graph<T>, pre: Var, c: Var, hidden: usize) -> Result<(Var, Var)> {
    let h = hidden;
    let i = g.slice_cols(pre, 0, h)?;
    let f = g.slice_cols(pre, h, 2 * h)?;
    let cand = g.slice_cols(pre, 2 * h, 3 * h)?;
    let o = g.slice_cols(pre, 3 * h, 4 * h)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// One LSTM step on `[1, d_in]` input with `[1, H]` states.
pub fn lstm_cell<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    h: Var,
    c: Var,
    p: &LstmVars,
) -> Result<(Var, Var)> {
    let hidden = g.value(p.w_hh).rows();
    let four_h = g.value(p.w_hh).cols();
    if four_h != 4 * hidden {
        return Err(Error::contract(
            "lstm_cell",
            format!("w_hh must be [H, 4H], got {:?}", g.value(p.w_hh).shape()),
        ));
    }
    for (what, v) in [("hidden", h), ("cell", c)] {
        if g.value(v).numel() != hidden {
            return Err(Error::contract(
                "lstm_cell",
                format!("{what} state has {} values, hidden size is {hidden}", g.value(v).numel()),
            ));
        }
    }
    let xi = g.matmul(x, p.w_ih)?;
    let hh = g.matmul(h, p.w_hh)?;
    let pre = g.add(xi, hh)?;
    let pre = g.add_row(pre, p.bias)?;
    lstm_pointwise(g, pre, c, hidden)
}

/// Runs one direction over all rows of `[L, d_in]`, returning `[L, H]` in
/// input order.
fn lstm_run<T: Real>(g: &mut Graph<T>, x: Var, p: &LstmVars, reverse: bool) -> Result<Var> {
    let hidden = g.value(p.w_hh).rows();
    let steps = g.value(x).rows();
    // Input projections for every step at once.
    let xw = g.matmul(x, p.w_ih)?;
    let xw = g.add_row(xw, p.bias)?;
    let mut h = g.constant(Tensor::zeros(&[1, hidden]));
    let mut c = g.constant(Tensor::zeros(&[1, hidden]));
    let mut outs = vec![h; steps];
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let xt = g.gather_rows(xw, &[t])?;
        let hh = g.matmul(h, p.w_hh)?;
        let pre = g.add(xt, hh)?;
        let (hn, cn) = lstm_pointwise(g, pre, c, hidden)?;
        outs[t] = hn;
        h = hn;
        c = cn;
    }
    g.concat_rows(&outs)
}

/// Standard uniform init in `±1/√fan_in`.
fn fan_in_uniform<T: Real, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub prefix: String,
}

impl Linear {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
        }
    }

    pub fn weight(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, d_in: usize, d_out: usize, rng: &mut R) {
        params.insert(self.weight(), fan_in_uniform(&[d_in, d_out], d_in, rng));
        params.insert(self.bias(), Tensor::zeros(&[1, d_out]));
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let w = g.param(params, &self.weight())?;
        let b = g.param(params, &self.bias())?;
        linear(g, x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub prefix: String,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(prefix: impl Into<String>, kernel: usize, stride: usize) -> Self {
        Self {
            prefix: prefix.into(),
            kernel,
            stride,
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, d_in: usize, d_out: usize, rng: &mut R) {
        let k = self.kernel;
        params.insert(
            format!("{}.kernel", self.prefix),
            fan_in_uniform(&[k, d_in, d_out], k * d_in, rng),
        );
        params.insert(format!("{}.bias", self.prefix), Tensor::zeros(&[1, d_out]));
    }

    /// "Same" padding for stride 1: `(k − 1) / 2` on each side.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let w = g.param(params, &format!("{}.kernel", self.prefix))?;
        let b = g.param(params, &format!("{}.bias", self.prefix))?;
        conv1d(g, x, w, Some(b), self.stride, (self.kernel - 1) / 2)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub prefix: String,
    pub kernel: (usize, usize),
}

impl Conv2d {
    pub fn new(prefix: impl Into<String>, kernel: (usize, usize)) -> Self {
        Self {
            prefix: prefix.into(),
            kernel,
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, c_in: usize, c_out: usize, rng: &mut R) {
        let (kh, kw) = self.kernel;
        params.insert(
            format!("{}.kernel", self.prefix),
            fan_in_uniform(&[kh, kw, c_in, c_out], kh * kw * c_in, rng),
        );
        params.insert(format!("{}.bias", self.prefix), Tensor::zeros(&[1, c_out]));
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let w = g.param(params, &format!("{}.kernel", self.prefix))?;
        let b = g.param(params, &format!("{}.bias", self.prefix))?;
        conv2d(g, x, w, Some(b))
    }
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub prefix: String,
}

impl Lstm {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, d_in: usize, hidden: usize, rng: &mut R) {
        let bound = 1.0 / (hidden as f64).sqrt();
        params.insert(format!("{}.w_ih", self.prefix), Tensor::uniform(&[d_in, 4 * hidden], bound, rng));
        params.insert(format!("{}.w_hh", self.prefix), Tensor::uniform(&[hidden, 4 * hidden], bound, rng));
        params.insert(format!("{}.bias", self.prefix), Tensor::uniform(&[1, 4 * hidden], bound, rng));
    }

    pub fn vars<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>) -> Result<LstmVars> {
        Ok(LstmVars {
            w_ih: g.param(params, &format!("{}.w_ih", self.prefix))?,
            w_hh: g.param(params, &format!("{}.w_hh", self.prefix))?,
            bias: g.param(params, &format!("{}.bias", self.prefix))?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let p = self.vars(g, params)?;
        lstm_run(g, x, &p, false)
    }
}

/// Forward and backward LSTMs whose outputs are concatenated per step:
/// `[L, d_in] → [L, 2H]`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new(prefix: &str) -> Self {
        Self {
            forward: Lstm::new(format!("{prefix}.fwd")),
            backward: Lstm::new(format!("{prefix}.bwd")),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, d_in: usize, hidden: usize, rng: &mut R) {
        self.forward.init(params, d_in, hidden, rng);
        self.backward.init(params, d_in, hidden, rng);
    }

    pub fn run<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let pf = self.forward.vars(g, params)?;
        let pb = self.backward.vars(g, params)?;
        let hf = lstm_run(g, x, &pf, false)?;
        let hb = lstm_run(g, x, &pb, true)?;
        g.concat_cols(&[hf, hb])
    }
}

/// Softmax over scaled dot products, applied to `values`. Each row of the
/// attention weight matrix sums to one.
pub fn scaled_dot_attention<T: Real>(g: &mut Graph<T>, query: Var, keys: Var, values: Var) -> Result<Var> {
    let (dq, dk) = (g.value(query).cols(), g.value(keys).cols());
    if dq != dk {
        return Err(Error::contract(
            "scaled_dot_attention",
            format!("query dim {dq} != key dim {dk}"),
        ));
    }
    if g.value(keys).rows() != g.value(values).rows() {
        return Err(Error::contract(
            "scaled_dot_attention",
            format!(
                "{} keys but {} values",
                g.value(keys).rows(),
                g.value(values).rows()
            ),
        ));
    }
    let weights = attention_weights(g, query, keys)?;
    g.matmul(weights, values)
}

pub fn attention_weights<T: Real>(g: &mut Graph<T>, query: Var, keys: Var) -> Result<Var> {
    let d = g.value(keys).cols();
    let scores = g.matmul_t(query, keys, false, true)?;
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    Ok(g.softmax_rows(scores))
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub prefix: String,
}

impl LayerNorm {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
        }
    }

    pub fn init<T: Real>(&self, params: &mut ParameterSet<T>, d: usize) {
        params.insert(format!("{}.gain", self.prefix), Tensor::full(&[1, d], T::one()));
        params.insert(format!("{}.bias", self.prefix), Tensor::zeros(&[1, d]));
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let gain = g.param(params, &format!("{}.gain", self.prefix))?;
        let bias = g.param(params, &format!("{}.bias", self.prefix))?;
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

/// Post-norm feed-forward transformer block: single-head self-attention and
/// a two-layer ReLU feed-forward net, each followed by residual add and
/// layer normalization.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub prefix: String,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub norm1: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: LayerNorm,
}

impl TransformerBlock {
    pub fn new(prefix: &str) -> Self {
        Self {
            prefix: prefix.to_string(),
            query: Linear::new(format!("{prefix}.attn.query")),
            key: Linear::new(format!("{prefix}.attn.key")),
            value: Linear::new(format!("{prefix}.attn.value")),
            out: Linear::new(format!("{prefix}.attn.out")),
            norm1: LayerNorm::new(format!("{prefix}.norm1")),
            ffn_in: Linear::new(format!("{prefix}.ffn.in")),
            ffn_out: Linear::new(format!("{prefix}.ffn.out")),
            norm2: LayerNorm::new(format!("{prefix}.norm2")),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, dim: usize, ffn_hidden: usize, rng: &mut R) {
        self.query.init(params, dim, dim, rng);
        self.key.init(params, dim, dim, rng);
        self.value.init(params, dim, dim, rng);
        self.out.init(params, dim, dim, rng);
        self.norm1.init(params, dim);
        self.ffn_in.init(params, dim, ffn_hidden, rng);
        self.ffn_out.init(params, ffn_hidden, dim, rng);
        self.norm2.init(params, dim);
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, x: Var) -> Result<Var> {
        let dim = params.get(&self.query.weight())?.rows();
        if g.value(x).cols() != dim {
            return Err(Error::contract(
                "transformer_ffn_block",
                format!("input width {} != block width {dim}", g.value(x).cols()),
            ));
        }
        let q = self.query.forward(g, params, x)?;
        let k = self.key.forward(g, params, x)?;
        let v = self.value.forward(g, params, x)?;
        let attn = scaled_dot_attention(g, q, k, v)?;
        let attn = self.out.forward(g, params, attn)?;
        let res = g.add(x, attn)?;
        let h = self.norm1.forward(g, params, res)?;
        let f = self.ffn_in.forward(g, params, h)?;
        let f = g.relu(f);
        let f = self.ffn_out.forward(g, params, f)?;
        let res = g.add(h, f)?;
        self.norm2.forward(g, params, res)
    }
}

/// Row gather from a `[V, d]` table. Ids at or beyond `V` are rejected.
pub fn embedding_lookup<T: Real>(g: &mut Graph<T>, table: Var, ids: &[u32]) -> Result<Var> {
    let v = g.value(table).rows();
    if ids.is_empty() {
        return Err(Error::EmptyInput("token sequence"));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i as usize >= v) {
        return Err(Error::OutOfVocabulary {
            id: bad as usize,
            size: v,
        });
    }
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    g.gather_rows(table, &idx)
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub prefix: String,
}

impl Embedding {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
        }
    }

    pub fn table(&self) -> String {
        format!("{}.table", self.prefix)
    }

    pub fn init<T: Real, R: Rng>(&self, params: &mut ParameterSet<T>, vocab: usize, dim: usize, rng: &mut R) {
        params.insert(self.table(), Tensor::uniform(&[vocab, dim], 1.0, rng));
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &ParameterSet<T>, ids: &[u32]) -> Result<Var> {
        let t = g.param(params, &self.table())?;
        embedding_lookup(g, t, ids)
    }
}
