//! Text-to-text autoencoder: the text encoder shared with the supervised
//! model and an auxiliary position-synchronous decoder.

use rand::Rng;

use crate::autodiff::nn::{scaled_dot_attention, BiLstm, Conv1d, Embedding, LayerNorm, Linear, Lstm};
use crate::autodiff::{Graph, ParameterSet, Real, Tensor, Var};
use crate::config::{prefix, ModelConfig};
use crate::error::{Error, Result};

fn embedding() -> Embedding {
    Embedding::new(format!("{}.embedding", prefix::TEXT_ENCODER))
}

fn convs(cfg: &ModelConfig) -> Vec<Conv1d> {
    (0..cfg.text_conv_layers)
        .map(|i| {
            Conv1d::new(
                format!("{}.conv{i}", prefix::TEXT_ENCODER),
                cfg.text_conv_kernel,
                cfg.text_conv_stride,
            )
        })
        .collect()
}

fn encoder_lstm() -> BiLstm {
    BiLstm::new(&format!("{}.lstm", prefix::TEXT_ENCODER))
}

struct Decoder {
    lstm: Lstm,
    query: Linear,
    proj: Linear,
    norm: LayerNorm,
}

fn decoder() -> Decoder {
    let p = prefix::TEXT_DECODER;
    Decoder {
        lstm: Lstm::new(format!("{p}.lstm")),
        query: Linear::new(format!("{p}.query")),
        proj: Linear::new(format!("{p}.proj")),
        norm: LayerNorm::new(format!("{p}.norm")),
    }
}

pub fn init_text_encoder<T: Real, R: Rng>(params: &mut ParameterSet<T>, cfg: &ModelConfig, rng: &mut R) {
    embedding().init(params, cfg.vocab_size, cfg.embed_dim, rng);
    for conv in convs(cfg) {
        conv.init(params, cfg.embed_dim, cfg.embed_dim, rng);
    }
    encoder_lstm().init(params, cfg.embed_dim, cfg.text_lstm_hidden, rng);
}

pub fn init_text_decoder<T: Real, R: Rng>(params: &mut ParameterSet<T>, cfg: &ModelConfig, rng: &mut R) {
    let d = decoder();
    let enc = cfg.encoder_dim();
    d.lstm.init(params, enc, cfg.text_decoder_hidden, rng);
    d.query.init(params, cfg.text_decoder_hidden, enc, rng);
    d.proj.init(params, cfg.text_decoder_hidden + enc, cfg.vocab_size, rng);
    d.norm.init(params, cfg.vocab_size);
}

/// Embedding, stacked same-padded ReLU convolutions and a bidirectional LSTM:
/// `L` token ids to an `[L, 2·hidden]` latent.
pub fn text_encode<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, cfg: &ModelConfig, ids: &[u32]) -> Result<Var> {
    let mut x = embedding().forward(g, params, ids)?;
    for conv in convs(cfg) {
        x = conv.forward(g, params, x)?;
        x = g.relu(x);
    }
    encoder_lstm().run(g, params, x)
}

/// One output distribution per latent row: an LSTM over the latent, attention
/// from each decoder state over all latent rows, then projection, layer
/// normalization and softmax. Returns `[L, V]`.
pub fn text_decode<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, latent: Var) -> Result<Var> {
    if g.value(latent).numel() == 0 {
        return Err(Error::EmptyInput("text latent"));
    }
    let d = decoder();
    let h = d.lstm.forward(g, params, latent)?;
    let q = d.query.forward(g, params, h)?;
    let ctx = scaled_dot_attention(g, q, latent, latent)?;
    let joined = g.concat_cols(&[h, ctx])?;
    let logits = d.proj.forward(g, params, joined)?;
    let normed = d.norm.forward(g, params, logits)?;
    Ok(g.softmax_rows(normed))
}

pub fn one_hot<T: Real>(ids: &[u32], vocab: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); ids.len() * vocab];
    for (i, &id) in ids.iter().enumerate() {
        if id as usize >= vocab {
            return Err(Error::OutOfVocabulary {
                id: id as usize,
                size: vocab,
            });
        }
        data[i * vocab + id as usize] = T::one();
    }
    Tensor::new(&[ids.len(), vocab], data)
}

/// Mean squared error between the decoded distributions and one-hot targets.
pub fn t2t_reconstruction_loss<T: Real>(
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
    ids: &[u32],
) -> Result<Var> {
    let latent = text_encode(g, params, cfg, ids)?;
    let out = text_decode(g, params, latent)?;
    let target = g.constant(one_hot(ids, cfg.vocab_size)?);
    g.mse(out, target)
}

/// Per-position argmax of the decoder output.
pub fn greedy_reconstruct(params: &ParameterSet, cfg: &ModelConfig, ids: &[u32]) -> Result<Vec<u32>> {
    let mut g = Graph::new();
    let latent = text_encode(&mut g, params, cfg, ids)?;
    let out = text_decode(&mut g, params, latent)?;
    let probs = g.value(out);
    Ok((0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best }) as u32
        })
        .collect())
}

/// Fraction of positions reconstructed exactly over a set of sequences.
pub fn reconstruction_accuracy(params: &ParameterSet, cfg: &ModelConfig, seqs: &[Vec<u32>]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for ids in seqs {
        let out = greedy_reconstruct(params, cfg, ids)?;
        hit += out.iter().zip(ids).filter(|(a, b)| a == b).count();
        total += ids.len();
    }
    if total == 0 {
        return Err(Error::EmptyCorpus("no tokens to reconstruct"));
    }
    Ok(hit as f64 / total as f64)
}
