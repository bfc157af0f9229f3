//! Mel-to-mel autoencoder: convolutional encoder (also the teacher for the
//! adaptation loss) and transformer decoder.

use rand::Rng;

use crate::autodiff::nn::{Conv2d, Linear, TransformerBlock};
use crate::autodiff::{Graph, ParameterSet, Real, Var};
use crate::config::{prefix, ModelConfig};
use crate::error::{Error, Result};

fn convs(cfg: &ModelConfig) -> Vec<Conv2d> {
    (0..cfg.mel_channels.len())
        .map(|i| Conv2d::new(format!("{}.conv{i}", prefix::MEL_ENCODER), cfg.mel_kernel))
        .collect()
}

fn encoder_proj() -> Linear {
    Linear::new(format!("{}.proj", prefix::MEL_ENCODER))
}

fn blocks(cfg: &ModelConfig) -> Vec<TransformerBlock> {
    (0..cfg.mel_decoder_layers)
        .map(|i| TransformerBlock::new(&format!("{}.block{i}", prefix::MEL_DECODER)))
        .collect()
}

fn decoder_proj() -> Linear {
    Linear::new(format!("{}.proj", prefix::MEL_DECODER))
}

pub fn init_mel_encoder<T: Real, R: Rng>(params: &mut ParameterSet<T>, cfg: &ModelConfig, rng: &mut R) {
    let mut c_in = 1;
    for (conv, &c_out) in convs(cfg).iter().zip(&cfg.mel_channels) {
        conv.init(params, c_in, c_out, rng);
        c_in = c_out;
    }
    encoder_proj().init(params, cfg.n_mels * c_in, cfg.latent_dim, rng);
}

pub fn init_mel_decoder<T: Real, R: Rng>(params: &mut ParameterSet<T>, cfg: &ModelConfig, rng: &mut R) {
    for block in blocks(cfg) {
        block.init(params, cfg.latent_dim, cfg.mel_ffn_hidden, rng);
    }
    decoder_proj().init(params, cfg.latent_dim, cfg.n_mels, rng);
}

/// `[F, n_mels]` log-mel to `[F, latent_dim]`: ReLU 2-D convolutions over the
/// time × frequency plane, then a per-frame projection.
pub fn mel_encode<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, cfg: &ModelConfig, mel: Var) -> Result<Var> {
    let (frames, bins) = (g.value(mel).rows(), g.value(mel).cols());
    if bins != cfg.n_mels {
        return Err(Error::contract(
            "mel_encode",
            format!("mel has {bins} bins, model expects {}", cfg.n_mels),
        ));
    }
    let mut x = g.reshape(mel, &[frames, bins, 1])?;
    for conv in convs(cfg) {
        x = conv.forward(g, params, x)?;
        x = g.relu(x);
    }
    let c = *cfg.mel_channels.last().expect("validated nonempty");
    let flat = g.reshape(x, &[frames, bins * c])?;
    encoder_proj().forward(g, params, flat)
}

/// `[F, latent_dim]` to `[F, n_mels]` through the transformer stack.
pub fn mel_decode<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, cfg: &ModelConfig, latent: Var) -> Result<Var> {
    let mut x = latent;
    for block in blocks(cfg) {
        x = block.forward(g, params, x)?;
    }
    decoder_proj().forward(g, params, x)
}

pub fn m2m_reconstruction_loss<T: Real>(
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
    mel: Var,
) -> Result<Var> {
    let latent = mel_encode(g, params, cfg, mel)?;
    let out = mel_decode(g, params, cfg, latent)?;
    g.mse(out, mel)
}
