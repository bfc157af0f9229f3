//! Pitch encoder and regressor, speaker table, duration predictor, length
//! regulation and the fusion layer feeding the mel decoder.

use rand::Rng;

use crate::autodiff::nn::{Embedding, Linear, TransformerBlock};
use crate::autodiff::{Graph, ParameterSet, Real, Tensor, Var};
use crate::config::{prefix, ModelConfig};
use crate::error::{Error, Result};
use crate::m2m::mel_encode;

fn speaker_table() -> Embedding {
    Embedding::new(prefix::SPEAKER_TABLE)
}

fn pitch_embedding() -> Embedding {
    Embedding::new(format!("{}.embedding", prefix::PITCH_ENCODER))
}

fn pitch_blocks(cfg: &ModelConfig) -> Vec<TransformerBlock> {
    (0..cfg.pitch_layers)
        .map(|i| TransformerBlock::new(&format!("{}.block{i}", prefix::PITCH_ENCODER)))
        .collect()
}

fn pitch_head() -> Linear {
    Linear::new(format!("{}.head", prefix::PITCH_REGRESSOR))
}

fn duration_hidden() -> Linear {
    Linear::new(format!("{}.hidden", prefix::DURATION_PREDICTOR))
}

fn duration_head() -> Linear {
    Linear::new(format!("{}.head", prefix::DURATION_PREDICTOR))
}

fn pitch_map() -> Linear {
    Linear::new(format!("{}.map", prefix::PITCH_EMBED))
}

fn unvoiced_name() -> String {
    format!("{}.unvoiced", prefix::PITCH_EMBED)
}

pub fn fusion_layer() -> Linear {
    Linear::new(format!("{}.fc", prefix::FUSION))
}

/// Initializes every supervised-only sub-network.
pub fn init_variance_adaptor<T: Real, R: Rng>(params: &mut ParameterSet<T>, cfg: &ModelConfig, rng: &mut R) {
    speaker_table().init(params, cfg.num_speakers, cfg.speaker_dim, rng);
    pitch_embedding().init(params, cfg.vocab_size, cfg.pitch_dim, rng);
    for block in pitch_blocks(cfg) {
        block.init(params, cfg.pitch_dim, cfg.pitch_ffn_hidden, rng);
    }
    pitch_head().init(params, cfg.pitch_dim, 1, rng);
    duration_hidden().init(params, cfg.encoder_dim(), cfg.duration_hidden, rng);
    duration_head().init(params, cfg.duration_hidden, 1, rng);
    pitch_map().init(params, cfg.pitch_bins, cfg.pitch_embed_dim, rng);
    params.insert(unvoiced_name(), Tensor::uniform(&[1, cfg.pitch_embed_dim], 0.1, rng));
    fusion_layer().init(params, cfg.fusion_input_dim(), cfg.latent_dim, rng);
}

/// Sets the regressor and duration head biases to corpus means so both
/// heads start at a sensible operating point.
pub fn set_head_biases<T: Real>(params: &mut ParameterSet<T>, mean_log_f0: f64, mean_log_duration: f64) -> Result<()> {
    params.get_mut(&pitch_head().bias())?.data_mut()[0] = T::from_f64(mean_log_f0);
    params.get_mut(&duration_head().bias())?.data_mut()[0] = T::from_f64(mean_log_duration);
    Ok(())
}

/// Row `speaker` of the speaker table as `[1, d_spk]`.
pub fn speaker_lookup<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, speaker: usize) -> Result<Var> {
    let table = g.param(params, &speaker_table().table())?;
    let count = g.value(table).rows();
    if speaker >= count {
        return Err(Error::UnknownSpeaker { id: speaker, count });
    }
    g.gather_rows(table, &[speaker])
}

pub fn num_speakers<T: Real>(params: &ParameterSet<T>) -> Result<usize> {
    Ok(params.get(&speaker_table().table())?.rows())
}

/// Private embedding followed by transformer blocks: `[L, pitch_dim]`.
pub fn pitch_encode<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, cfg: &ModelConfig, ids: &[u32]) -> Result<Var> {
    let mut x = pitch_embedding().forward(g, params, ids)?;
    for block in pitch_blocks(cfg) {
        x = block.forward(g, params, x)?;
    }
    Ok(x)
}

pub fn check_durations(durations: &[usize], tokens: usize) -> Result<usize> {
    if durations.len() != tokens {
        return Err(Error::contract(
            "durations",
            format!("{} durations for {tokens} tokens", durations.len()),
        ));
    }
    let total: usize = durations.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("durations sum to zero"));
    }
    Ok(total)
}

/// `[F, L]` weights that linearly interpolate per-token values between token
/// centers, holding the first and last values beyond the outer centers.
/// Zero-duration tokens carry no anchor.
pub fn interpolation_matrix(durations: &[usize]) -> Result<Vec<f64>> {
    let l = durations.len();
    let frames = check_durations(durations, l)?;
    let mut anchors = Vec::new();
    let mut start = 0usize;
    for (i, &d) in durations.iter().enumerate() {
        if d > 0 {
            anchors.push((start as f64 + (d as f64 - 1.0) / 2.0, i));
        }
        start += d;
    }
    let mut w = vec![0.0; frames * l];
    let mut a = 0;
    for f in 0..frames {
        let x = f as f64;
        let row = &mut w[f * l..(f + 1) * l];
        let (first, last) = (anchors[0], anchors[anchors.len() - 1]);
        if x <= first.0 {
            row[first.1] = 1.0;
            continue;
        }
        if x >= last.0 {
            row[last.1] = 1.0;
            continue;
        }
        while anchors[a + 1].0 < x {
            a += 1;
        }
        let (c0, i0) = anchors[a];
        let (c1, i1) = anchors[a + 1];
        let t = (x - c0) / (c1 - c0);
        row[i0] += 1.0 - t;
        row[i1] += t;
    }
    Ok(w)
}

/// Per-token log-Hz predictions `[L, 1]`.
pub fn pitch_token_values<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, latent: Var) -> Result<Var> {
    pitch_head().forward(g, params, latent)
}

/// Interpolates `[L, 1]` token values to `[sum(durations), 1]` frames.
pub fn interpolate_tokens<T: Real>(g: &mut Graph<T>, token_values: Var, durations: &[usize]) -> Result<Var> {
    let l = g.value(token_values).rows();
    check_durations(durations, l)?;
    let w = interpolation_matrix(durations)?;
    let frames = w.len() / l;
    let m = g.constant(Tensor::new(&[frames, l], w.into_iter().map(T::from_f64).collect())?);
    g.matmul(m, token_values)
}

/// Frame-level log-Hz pitch `[sum(durations), 1]` from the pitch encoder and
/// regressor head.
pub fn pitch_regress<T: Real>(
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
    ids: &[u32],
    durations: &[usize],
) -> Result<Var> {
    check_durations(durations, ids.len())?;
    let latent = pitch_encode(g, params, cfg, ids)?;
    let tokens = pitch_token_values(g, params, latent)?;
    interpolate_tokens(g, tokens, durations)
}

/// Voiced-frame log-Hz MSE. Returns the loss and whether the target had no
/// voiced frames (in which case the loss is a constant zero).
pub fn pitch_regression_loss<T: Real>(
    g: &mut Graph<T>,
    predicted_log_f0: Var,
    target_f0: &[f32],
    voiced: &[bool],
) -> Result<(Var, bool)> {
    let frames = g.value(predicted_log_f0).rows();
    if target_f0.len() != frames || voiced.len() != frames {
        return Err(Error::contract(
            "pitch_regression_loss",
            format!(
                "prediction has {frames} frames, target {} (voicing {})",
                target_f0.len(),
                voiced.len()
            ),
        ));
    }
    let idx: Vec<usize> = (0..frames).filter(|&t| voiced[t] && target_f0[t] > 0.0).collect();
    if idx.is_empty() {
        log::warn!("pitch target has no voiced frames; regression loss set to 0");
        return Ok((g.constant(Tensor::scalar(T::zero())), true));
    }
    let picked = g.gather_rows(predicted_log_f0, &idx)?;
    let target: Vec<T> = idx.iter().map(|&t| T::from_f64((target_f0[t] as f64).ln())).collect();
    let target = g.constant(Tensor::new(&[idx.len(), 1], target)?);
    Ok((g.mse(picked, target)?, false))
}

/// Per-token log-duration predictions `[L, 1]` from the text latent.
pub fn duration_log_predictions<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, text_latent: Var) -> Result<Var> {
    let h = duration_hidden().forward(g, params, text_latent)?;
    let h = g.relu(h);
    duration_head().forward(g, params, h)
}

/// Inverts the `log(d + 1)` training target and rounds, with at least one
/// frame per token.
pub fn durations_from_log(log_pred: &[f32]) -> Vec<usize> {
    log_pred
        .iter()
        .map(|&x| ((x as f64).exp() - 1.0).round().max(1.0) as usize)
        .collect()
}

pub fn predict_duration(params: &ParameterSet, text_latent: &Tensor) -> Result<Vec<usize>> {
    let mut g = Graph::new();
    let x = g.constant(text_latent.clone());
    let out = duration_log_predictions(&mut g, params, x)?;
    Ok(durations_from_log(g.value(out).data()))
}

/// Log-domain MSE against `log(d + 1)`.
pub fn duration_loss<T: Real>(g: &mut Graph<T>, log_pred: Var, durations: &[usize]) -> Result<Var> {
    let l = g.value(log_pred).numel();
    if l != durations.len() {
        return Err(Error::contract(
            "duration_loss",
            format!("{l} predictions for {} durations", durations.len()),
        ));
    }
    let target: Vec<T> = durations.iter().map(|&d| T::from_f64((d as f64 + 1.0).ln())).collect();
    let target = g.constant(Tensor::new(g.value(log_pred).shape(), target)?);
    g.mse(log_pred, target)
}

/// Row indices that repeat row `i` `durations[i]` times.
pub fn upsample_indices(durations: &[usize]) -> Vec<usize> {
    durations
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i, d))
        .collect()
}

/// Nearest-neighbour length regulation `[L, d] → [sum(durations), d]`.
pub fn upsample<T: Real>(g: &mut Graph<T>, rows: Var, durations: &[usize]) -> Result<Var> {
    check_durations(durations, g.value(rows).rows())?;
    g.gather_rows(rows, &upsample_indices(durations))
}

/// Weights of the hat-function basis at `hz`: `cfg.pitch_bins` anchors evenly
/// spaced in log-Hz over `cfg.pitch_range`, at most two nonzero.
pub fn pitch_basis(cfg: &ModelConfig, hz: f64) -> Vec<f64> {
    let k = cfg.pitch_bins;
    let (lo, hi) = (cfg.pitch_range.0.ln(), cfg.pitch_range.1.ln());
    let u = ((hz.ln() - lo) / (hi - lo) * (k - 1) as f64).clamp(0.0, (k - 1) as f64);
    let i = (u.floor() as usize).min(k - 2);
    let w = u - i as f64;
    let mut row = vec![0.0; k];
    row[i] = 1.0 - w;
    row[i + 1] = w;
    row
}

/// Frame-wise pitch embedding `[F, d_pe]` of Hz values (0 = unvoiced). Voiced
/// frames map their log-Hz hat-basis weights through a dense layer; unvoiced
/// frames take a learned vector.
pub fn pitch_embed<T: Real>(g: &mut Graph<T>, params: &ParameterSet<T>, cfg: &ModelConfig, f0: &[f32]) -> Result<Var> {
    if f0.is_empty() {
        return Err(Error::EmptyInput("pitch contour"));
    }
    let frames = f0.len();
    let mut basis = Vec::with_capacity(frames * cfg.pitch_bins);
    for &f in f0 {
        if f > 0.0 {
            basis.extend(pitch_basis(cfg, f as f64).into_iter().map(T::from_f64));
        } else {
            basis.extend(std::iter::repeat_n(T::zero(), cfg.pitch_bins));
        }
    }
    let x = g.constant(Tensor::new(&[frames, cfg.pitch_bins], basis)?);
    let voiced_embed = pitch_map().forward(g, params, x)?;
    if f0.iter().all(|&f| f > 0.0) {
        return Ok(voiced_embed);
    }
    let mask: Vec<f64> = f0.iter().map(|&f| if f > 0.0 { 1.0 } else { 0.0 }).collect();
    let inverse: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
    let unvoiced = g.param(params, &unvoiced_name())?;
    let unvoiced = g.gather_rows(unvoiced, &vec![0; frames])?;
    let a = g.scale_rows(voiced_embed, &mask)?;
    let b = g.scale_rows(unvoiced, &inverse)?;
    g.add(a, b)
}

/// Concatenates `[text | pitch embedding | speaker]` per frame and projects to
/// the mel latent width.
pub fn fuse<T: Real>(
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
    text_upsampled: Var,
    f0: &[f32],
    speaker: Var,
) -> Result<Var> {
    let frames = g.value(text_upsampled).rows();
    if f0.len() != frames {
        return Err(Error::contract(
            "fuse",
            format!("{frames} text frames but {} pitch frames", f0.len()),
        ));
    }
    if g.value(speaker).rows() != 1 {
        return Err(Error::contract("fuse", "speaker embedding must be a single row"));
    }
    let pe = pitch_embed(g, params, cfg, f0)?;
    let spk = g.gather_rows(speaker, &vec![0; frames])?;
    let joined = g.concat_cols(&[text_upsampled, pe, spk])?;
    fusion_layer().forward(g, params, joined)
}

/// MSE between the fused latent and the frozen mel encoder's latent of the
/// target mel.
pub fn adaptation_loss<T: Real>(
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
    fused: Var,
    teacher_mel: Var,
) -> Result<Var> {
    let (a, b) = (g.value(fused).rows(), g.value(teacher_mel).rows());
    if a != b {
        return Err(Error::contract(
            "adaptation_loss",
            format!("fused latent has {a} frames, teacher mel {b}"),
        ));
    }
    let teacher = mel_encode(g, params, cfg, teacher_mel)?;
    g.mse(fused, teacher)
}
