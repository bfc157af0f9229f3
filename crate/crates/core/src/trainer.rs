//! Self-supervised pretraining of the two autoencoders, supervised training of
//! the variance adaptor against frozen pretrained parts, and inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Graph, OptimizerState, ParameterSet, Tensor, Var};
use crate::config::{prefix, ModelConfig};
use crate::data::{batch_iterate, Batch, Checkpoint, CheckpointMeta, Example, Stage};
use crate::dsp::{text_to_phonemes, GriffinLim, Lexicon, MelConfig, MelSpectrogram, PitchConfig, Vocabulary, Waveform};
use crate::error::{Error, Result};
use crate::m2m::{init_mel_decoder, init_mel_encoder, m2m_reconstruction_loss, mel_decode, mel_encode};
use crate::t2t::{init_text_decoder, init_text_encoder, t2t_reconstruction_loss, text_encode};
use crate::variance_adaptor::{
    duration_log_predictions, duration_loss, fuse, init_variance_adaptor, num_speakers, pitch_regress,
    pitch_regression_loss, predict_duration, set_head_biases, speaker_lookup, upsample,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Weight of the auxiliary duration loss, reported as its own term. Zero
    /// disables it.
    pub duration: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.1,
            duration: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.duration];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Unweighted loss terms of one supervised batch plus their weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub syn: f64,
    pub reg: f64,
    pub ada: f64,
    pub dur: f64,
    pub weights: LossWeights,
    pub total: f64,
}

impl LossReport {
    pub fn from_terms(syn: f64, reg: f64, ada: f64, dur: f64, weights: LossWeights) -> Self {
        let mut r = Self {
            syn,
            reg,
            ada,
            dur,
            weights,
            total: 0.0,
        };
        r.total = r.contributions().iter().sum();
        r
    }

    /// Weighted contribution of each term, in the order syn, reg, ada, dur.
    pub fn contributions(&self) -> [f64; 4] {
        let w = &self.weights;
        [
            w.alpha * self.syn,
            w.beta * self.reg,
            w.gamma * self.ada,
            w.duration * self.dur,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub max_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Steps between intermediate checkpoints; 0 keeps only the final one.
    pub checkpoint_interval: u64,
    /// Parameter prefixes held fixed.
    pub freeze: Vec<String>,
    pub weights: LossWeights,
}

impl TrainConfig {
    pub fn for_stage(stage: Stage) -> Self {
        let (max_steps, learning_rate) = match stage {
            Stage::T2t => (2000, 3e-3),
            Stage::M2m => (2000, 2e-3),
            Stage::Supervised => (5000, 1e-3),
        };
        let freeze = match stage {
            Stage::Supervised => prefix::STAGE2_FROZEN.iter().map(|s| s.to_string()).collect(),
            _ => Vec::new(),
        };
        Self {
            stage,
            max_steps,
            batch_size: 8,
            seed: 0,
            learning_rate,
            checkpoint_interval: 0,
            freeze,
            weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_steps and batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        self.weights.validate()?;
        if self.stage == Stage::Supervised {
            for p in prefix::STAGE2_FROZEN {
                if !self.freeze.iter().any(|f| f == p) {
                    return Err(Error::Config(format!("supervised training must freeze {p}")));
                }
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Everything besides parameters that a checkpoint carries.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContext {
    pub model: ModelConfig,
    pub mel: MelConfig,
    pub pitch: PitchConfig,
    pub vocabulary: Vocabulary,
    pub lexicon: Lexicon,
}

impl ModelContext {
    pub fn new(model: ModelConfig, mel: MelConfig, pitch: PitchConfig, lexicon: Lexicon) -> Self {
        Self {
            model,
            mel,
            pitch,
            vocabulary: Vocabulary::from_lexicon(&lexicon),
            lexicon,
        }
    }

    pub fn from_meta(meta: &CheckpointMeta) -> Self {
        Self {
            model: meta.model.clone(),
            mel: meta.mel,
            pitch: meta.pitch,
            vocabulary: meta.vocabulary.clone(),
            lexicon: meta.lexicon.clone(),
        }
    }

    pub fn meta(&self, stage: Stage, step: u64, seed: u64) -> CheckpointMeta {
        CheckpointMeta {
            stage,
            step,
            seed,
            model: self.model.clone(),
            mel: self.mel,
            pitch: self.pitch,
            vocabulary: self.vocabulary.clone(),
            lexicon: self.lexicon.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.mel.validate()?;
        self.pitch.validate()?;
        if self.vocabulary.len() > self.model.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens but the model table holds {}",
                self.vocabulary.len(),
                self.model.vocab_size
            )));
        }
        if self.model.n_mels != self.mel.n_mels {
            return Err(Error::Config(format!(
                "model expects {} mel bins, analysis produces {}",
                self.model.n_mels, self.mel.n_mels
            )));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: Stage,
    pub step: u64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub syn: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ada: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dur: Option<f64>,
}

impl StepRecord {
    fn single(stage: Stage, step: u64, total: f64) -> Self {
        Self {
            stage,
            step,
            total,
            syn: None,
            reg: None,
            ada: None,
            dur: None,
        }
    }

    fn from_report(step: u64, r: &LossReport) -> Self {
        Self {
            stage: Stage::Supervised,
            step,
            total: r.total,
            syn: Some(r.syn),
            reg: Some(r.reg),
            ada: Some(r.ada),
            dur: Some(r.dur),
        }
    }
}

/// Receives progress from a training run.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<StepRecord>,
}

/// Shared optimisation loop. `batch_loss` builds the mean loss of one batch
/// and returns it along with the record to log.
fn optimize<F>(
    params: &mut ParameterSet,
    n_items: usize,
    cfg: &TrainConfig,
    ctx: &ModelContext,
    observer: &mut dyn TrainObserver,
    mut batch_loss: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&mut Graph<f32>, &ParameterSet, &[usize], u64) -> Result<(Var, StepRecord)>,
{
    let schedule = batch_iterate(n_items, cfg.batch_size, cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.adam());
    let mut history = Vec::with_capacity(cfg.max_steps as usize);
    let mut batches = schedule.iter();
    for step in 1..=cfg.max_steps {
        let idx = batches.next().expect("schedule is endless");
        let mut g = Graph::new();
        let (loss, record) = batch_loss(&mut g, params, &idx, step)?;
        if !record.total.is_finite() {
            return Err(Error::NonFinite(format!("{} loss at step {step}", cfg.stage)));
        }
        g.backward(loss)?;
        params.zero_grads();
        g.accumulate_param_grads(params);
        opt.step(params)?;
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("{} parameters after step {step}", cfg.stage)));
        }
        log::debug!("{} step {step}: {:.6}", cfg.stage, record.total);
        observer.on_step(&record)?;
        history.push(record);
        if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 && step < cfg.max_steps {
            observer.on_checkpoint(&Checkpoint::new(ctx.meta(cfg.stage, step, cfg.seed), params.clone()))?;
        }
    }
    for (_, p) in params.iter_mut() {
        p.value.set_grad(None);
    }
    let checkpoint = Checkpoint::new(ctx.meta(cfg.stage, cfg.max_steps, cfg.seed), params.clone());
    observer.on_checkpoint(&checkpoint)?;
    Ok(TrainOutcome { checkpoint, history })
}

fn mean_of(g: &mut Graph<f32>, losses: Vec<Var>) -> Result<Var> {
    let n = losses.len();
    let mut acc = losses[0];
    for &l in &losses[1..] {
        acc = g.add(acc, l)?;
    }
    Ok(g.scale(acc, 1.0 / n as f64))
}

fn check_stage(cfg: &TrainConfig, stage: Stage) -> Result<()> {
    if cfg.stage != stage {
        return Err(Error::Config(format!("train config is for stage {}, not {stage}", cfg.stage)));
    }
    cfg.validate()
}

fn mel_var(g: &mut Graph<f32>, ex: &Example) -> Result<Var> {
    Ok(g.constant(Tensor::new(&[ex.frames(), ex.n_mels], ex.mel.clone())?))
}

/// Text autoencoder pretraining on token sequences.
pub fn run_stage1_t2t(
    sequences: &[Vec<u32>],
    ctx: &ModelContext,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::T2t)?;
    ctx.validate()?;
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus("text pretraining needs at least one sequence"));
    }
    if sequences.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput("token sequence"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParameterSet::new();
    init_text_encoder(&mut params, &ctx.model, &mut rng);
    init_text_decoder(&mut params, &ctx.model, &mut rng);
    apply_freeze(&mut params, &cfg.freeze);
    optimize(&mut params, sequences.len(), cfg, ctx, observer, |g, p, idx, step| {
        let losses = idx
            .iter()
            .map(|&i| t2t_reconstruction_loss(g, p, &ctx.model, &sequences[i]))
            .collect::<Result<Vec<_>>>()?;
        let loss = mean_of(g, losses)?;
        let total = g.value(loss).item() as f64;
        Ok((loss, StepRecord::single(Stage::T2t, step, total)))
    })
}

/// Mel autoencoder pretraining on audio-only examples.
pub fn run_stage1_m2m(
    examples: &[Example],
    ctx: &ModelContext,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::M2m)?;
    ctx.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyCorpus("mel pretraining needs at least one clip"));
    }
    if let Some(e) = examples.iter().find(|e| e.frames() == 0 || e.n_mels != ctx.model.n_mels) {
        return Err(Error::Config(format!("clip {:?} has no {}-bin mel frames", e.id, ctx.model.n_mels)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParameterSet::new();
    init_mel_encoder(&mut params, &ctx.model, &mut rng);
    init_mel_decoder(&mut params, &ctx.model, &mut rng);
    apply_freeze(&mut params, &cfg.freeze);
    optimize(&mut params, examples.len(), cfg, ctx, observer, |g, p, idx, step| {
        let mut losses = Vec::with_capacity(idx.len());
        for &i in idx {
            let mel = mel_var(g, &examples[i])?;
            losses.push(m2m_reconstruction_loss(g, p, &ctx.model, mel)?);
        }
        let loss = mean_of(g, losses)?;
        let total = g.value(loss).item() as f64;
        Ok((loss, StepRecord::single(Stage::M2m, step, total)))
    })
}

fn apply_freeze(params: &mut ParameterSet, freeze: &[String]) {
    for p in freeze {
        params.set_frozen_prefix(p, true);
    }
}

/// Outputs of the frozen encoders for each example, computed once.
#[derive(Clone, Debug)]
pub struct FrozenLatents {
    pub text: Vec<Tensor>,
    pub mel: Vec<Tensor>,
}

impl FrozenLatents {
    pub fn compute(params: &ParameterSet, cfg: &ModelConfig, examples: &[Example]) -> Result<Self> {
        let mut text = Vec::with_capacity(examples.len());
        let mut mel = Vec::with_capacity(examples.len());
        for ex in examples {
            let mut g = Graph::new();
            let t = text_encode(&mut g, params, cfg, &ex.tokens)?;
            let m = mel_var(&mut g, ex)?;
            let m = mel_encode(&mut g, params, cfg, m)?;
            text.push(g.value(t).clone());
            mel.push(g.value(m).clone());
        }
        Ok(Self { text, mel })
    }
}

fn require_supervised(batch: &Batch, k: usize) -> Result<()> {
    let missing = if batch.token_len(k) == 0 {
        Some("tokens")
    } else if batch.durations(k).is_empty() {
        Some("durations")
    } else if batch.frame_len(k) == 0 {
        Some("mel")
    } else if batch.f0(k).len() != batch.frame_len(k) {
        Some("pitch")
    } else {
        None
    };
    match missing {
        Some(field) => Err(Error::Config(format!(
            "batch item {} lacks {field} needed for supervised training",
            batch.indices[k]
        ))),
        None => Ok(()),
    }
}

/// Weighted supervised loss of a batch, averaged over items, plus the term
/// report. With `latents`, the frozen encoder outputs are read from the cache
/// (indexed by `batch.indices`) instead of being recomputed.
pub fn total_loss(
    g: &mut Graph<f32>,
    params: &ParameterSet,
    cfg: &ModelConfig,
    batch: &Batch,
    weights: &LossWeights,
    latents: Option<&FrozenLatents>,
) -> Result<(Var, LossReport)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let speakers = num_speakers(params)?;
    let mut terms: [Vec<Var>; 4] = Default::default();
    for k in 0..batch.len() {
        require_supervised(batch, k)?;
        let (tokens, durations) = (batch.tokens(k), batch.durations(k));
        let (f0, voiced) = (batch.f0(k), batch.voiced(k));
        let frames = batch.frame_len(k);
        let speaker = batch.speakers[k];
        if speaker >= speakers {
            return Err(Error::UnknownSpeaker {
                id: speaker,
                count: speakers,
            });
        }
        let mel = g.constant(Tensor::new(&[frames, batch.n_mels], batch.mel(k).to_vec())?);
        let (text, teacher) = match latents {
            Some(c) => {
                let i = batch.indices[k];
                (g.constant(c.text[i].clone()), g.constant(c.mel[i].clone()))
            }
            None => (text_encode(g, params, cfg, tokens)?, mel_encode(g, params, cfg, mel)?),
        };

        let log_f0 = pitch_regress(g, params, cfg, tokens, durations)?;
        let (reg, _) = pitch_regression_loss(g, log_f0, f0, voiced)?;

        let log_d = duration_log_predictions(g, params, text)?;
        let dur = duration_loss(g, log_d, durations)?;

        let up = upsample(g, text, durations)?;
        let spk = speaker_lookup(g, params, speaker)?;
        let fused = fuse(g, params, cfg, up, f0, spk)?;
        let ada = g.mse(fused, teacher)?;
        let out = mel_decode(g, params, cfg, fused)?;
        let syn = g.mse(out, mel)?;
        for (slot, v) in terms.iter_mut().zip([syn, reg, ada, dur]) {
            slot.push(v);
        }
    }
    let [syn, reg, ada, dur] = terms.map(|t| mean_of(g, t));
    let (syn, reg, ada, dur) = (syn?, reg?, ada?, dur?);
    let value = |g: &Graph<f32>, v: Var| g.value(v).item() as f64;
    let report = LossReport::from_terms(value(g, syn), value(g, reg), value(g, ada), value(g, dur), *weights);
    let parts = [
        g.scale(syn, weights.alpha),
        g.scale(reg, weights.beta),
        g.scale(ada, weights.gamma),
        g.scale(dur, weights.duration),
    ];
    let mut loss = parts[0];
    for &p in &parts[1..] {
        loss = g.add(loss, p)?;
    }
    Ok((loss, report))
}

/// Mean voiced log-f0 and mean `log(d + 1)` over a corpus.
fn corpus_means(examples: &[Example]) -> Result<(f64, f64)> {
    let log_f0: Vec<f64> = examples
        .iter()
        .flat_map(|e| e.f0.iter().zip(&e.voiced).filter(|(f, v)| **v && **f > 0.0).map(|(f, _)| (*f as f64).ln()))
        .collect();
    let log_d: Vec<f64> = examples
        .iter()
        .flat_map(|e| e.durations.iter().map(|&d| (d as f64 + 1.0).ln()))
        .collect();
    if log_f0.is_empty() || log_d.is_empty() {
        return Err(Error::EmptyCorpus("supervised corpus has no voiced frames or durations"));
    }
    Ok((
        log_f0.iter().sum::<f64>() / log_f0.len() as f64,
        log_d.iter().sum::<f64>() / log_d.len() as f64,
    ))
}

fn copy_component(dst: &mut ParameterSet, src: &Checkpoint, name: &str, path: &str) -> Result<()> {
    if dst.merge_prefix(&src.params, name) == 0 {
        return Err(Error::Checkpoint {
            path: path.into(),
            detail: format!("no {name} parameters in {} checkpoint", src.meta.stage),
        });
    }
    Ok(())
}

/// Supervised training of the variance adaptor, speaker table and fusion
/// layer on top of the pretrained text encoder and mel autoencoder.
pub fn run_stage2(
    examples: &[Example],
    t2t: &Checkpoint,
    m2m: &Checkpoint,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Supervised)?;
    if examples.is_empty() {
        return Err(Error::EmptyCorpus("supervised training needs at least one utterance"));
    }
    let ctx = ModelContext::from_meta(&t2t.meta);
    ctx.validate()?;
    if m2m.meta.model != ctx.model || m2m.meta.mel != ctx.mel {
        return Err(Error::Config("text and mel checkpoints disagree on model or analysis config".into()));
    }
    if let Some(e) = examples.iter().find(|e| e.speaker >= ctx.model.num_speakers) {
        return Err(Error::UnknownSpeaker {
            id: e.speaker,
            count: ctx.model.num_speakers,
        });
    }

    let mut params = ParameterSet::new();
    copy_component(&mut params, t2t, prefix::TEXT_ENCODER, "text checkpoint")?;
    copy_component(&mut params, m2m, prefix::MEL_ENCODER, "mel checkpoint")?;
    copy_component(&mut params, m2m, prefix::MEL_DECODER, "mel checkpoint")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_variance_adaptor(&mut params, &ctx.model, &mut rng);
    let (mean_log_f0, mean_log_d) = corpus_means(examples)?;
    set_head_biases(&mut params, mean_log_f0, mean_log_d)?;
    for (_, p) in params.iter_mut() {
        p.frozen = false;
    }
    apply_freeze(&mut params, &cfg.freeze);

    let latents = FrozenLatents::compute(&params, &ctx.model, examples)?;
    optimize(&mut params, examples.len(), cfg, &ctx, observer, |g, p, idx, step| {
        let batch = Batch::collate(examples, idx);
        let (loss, report) = total_loss(g, p, &ctx.model, &batch, &cfg.weights, Some(&latents))?;
        Ok((loss, StepRecord::from_report(step, &report)))
    })
}

/// Linearly resamples a Hz contour to `frames` values. Zeros mark unvoiced
/// frames; an output frame next to an unvoiced input takes its nearest input.
pub fn resample_contour(contour: &[f32], frames: usize) -> Result<Vec<f32>> {
    if contour.is_empty() || frames == 0 {
        return Err(Error::EmptyInput("pitch contour"));
    }
    let n = contour.len();
    if n == frames {
        return Ok(contour.to_vec());
    }
    Ok((0..frames)
        .map(|t| {
            if frames == 1 || n == 1 {
                return contour[0];
            }
            let x = t as f64 * (n - 1) as f64 / (frames - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            let w = x - i as f64;
            let (a, b) = (contour[i], contour[i + 1]);
            if a > 0.0 && b > 0.0 {
                (a as f64 * (1.0 - w) + b as f64 * w) as f32
            } else if w < 0.5 {
                a
            } else {
                b
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub mel: MelSpectrogram,
    pub durations: Vec<usize>,
    /// Hz contour fed to the fusion layer, one value per output frame.
    pub f0: Vec<f32>,
}

/// Text to mel through the inference path: text encoder, duration predictor,
/// pitch regressor (or `pitch_override`), fusion and mel decoder. Neither the
/// text decoder nor the mel encoder is needed.
pub fn synthesize(
    checkpoint: &Checkpoint,
    text: &str,
    speaker: usize,
    pitch_override: Option<&[f32]>,
) -> Result<Synthesis> {
    let meta = &checkpoint.meta;
    let params = &checkpoint.params;
    let cfg = &meta.model;
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("text"));
    }
    let speakers = num_speakers(params)?;
    if speaker >= speakers {
        return Err(Error::UnknownSpeaker {
            id: speaker,
            count: speakers,
        });
    }
    let ids = text_to_phonemes(text, &meta.lexicon, &meta.vocabulary)?.ids;
    let mut g = Graph::new();
    let latent = text_encode(&mut g, params, cfg, &ids)?;
    let durations = predict_duration(params, g.value(latent))?;
    let frames: usize = durations.iter().sum();
    let f0 = match pitch_override {
        Some(contour) => resample_contour(contour, frames)?,
        None => {
            let log_f0 = pitch_regress(&mut g, params, cfg, &ids, &durations)?;
            g.value(log_f0).data().iter().map(|x| x.exp()).collect()
        }
    };
    let up = upsample(&mut g, latent, &durations)?;
    let spk = speaker_lookup(&mut g, params, speaker)?;
    let fused = fuse(&mut g, params, cfg, up, &f0, spk)?;
    let out = mel_decode(&mut g, params, cfg, fused)?;
    let mel = MelSpectrogram::new(frames, cfg.n_mels, g.value(out).data().to_vec(), meta.mel)?;
    Ok(Synthesis { mel, durations, f0 })
}

/// Waveform from a synthesized mel via Griffin-Lim under the checkpoint's
/// analysis settings.
pub fn render_waveform(mel: &MelSpectrogram, iterations: usize, seed: u64) -> Result<Waveform> {
    GriffinLim::new(mel.config)?.reconstruct(mel, iterations, seed)
}
