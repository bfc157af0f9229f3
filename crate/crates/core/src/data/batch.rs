use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{ManifestEntry, Stage};
use crate::dsp::{
    estimate_pitch, load_wav, text_to_phonemes, Lexicon, MelAnalyzer, PitchConfig, Vocabulary, PAD,
};
use crate::error::{Error, Result};

/// Model-ready features of one utterance. Fields a stage does not use are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub speaker: usize,
    pub tokens: Vec<u32>,
    pub durations: Vec<usize>,
    pub n_mels: usize,
    /// Row-major `frames × n_mels` log-mel.
    pub mel: Vec<f32>,
    pub f0: Vec<f32>,
    pub voiced: Vec<bool>,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.mel.len().checked_div(self.n_mels).unwrap_or(0)
    }
}

/// Analysis front end shared by every stage.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub mel: MelAnalyzer,
    pub pitch: PitchConfig,
    pub lexicon: Lexicon,
    pub vocabulary: Vocabulary,
}

impl FeatureExtractor {
    /// Extracts what `stage` needs from each entry. Audio paths resolve against
    /// `base`. For supervised entries the mel and pitch are cut to
    /// `sum(durations)` frames; the analysis yields `1 + samples / hop` frames,
    /// so at most one trailing frame may be dropped.
    pub fn prepare(&self, entries: &[ManifestEntry], base: &Path, stage: Stage) -> Result<Vec<Example>> {
        super::manifest::validate_for(entries, stage)?;
        entries.iter().map(|e| self.prepare_one(e, base, stage)).collect()
    }

    fn prepare_one(&self, e: &ManifestEntry, base: &Path, stage: Stage) -> Result<Example> {
        let mut ex = Example {
            id: e.id.clone(),
            speaker: e.speaker.unwrap_or(0),
            tokens: Vec::new(),
            durations: e.durations.clone().unwrap_or_default(),
            n_mels: 0,
            mel: Vec::new(),
            f0: Vec::new(),
            voiced: Vec::new(),
        };
        if stage != Stage::M2m {
            let text = e.text.as_deref().unwrap_or_default();
            ex.tokens = text_to_phonemes(text, &self.lexicon, &self.vocabulary)?.ids;
        }
        if stage == Stage::T2t {
            return Ok(ex);
        }
        let path = e.audio_path(base).expect("validated");
        let wave = load_wav(&path)?;
        let mel = self.mel.analyze(&wave)?;
        ex.n_mels = mel.n_mels;
        ex.mel = mel.data;
        if stage == Stage::M2m {
            return Ok(ex);
        }
        let pitch = estimate_pitch(&wave, &self.pitch)?;
        if ex.durations.len() != ex.tokens.len() {
            return Err(Error::Config(format!(
                "utterance {:?}: {} durations for {} phonemes",
                e.id,
                ex.durations.len(),
                ex.tokens.len()
            )));
        }
        let total: usize = ex.durations.iter().sum();
        let frames = ex.frames();
        if total == 0 || total > frames || frames - total > 1 {
            return Err(Error::Config(format!(
                "utterance {:?}: durations sum to {total} but audio has {frames} frames",
                e.id
            )));
        }
        ex.mel.truncate(total * ex.n_mels);
        let pitch = pitch.truncated(total);
        ex.f0 = pitch.f0;
        ex.voiced = pitch.voiced;
        Ok(ex)
    }
}

/// Padded batch with prefix masks. Padding is filled with `PAD` tokens, zero
/// durations and zero frames, and is never read by the per-item accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub max_tokens: usize,
    pub max_frames: usize,
    pub n_mels: usize,
    pub tokens: Vec<u32>,
    pub token_mask: Vec<bool>,
    pub durations: Vec<usize>,
    pub mel: Vec<f32>,
    pub frame_mask: Vec<bool>,
    pub f0: Vec<f32>,
    pub voiced: Vec<bool>,
    pub speakers: Vec<usize>,
    /// Per-item pitch frame and duration counts; an item missing either has 0.
    pub pitch_lens: Vec<usize>,
    pub duration_lens: Vec<usize>,
}

impl Batch {
    pub fn collate(examples: &[Example], indices: &[usize]) -> Self {
        let items: Vec<&Example> = indices.iter().map(|&i| &examples[i]).collect();
        let max_tokens = items.iter().map(|e| e.tokens.len()).max().unwrap_or(0);
        let max_frames = items.iter().map(|e| e.frames()).max().unwrap_or(0);
        let n_mels = items.iter().map(|e| e.n_mels).max().unwrap_or(0);
        let b = items.len();
        let mut batch = Self {
            indices: indices.to_vec(),
            max_tokens,
            max_frames,
            n_mels,
            tokens: vec![PAD; b * max_tokens],
            token_mask: vec![false; b * max_tokens],
            durations: vec![0; b * max_tokens],
            mel: vec![0.0; b * max_frames * n_mels],
            frame_mask: vec![false; b * max_frames],
            f0: vec![0.0; b * max_frames],
            voiced: vec![false; b * max_frames],
            speakers: items.iter().map(|e| e.speaker).collect(),
            pitch_lens: items.iter().map(|e| e.f0.len().min(e.voiced.len()).min(max_frames)).collect(),
            duration_lens: items.iter().map(|e| e.durations.len()).collect(),
        };
        for (k, e) in items.iter().enumerate() {
            let t0 = k * max_tokens;
            batch.tokens[t0..t0 + e.tokens.len()].copy_from_slice(&e.tokens);
            batch.token_mask[t0..t0 + e.tokens.len()].fill(true);
            batch.durations[t0..t0 + e.durations.len()].copy_from_slice(&e.durations);
            let f = e.frames();
            let m0 = k * max_frames * n_mels;
            batch.mel[m0..m0 + e.mel.len()].copy_from_slice(&e.mel);
            let f0 = k * max_frames;
            batch.frame_mask[f0..f0 + f].fill(true);
            let p = batch.pitch_lens[k];
            batch.f0[f0..f0 + p].copy_from_slice(&e.f0[..p]);
            batch.voiced[f0..f0 + p].copy_from_slice(&e.voiced[..p]);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn token_len(&self, k: usize) -> usize {
        self.token_mask[k * self.max_tokens..(k + 1) * self.max_tokens]
            .iter()
            .filter(|m| **m)
            .count()
    }

    pub fn frame_len(&self, k: usize) -> usize {
        self.frame_mask[k * self.max_frames..(k + 1) * self.max_frames]
            .iter()
            .filter(|m| **m)
            .count()
    }

    pub fn tokens(&self, k: usize) -> &[u32] {
        let s = k * self.max_tokens;
        &self.tokens[s..s + self.token_len(k)]
    }

    pub fn durations(&self, k: usize) -> &[usize] {
        let s = k * self.max_tokens;
        &self.durations[s..s + self.duration_lens[k]]
    }

    pub fn mel(&self, k: usize) -> &[f32] {
        let s = k * self.max_frames * self.n_mels;
        &self.mel[s..s + self.frame_len(k) * self.n_mels]
    }

    pub fn f0(&self, k: usize) -> &[f32] {
        let s = k * self.max_frames;
        &self.f0[s..s + self.pitch_lens[k]]
    }

    pub fn voiced(&self, k: usize) -> &[bool] {
        let s = k * self.max_frames;
        &self.voiced[s..s + self.pitch_lens[k]]
    }
}

/// Seeded per-epoch shuffling into fixed-size batches (the last batch of an
/// epoch may be short). The order is a pure function of `(n, seed, epoch)`.
#[derive(Clone, Debug)]
pub struct BatchSchedule {
    pub n: usize,
    pub batch_size: usize,
    pub seed: u64,
}

pub fn batch_iterate(n: usize, batch_size: usize, seed: u64) -> Result<BatchSchedule> {
    if n == 0 {
        return Err(Error::EmptyCorpus("nothing to batch"));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    Ok(BatchSchedule { n, batch_size, seed })
}

impl BatchSchedule {
    pub fn epoch(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    /// Endless stream of batches across epochs.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0u64..).flat_map(move |e| self.epoch(e))
    }
}
