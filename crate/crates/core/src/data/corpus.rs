//! Synthetic multi-speaker corpus with exact ground-truth durations and f0.
//!
//! Every phoneme has a fixed duration, two formants and a base pitch per
//! speaker; each occurrence jitters the pitch so that f0 is not a function of
//! the text alone. Audio is a sum of harmonics of the f0 contour shaped by the
//! phoneme's formant envelope and the speaker's spectral tilt.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{write_manifest, ManifestEntry};
use crate::dsp::{save_wav, Lexicon, Waveform};
use crate::error::{Error, Result};

const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH",
    "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

pub const MIN_PHONEMES: usize = 5;
pub const MAX_PHONEMES: usize = 12;
pub const MIN_DURATION: usize = 5;
pub const MAX_DURATION: usize = 20;
const PITCH_JITTER: f64 = 0.25;
const PEAK: f64 = 0.5;
const MAX_HARMONIC_HZ: f64 = 5000.0;
/// Largest relative f0 change per hop of the rendered contour.
const MAX_GLIDE_PER_HOP: f64 = 0.008;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub num_utterances: usize,
    pub num_speakers: usize,
    pub num_phonemes: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub hop: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_utterances: 32,
            num_speakers: 2,
            num_phonemes: 12,
            seed: 7,
            sample_rate: 22050,
            hop: 256,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_utterances == 0 || self.num_speakers == 0 || self.num_phonemes == 0 {
            return Err(Error::Config("corpus sizes must be positive".into()));
        }
        if self.sample_rate == 0 || self.hop == 0 {
            return Err(Error::Config("sample rate and hop must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Phone {
    name: String,
    duration: usize,
    formants: [(f64, f64); 2],
}

#[derive(Clone, Debug)]
struct Speaker {
    tilt: f64,
    base_f0: Vec<f64>,
}

/// One rendered utterance with its exact ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyUtterance {
    pub entry: ManifestEntry,
    pub phonemes: Vec<String>,
    pub waveform: Waveform,
    /// Rendered f0 (Hz) at every frame center `t · hop`, `sum(durations) + 1` frames.
    pub f0: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub spec: CorpusSpec,
    pub lexicon: Lexicon,
    pub utterances: Vec<ToyUtterance>,
}

fn phone_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match ARPABET.get(i) {
            Some(s) => s.to_string(),
            None => format!("X{i}"),
        })
        .collect()
}

fn envelope(f: f64, formants: &[(f64, f64); 2]) -> f64 {
    let bump = |(c, bw): (f64, f64)| (-((f - c) / bw).powi(2)).exp();
    0.4 + bump(formants[0]) + 0.6 * bump(formants[1])
}

/// Linear interpolation between anchor points, clamped beyond the ends.
fn interpolate(anchors: &[(f64, f64)], x: f64) -> f64 {
    let first = anchors[0];
    let last = anchors[anchors.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = anchors.partition_point(|a| a.0 < x);
    let (x0, y0) = anchors[k - 1];
    let (x1, y1) = anchors[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn render(
    phones: &[&Phone],
    f0_tokens: &[f64],
    speaker: &Speaker,
    spec: &CorpusSpec,
) -> (Vec<f64>, Vec<f32>) {
    let hop = spec.hop as f64;
    let sr = spec.sample_rate as f64;
    let total_frames: usize = phones.iter().map(|p| p.duration).sum();
    let n = total_frames * spec.hop;
    let mut centers = Vec::with_capacity(phones.len());
    let mut bounds = Vec::with_capacity(phones.len());
    let mut start = 0usize;
    for (p, &f) in phones.iter().zip(f0_tokens) {
        centers.push(((start as f64 + (p.duration as f64 - 1.0) / 2.0) * hop, f));
        bounds.push(start * spec.hop);
        start += p.duration;
    }
    // The contour chases the interpolated token targets at a bounded log-rate.
    let max_step = (1.0 + MAX_GLIDE_PER_HOP).ln() / hop;
    let mut contour = Vec::with_capacity(n + 1);
    let mut log_f0 = centers[0].1.ln();
    for i in 0..=n {
        let target = interpolate(&centers, i as f64).ln();
        log_f0 += (target - log_f0).clamp(-max_step, max_step);
        contour.push(log_f0.exp());
    }
    let fade = 2.0 * hop;
    let mut out = vec![0.0f64; n];
    let mut phase = 0.0f64;
    let mut seg = 0usize;
    for (i, s) in out.iter_mut().enumerate() {
        let x = i as f64;
        let f0 = contour[i];
        while seg + 1 < bounds.len() && i >= bounds[seg + 1] {
            seg += 1;
        }
        // Crossfade the formant envelope across segment boundaries.
        let (mut a, mut b, mut w) = (seg, seg, 0.0);
        if seg + 1 < bounds.len() {
            let d = bounds[seg + 1] as f64 - x;
            if d < fade / 2.0 {
                b = seg + 1;
                w = 0.5 - d / fade;
            }
        }
        if seg > 0 {
            let d = x - bounds[seg] as f64;
            if d < fade / 2.0 {
                a = seg - 1;
                b = seg;
                w = 0.5 + d / fade;
            }
        }
        phase += TAU * f0 / sr;
        let mut acc = 0.0;
        let mut k = 1.0;
        while k * f0 < MAX_HARMONIC_HZ {
            let f = k * f0;
            let env = (1.0 - w) * envelope(f, &phones[a].formants) + w * envelope(f, &phones[b].formants);
            acc += env * (f / 100.0).powf(-speaker.tilt) * (k * phase).sin();
            k += 1.0;
        }
        *s = acc;
    }
    let frame_f0 = (0..=total_frames)
        .map(|t| contour[t * spec.hop] as f32)
        .collect();
    (out, frame_f0)
}

/// Builds the corpus in memory. Identical specs give identical corpora.
pub fn build_toy_corpus(spec: &CorpusSpec) -> Result<ToyCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = phone_names(spec.num_phonemes);
    let phones: Vec<Phone> = names
        .iter()
        .map(|name| Phone {
            name: name.clone(),
            duration: rng.gen_range(MIN_DURATION..=MAX_DURATION),
            formants: [
                (rng.gen_range(250.0..900.0), rng.gen_range(80.0..160.0)),
                (rng.gen_range(1000.0..2600.0), rng.gen_range(150.0..300.0)),
            ],
        })
        .collect();
    let speakers: Vec<Speaker> = (0..spec.num_speakers)
        .map(|s| {
            let lo = 95.0 * 1.35f64.powi((s % 3) as i32);
            let hi = lo * 1.6;
            Speaker {
                tilt: rng.gen_range(1.0..2.0),
                base_f0: (0..spec.num_phonemes).map(|_| rng.gen_range(lo..hi)).collect(),
            }
        })
        .collect();

    let mut words: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut rendered = Vec::with_capacity(spec.num_utterances);
    for u in 0..spec.num_utterances {
        let speaker = u % spec.num_speakers;
        let len = rng.gen_range(MIN_PHONEMES..=MAX_PHONEMES);
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.num_phonemes)).collect();
        let mut text_words = Vec::new();
        let mut rest: &[usize] = &ids;
        while !rest.is_empty() {
            let take = rng.gen_range(1..=3).min(rest.len());
            let pron: Vec<String> = rest[..take].iter().map(|&i| names[i].clone()).collect();
            let stem: String = pron.iter().map(|p| p.to_lowercase()).collect();
            let mut word = stem.clone();
            let mut suffix = 0;
            while words.get(&word).is_some_and(|p| *p != pron) {
                suffix += 1;
                word = format!("{stem}{suffix}");
            }
            words.insert(word.clone(), pron);
            text_words.push(word);
            rest = &rest[take..];
        }
        let jitter: Vec<f64> = ids
            .iter()
            .map(|_| 1.0 + rng.gen_range(-PITCH_JITTER..=PITCH_JITTER))
            .collect();
        let f0_tokens: Vec<f64> = ids
            .iter()
            .zip(&jitter)
            .map(|(&i, j)| speakers[speaker].base_f0[i] * j)
            .collect();
        let seq: Vec<&Phone> = ids.iter().map(|&i| &phones[i]).collect();
        let (samples, f0) = render(&seq, &f0_tokens, &speakers[speaker], spec);
        let id = format!("utt{u:04}");
        let phonemes = seq.iter().map(|p| p.name.clone()).collect();
        let entry = ManifestEntry {
            id: id.clone(),
            audio: Some(format!("wavs/{id}.wav")),
            text: Some(text_words.join(" ")),
            speaker: Some(speaker),
            durations: Some(seq.iter().map(|p| p.duration).collect()),
            split: "train".into(),
        };
        rendered.push((entry, phonemes, samples, f0));
    }
    // One gain for the whole corpus so loudness carries no per-utterance offset.
    let peak = rendered
        .iter()
        .flat_map(|r| r.2.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-9);
    let mut utterances = Vec::with_capacity(rendered.len());
    for (entry, phonemes, samples, f0) in rendered {
        utterances.push(ToyUtterance {
            entry,
            phonemes,
            waveform: Waveform::new(samples.iter().map(|v| (v * PEAK / peak) as f32).collect(), spec.sample_rate)?,
            f0,
        });
    }
    // Keep the phoneme inventory complete even if some phonemes never occur.
    for name in &names {
        words.entry(name.to_lowercase()).or_insert_with(|| vec![name.clone()]);
    }
    Ok(ToyCorpus {
        spec: spec.clone(),
        lexicon: Lexicon { entries: words },
        utterances,
    })
}

/// Paths written by [`generate_toy_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusFiles {
    pub manifest: PathBuf,
    pub lexicon: PathBuf,
    pub pitch_dir: PathBuf,
}

/// Writes `manifest.jsonl`, `lexicon.txt`, `wavs/*.wav` and ground-truth
/// `f0/*.f0` contours under `out`.
pub fn generate_toy_corpus(spec: &CorpusSpec, out: impl AsRef<Path>) -> Result<(ToyCorpus, CorpusFiles)> {
    let corpus = build_toy_corpus(spec)?;
    let out = out.as_ref();
    std::fs::create_dir_all(out.join("wavs"))?;
    std::fs::create_dir_all(out.join("f0"))?;
    for u in &corpus.utterances {
        save_wav(out.join(u.entry.audio.as_ref().expect("generated entries carry audio")), &u.waveform)?;
        std::fs::write(out.join("f0").join(format!("{}.f0", u.entry.id)), crate::dsp::format_pitch_file(&u.f0))?;
    }
    let files = CorpusFiles {
        manifest: out.join("manifest.jsonl"),
        lexicon: out.join("lexicon.txt"),
        pitch_dir: out.join("f0"),
    };
    let entries: Vec<ManifestEntry> = corpus.utterances.iter().map(|u| u.entry.clone()).collect();
    write_manifest(&files.manifest, &entries)?;
    std::fs::write(&files.lexicon, corpus.lexicon.to_text())?;
    Ok((corpus, files))
}
