use serde::{Deserialize, Serialize};

use super::wav::Waveform;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub sample_rate: u32,
    pub hop: usize,
    /// Analysis frame length in samples, centered on `t · hop`.
    pub frame_length: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Shape parameters of the beta prior over YIN thresholds.
    pub prior_alpha: f64,
    pub prior_beta: f64,
    /// Probability of staying in the same voicing state between frames.
    pub self_transition: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            hop: 256,
            frame_length: 2048,
            fmin: 50.0,
            fmax: 600.0,
            prior_alpha: 2.0,
            prior_beta: 18.0,
            self_transition: 0.99,
        }
    }
}

pub const THRESHOLDS: [f64; 10] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

impl PitchConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 || self.hop == 0 {
            return Err(Error::Config("pitch: sample rate and hop must be positive".into()));
        }
        if !(self.fmin > 0.0 && self.fmin < self.fmax && self.fmax < nyquist) {
            return Err(Error::Config(format!(
                "pitch range {}..{} must satisfy 0 < fmin < fmax < {nyquist}",
                self.fmin, self.fmax
            )));
        }
        if self.tau_max() + 2 >= self.frame_length {
            return Err(Error::Config(format!(
                "frame length {} too short for fmin {}",
                self.frame_length, self.fmin
            )));
        }
        if !(self.self_transition > 0.0 && self.self_transition < 1.0) {
            return Err(Error::Config("self transition must be in (0, 1)".into()));
        }
        if !(self.prior_alpha > 0.0 && self.prior_beta > 0.0) {
            return Err(Error::Config("beta prior parameters must be positive".into()));
        }
        Ok(())
    }

    fn tau_min(&self) -> usize {
        ((self.sample_rate as f64 / self.fmax).floor() as usize).max(2)
    }

    fn tau_max(&self) -> usize {
        (self.sample_rate as f64 / self.fmin).ceil() as usize
    }

    /// Normalized beta-prior mass over [`THRESHOLDS`].
    pub fn threshold_weights(&self) -> Vec<f64> {
        let (a, b) = (self.prior_alpha, self.prior_beta);
        let raw: Vec<f64> = THRESHOLDS
            .iter()
            .map(|&s| s.powf(a - 1.0) * (1.0 - s).powf(b - 1.0))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PitchContour {
    /// Hz per frame, 0 where unvoiced.
    pub f0: Vec<f32>,
    pub voiced: Vec<bool>,
    pub voiced_prob: Vec<f32>,
    pub hop: usize,
}

impl PitchContour {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn truncated(&self, frames: usize) -> Self {
        let n = frames.min(self.len());
        Self {
            f0: self.f0[..n].to_vec(),
            voiced: self.voiced[..n].to_vec(),
            voiced_prob: self.voiced_prob[..n].to_vec(),
            hop: self.hop,
        }
    }
}

/// Pitch file text: one Hz value per line, 0 for unvoiced frames.
pub fn format_pitch_file(f0: &[f32]) -> String {
    let mut out = String::with_capacity(f0.len() * 8);
    for f in f0 {
        out.push_str(&format!("{f}\n"));
    }
    out
}

/// Parses a pitch file; blank lines and `#` comments are skipped.
pub fn parse_pitch_file(text: &str) -> Result<Vec<f32>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f32 = line.parse().map_err(|e| Error::Manifest {
            line: n + 1,
            detail: format!("pitch value {line:?}: {e}"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Manifest {
                line: n + 1,
                detail: format!("pitch must be a finite non-negative Hz value, got {v}"),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("pitch file"));
    }
    Ok(out)
}

/// Cumulative-mean-normalized difference for lags `0..=tau_max`.
fn cmndf(frame: &[f64], tau_max: usize) -> Vec<f64> {
    let w = frame.len() - tau_max;
    let mut d = vec![0.0; tau_max + 1];
    for (tau, slot) in d.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for j in 0..w {
            let diff = frame[j] - frame[j + tau];
            acc += diff * diff;
        }
        *slot = acc;
    }
    let mut out = vec![1.0; tau_max + 1];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += d[tau];
        out[tau] = if running > 1e-12 {
            d[tau] * tau as f64 / running
        } else {
            1.0
        };
    }
    out
}

fn parabolic(d: &[f64], tau: usize) -> f64 {
    if tau == 0 || tau + 1 >= d.len() {
        return tau as f64;
    }
    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-12 {
        return tau as f64;
    }
    let shift = 0.5 * (a - c) / denom;
    tau as f64 + shift.clamp(-1.0, 1.0)
}

struct FrameEstimate {
    f0: f64,
    prob: f64,
}

fn analyze_frame(d: &[f64], cfg: &PitchConfig, weights: &[f64]) -> Option<FrameEstimate> {
    let (lo, hi) = (cfg.tau_min(), cfg.tau_max());
    let mut mass: Vec<(usize, f64)> = Vec::new();
    for (&s, &w) in THRESHOLDS.iter().zip(weights) {
        let Some(mut tau) = (lo..=hi).find(|&t| d[t] < s) else {
            continue;
        };
        while tau < hi && d[tau + 1] < d[tau] {
            tau += 1;
        }
        match mass.iter_mut().find(|(t, _)| *t == tau) {
            Some(entry) => entry.1 += w,
            None => mass.push((tau, w)),
        }
    }
    let prob: f64 = mass.iter().map(|(_, w)| w).sum();
    let (tau, _) = mass
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })?;
    let period = parabolic(d, tau);
    let f0 = (cfg.sample_rate as f64 / period).clamp(cfg.fmin, cfg.fmax);
    Some(FrameEstimate { f0, prob })
}

/// Two-state (unvoiced, voiced) Viterbi decode over per-frame voicing probabilities.
fn decode_voicing(probs: &[f64], stay: f64) -> Vec<bool> {
    let n = probs.len();
    let (ls, lm) = (stay.ln(), (1.0 - stay).ln());
    let emit = |p: f64, voiced: bool| {
        let p = p.clamp(1e-6, 1.0 - 1e-6);
        if voiced {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    };
    let mut score = [0.5f64.ln() + emit(probs[0], false), 0.5f64.ln() + emit(probs[0], true)];
    let mut back = vec![[0usize; 2]; n];
    for t in 1..n {
        let mut next = [0.0; 2];
        for s in 0..2 {
            let from_same = score[s] + ls;
            let from_other = score[1 - s] + lm;
            let (best, arg) = if from_same >= from_other {
                (from_same, s)
            } else {
                (from_other, 1 - s)
            };
            next[s] = best + emit(probs[t], s == 1);
            back[t][s] = arg;
        }
        score = next;
    }
    let mut state = if score[1] > score[0] { 1 } else { 0 };
    let mut out = vec![false; n];
    for t in (0..n).rev() {
        out[t] = state == 1;
        state = back[t][state];
    }
    out
}

pub fn estimate_pitch(wave: &Waveform, cfg: &PitchConfig) -> Result<PitchContour> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(Error::EmptyInput("waveform"));
    }
    if wave.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "waveform rate {} differs from pitch rate {}",
            wave.sample_rate, cfg.sample_rate
        )));
    }
    let x = &wave.samples;
    let frames = 1 + x.len() / cfg.hop;
    let half = (cfg.frame_length / 2) as isize;
    let weights = cfg.threshold_weights();
    let mut buf = vec![0.0f64; cfg.frame_length];
    let mut estimates = Vec::with_capacity(frames);
    for t in 0..frames {
        let start = (t * cfg.hop) as isize - half;
        for (j, b) in buf.iter_mut().enumerate() {
            let i = start + j as isize;
            *b = if i >= 0 && (i as usize) < x.len() {
                x[i as usize] as f64
            } else {
                0.0
            };
        }
        let d = cmndf(&buf, cfg.tau_max());
        estimates.push(analyze_frame(&d, cfg, &weights));
    }
    let probs: Vec<f64> = estimates
        .iter()
        .map(|e| e.as_ref().map_or(0.0, |e| e.prob))
        .collect();
    let states = decode_voicing(&probs, cfg.self_transition);
    let mut f0 = Vec::with_capacity(frames);
    let mut voiced = Vec::with_capacity(frames);
    for (est, v) in estimates.iter().zip(states) {
        match est {
            Some(e) if v => {
                f0.push(e.f0 as f32);
                voiced.push(true);
            }
            _ => {
                f0.push(0.0);
                voiced.push(false);
            }
        }
    }
    Ok(PitchContour {
        f0,
        voiced,
        voiced_prob: probs.iter().map(|&p| p as f32).collect(),
        hop: cfg.hop,
    })
}
