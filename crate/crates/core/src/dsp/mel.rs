use serde::{Deserialize, Serialize};

use super::stft::Stft;
use super::wav::Waveform;
use crate::autodiff::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            hop: 256,
            win_length: 1024,
            n_mels: 80,
            fmin: 40.0,
            fmax: 7600.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 || self.n_fft < 2 || self.hop == 0 || self.n_mels == 0 {
            return fail(format!("degenerate mel config {self:?}"));
        }
        if self.hop > self.n_fft {
            return fail(format!("hop {} exceeds n_fft {}", self.hop, self.n_fft));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return fail(format!("window {} must be in 1..={}", self.win_length, self.n_fft));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return fail(format!(
                "need 0 <= fmin < fmax <= {} (got {}..{})",
                self.sample_rate as f64 / 2.0,
                self.fmin,
                self.fmax
            ));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return fail(format!("log floor must be positive, got {}", self.log_floor));
        }
        Ok(())
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        1 + samples / self.hop
    }
}

const LINEAR_HZ_PER_MEL: f64 = 200.0 / 3.0;
const BREAK_HZ: f64 = 1000.0;
const BREAK_MEL: f64 = BREAK_HZ / LINEAR_HZ_PER_MEL;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < BREAK_HZ {
        hz / LINEAR_HZ_PER_MEL
    } else {
        BREAK_MEL + (hz / BREAK_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < BREAK_MEL {
        mel * LINEAR_HZ_PER_MEL
    } else {
        BREAK_HZ * (log_step() * (mel - BREAK_MEL)).exp()
    }
}

/// Center frequency (Hz) of every triangular filter.
pub fn mel_center_frequencies(cfg: &MelConfig) -> Vec<f64> {
    let edges = mel_edges(cfg);
    edges[1..=cfg.n_mels].to_vec()
}

fn mel_edges(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// `n_mels × n_freq` filterbank of area-normalized triangles.
pub fn mel_filterbank(cfg: &MelConfig) -> Vec<f32> {
    let n_freq = cfg.n_fft / 2 + 1;
    let edges = mel_edges(cfg);
    let mut fb = vec![0.0f32; cfg.n_mels * n_freq];
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_freq {
            let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[m * n_freq + k] = (w * 2.0 / (r - l)) as f32;
        }
    }
    fb
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub frames: usize,
    pub n_mels: usize,
    /// Row-major `frames × n_mels` natural-log energies.
    pub data: Vec<f32>,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn new(frames: usize, n_mels: usize, data: Vec<f32>, config: MelConfig) -> Result<Self> {
        if data.len() != frames * n_mels || frames == 0 {
            return Err(Error::contract(
                "mel_spectrogram",
                format!("{frames}x{n_mels} needs {} values, got {}", frames * n_mels, data.len()),
            ));
        }
        Ok(Self {
            frames,
            n_mels,
            data,
            config,
        })
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames);
        Self {
            frames,
            n_mels: self.n_mels,
            data: self.data[..frames * self.n_mels].to_vec(),
            config: self.config,
        }
    }

    pub fn argmax_bins(&self) -> Vec<usize> {
        (0..self.frames)
            .map(|t| {
                let row = self.frame(t);
                (0..row.len())
                    .fold(0, |best, i| if row[i] > row[best] { i } else { best })
            })
            .collect()
    }
}

/// Reusable analyzer holding the FFT plan and filterbank for one config.
#[derive(Clone, Debug)]
pub struct MelAnalyzer {
    config: MelConfig,
    stft: Stft,
    filterbank: Vec<f32>,
}

impl MelAnalyzer {
    pub fn new(config: MelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            stft: Stft::new(config.n_fft, config.hop, config.win_length),
            filterbank: mel_filterbank(&config),
            config,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn filterbank(&self) -> &[f32] {
        &self.filterbank
    }

    /// Linear-magnitude frames (`frames × n_freq`) to log-mel frames.
    pub fn mel_from_magnitude(&self, mag: &[f32], frames: usize) -> MelSpectrogram {
        let n_freq = self.stft.n_freq();
        let n_mels = self.config.n_mels;
        let mut data = vec![0.0f32; frames * n_mels];
        f32::gemm(frames, n_freq, n_mels, 1.0, mag, false, &self.filterbank, true, 0.0, &mut data);
        let floor = self.config.log_floor as f32;
        for v in &mut data {
            *v = v.max(floor).ln();
        }
        MelSpectrogram {
            frames,
            n_mels,
            data,
            config: self.config,
        }
    }

    pub fn analyze(&self, wave: &Waveform) -> Result<MelSpectrogram> {
        if wave.is_empty() {
            return Err(Error::EmptyInput("waveform"));
        }
        if wave.sample_rate != self.config.sample_rate {
            return Err(Error::Config(format!(
                "waveform rate {} differs from analysis rate {}",
                wave.sample_rate, self.config.sample_rate
            )));
        }
        let frames = self.stft.frame_count(wave.len());
        let mag = self.stft.magnitude(&wave.samples);
        Ok(self.mel_from_magnitude(&mag, frames))
    }
}

pub fn mel_spectrogram(wave: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelAnalyzer::new(*cfg)?.analyze(wave)
}
