use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex32;

use super::mel::{MelAnalyzer, MelConfig, MelSpectrogram};
use super::wav::Waveform;
use crate::autodiff::Real;
use crate::error::{Error, Result};

pub const DEFAULT_PHASE_SEED: u64 = 0x5eed;

/// Extrapolation weight of the accelerated update.
const MOMENTUM: f32 = 0.99;
/// Projected-gradient iterations refining the clamped pseudo-inverse.
const NNLS_ITERATIONS: usize = 200;

/// Phase reconstruction from a log-mel spectrogram. Holds the analyzer, the
/// `n_freq × n_mels` filterbank pseudo-inverse and the filterbank's nonzero
/// band per mel bin.
#[derive(Clone, Debug)]
pub struct GriffinLim {
    analyzer: MelAnalyzer,
    pinv: Vec<f32>,
    bands: Vec<(usize, Vec<f32>)>,
    step: f32,
}

impl GriffinLim {
    pub fn new(config: MelConfig) -> Result<Self> {
        let analyzer = MelAnalyzer::new(config)?;
        let n_freq = analyzer.stft().n_freq();
        let fb = DMatrix::from_row_slice(
            config.n_mels,
            n_freq,
            &analyzer
                .filterbank()
                .iter()
                .map(|&x| x as f64)
                .collect::<Vec<_>>(),
        );
        let pinv = fb
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::Config(format!("filterbank pseudo-inverse: {e}")))?;
        let mut flat = Vec::with_capacity(n_freq * config.n_mels);
        for r in 0..n_freq {
            for c in 0..config.n_mels {
                flat.push(pinv[(r, c)] as f32);
            }
        }
        let mut bands = Vec::with_capacity(config.n_mels);
        let mut col_sums = vec![0.0f32; n_freq];
        let mut max_row = 0.0f32;
        for row in analyzer.filterbank().chunks(n_freq) {
            let start = row.iter().position(|&w| w > 0.0).unwrap_or(0);
            let end = row.iter().rposition(|&w| w > 0.0).map_or(start, |e| e + 1);
            for (k, &w) in row.iter().enumerate() {
                col_sums[k] += w;
            }
            max_row = max_row.max(row.iter().sum());
            bands.push((start, row[start..end].to_vec()));
        }
        let max_col = col_sums.iter().copied().fold(0.0f32, f32::max);
        let lipschitz = (max_row * max_col).max(f32::MIN_POSITIVE);
        Ok(Self {
            analyzer,
            pinv: flat,
            bands,
            step: 1.0 / lipschitz,
        })
    }

    /// Non-negative least-squares linear magnitude (`frames × n_freq`): the
    /// clamped pseudo-inverse refined by accelerated projected gradient.
    pub fn magnitude(&self, mel: &MelSpectrogram) -> Vec<f32> {
        let n_freq = self.analyzer.stft().n_freq();
        let linear: Vec<f32> = mel.data.iter().map(|v| v.exp()).collect();
        let mut mag = vec![0.0f32; mel.frames * n_freq];
        f32::gemm(
            mel.frames,
            mel.n_mels,
            n_freq,
            1.0,
            &linear,
            false,
            &self.pinv,
            true,
            0.0,
            &mut mag,
        );
        for m in &mut mag {
            *m = m.max(0.0);
        }
        for (target, x) in linear.chunks(mel.n_mels).zip(mag.chunks_mut(n_freq)) {
            self.refine(target, x);
        }
        mag
    }

    fn refine(&self, target: &[f32], x: &mut [f32]) {
        let mut y = x.to_vec();
        let mut previous = x.to_vec();
        let mut grad = vec![0.0f32; x.len()];
        let mut t = 1.0f32;
        for _ in 0..NNLS_ITERATIONS {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for ((start, w), &m) in self.bands.iter().zip(target) {
                let band = &y[*start..*start + w.len()];
                let r = w.iter().zip(band).map(|(a, b)| a * b).sum::<f32>() - m;
                for (g, a) in grad[*start..*start + w.len()].iter_mut().zip(w) {
                    *g += a * r;
                }
            }
            for ((xi, &yi), &g) in x.iter_mut().zip(&y).zip(&grad) {
                *xi = (yi - self.step * g).max(0.0);
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            for ((yi, &xi), p) in y.iter_mut().zip(x.iter()).zip(previous.iter_mut()) {
                *yi = xi + beta * (xi - *p);
                *p = xi;
            }
            t = t_next;
        }
    }

    pub fn reconstruct(&self, mel: &MelSpectrogram, iterations: usize, seed: u64) -> Result<Waveform> {
        let cfg = self.analyzer.config();
        if iterations == 0 {
            return Err(Error::Config("griffin-lim needs at least one iteration".into()));
        }
        if mel.n_mels != cfg.n_mels {
            return Err(Error::contract(
                "griffin_lim",
                format!("mel has {} bins, config {}", mel.n_mels, cfg.n_mels),
            ));
        }
        let stft = self.analyzer.stft();
        let frames = mel.frames;
        let len = frames * cfg.hop;
        let mag = self.magnitude(mel);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec: Vec<Complex32> = mag
            .iter()
            .map(|&m| Complex32::from_polar(m, rng.gen_range(0.0..std::f32::consts::TAU)))
            .collect();
        let mut signal = stft.inverse(&spec, frames, len);
        let mut previous: Option<Vec<Complex32>> = None;
        for _ in 1..iterations {
            let rebuilt = stft.complex(&signal);
            for (i, s) in spec.iter_mut().enumerate() {
                let c = match &previous {
                    Some(p) => rebuilt[i] + (rebuilt[i] - p[i]) * MOMENTUM,
                    None => rebuilt[i],
                };
                let n = c.norm();
                let phase = if n > 1e-12 { c / n } else { Complex32::new(1.0, 0.0) };
                *s = phase * mag[i];
            }
            previous = Some(rebuilt);
            signal = stft.inverse(&spec, frames, len);
        }
        for s in &mut signal {
            *s = s.clamp(-1.0, 1.0);
        }
        Waveform::new(signal, cfg.sample_rate)
    }
}

pub fn griffin_lim(mel: &MelSpectrogram, iterations: usize) -> Result<Waveform> {
    GriffinLim::new(mel.config)?.reconstruct(mel, iterations, DEFAULT_PHASE_SEED)
}
