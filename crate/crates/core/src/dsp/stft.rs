use std::f32::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

/// Centered short-time Fourier transform with reflection padding of
/// `n_fft / 2` on both sides, so frame `t` is centered on sample `t · hop`.
#[derive(Clone)]
pub struct Stft {
    pub n_fft: usize,
    pub hop: usize,
    window: Vec<f32>,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("n_fft", &self.n_fft)
            .field("hop", &self.hop)
            .finish()
    }
}

/// Periodic Hann window of `win_length`, zero-padded (centered) to `n_fft`.
pub fn hann_window(win_length: usize, n_fft: usize) -> Vec<f32> {
    let mut w = vec![0.0; n_fft];
    let off = (n_fft - win_length) / 2;
    for i in 0..win_length {
        w[off + i] = 0.5 - 0.5 * (2.0 * PI * i as f32 / win_length as f32).cos();
    }
    w
}

/// Mirror index into `[0, n)` without repeating the edge sample.
fn reflect(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize, win_length: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann_window(win_length, n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn window(&self) -> &[f32] {
        &self.window
    }

    /// Complex spectrum, `frames × n_freq` row-major.
    pub fn complex(&self, samples: &[f32]) -> Vec<Complex32> {
        let frames = self.frame_count(samples.len());
        let nf = self.n_freq();
        let half = (self.n_fft / 2) as isize;
        let mut out = Vec::with_capacity(frames * nf);
        let mut buf = vec![Complex32::new(0.0, 0.0); self.n_fft];
        for t in 0..frames {
            let start = (t * self.hop) as isize - half;
            for (j, b) in buf.iter_mut().enumerate() {
                let x = if samples.is_empty() {
                    0.0
                } else {
                    samples[reflect(start + j as isize, samples.len())]
                };
                *b = Complex32::new(x * self.window[j], 0.0);
            }
            self.forward.process(&mut buf);
            out.extend_from_slice(&buf[..nf]);
        }
        out
    }

    pub fn magnitude(&self, samples: &[f32]) -> Vec<f32> {
        self.complex(samples).into_iter().map(|c| c.norm()).collect()
    }

    /// Weighted overlap-add inverse of [`Stft::complex`], trimmed to `len`
    /// samples starting at the first frame center.
    pub fn inverse(&self, spec: &[Complex32], frames: usize, len: usize) -> Vec<f32> {
        let nf = self.n_freq();
        let n = self.n_fft;
        let total = (frames - 1) * self.hop + n;
        let mut acc = vec![0.0f32; total.max(len + n)];
        let mut norm = vec![0.0f32; acc.len()];
        let mut buf = vec![Complex32::new(0.0, 0.0); n];
        for t in 0..frames {
            let row = &spec[t * nf..(t + 1) * nf];
            buf[..nf].copy_from_slice(row);
            for k in 1..n - nf + 1 {
                buf[nf - 1 + k] = row[nf - 1 - k].conj();
            }
            self.inverse.process(&mut buf);
            let off = t * self.hop;
            for j in 0..n {
                let w = self.window[j];
                acc[off + j] += buf[j].re / n as f32 * w;
                norm[off + j] += w * w;
            }
        }
        let half = n / 2;
        (0..len)
            .map(|i| {
                let k = i + half;
                if norm[k] > 1e-8 {
                    acc[k] / norm[k]
                } else {
                    0.0
                }
            })
            .collect()
    }
}
