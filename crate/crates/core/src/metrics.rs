//! Objective pitch and spectral evaluation metrics, computed in `f64`.

use serde::{Deserialize, Serialize};

use crate::dsp::{MelSpectrogram, PitchContour};
use crate::error::{Error, Result};

pub const DEFAULT_GPE_THRESHOLD: f64 = 0.20;
pub const DEFAULT_CEPSTRAL_ORDER: usize = 13;

/// Reference and hypothesis f0 tracks (Hz, 0 = unvoiced) of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchComparison {
    pub reference: Vec<f64>,
    pub hypothesis: Vec<f64>,
    pub threshold: f64,
}

impl PitchComparison {
    pub fn from_hz(reference: &[f64], hypothesis: &[f64]) -> Result<Self> {
        if reference.len() != hypothesis.len() {
            return Err(Error::contract(
                "pitch comparison",
                format!("{} reference frames vs {} hypothesis frames", reference.len(), hypothesis.len()),
            ));
        }
        Ok(Self {
            reference: reference.to_vec(),
            hypothesis: hypothesis.to_vec(),
            threshold: DEFAULT_GPE_THRESHOLD,
        })
    }

    pub fn from_contours(reference: &PitchContour, hypothesis: &PitchContour) -> Result<Self> {
        if reference.hop != hypothesis.hop {
            return Err(Error::contract(
                "pitch comparison",
                format!("hop {} vs {}", reference.hop, hypothesis.hop),
            ));
        }
        let hz = |c: &PitchContour| -> Vec<f64> {
            c.f0.iter()
                .zip(&c.voiced)
                .map(|(&f, &v)| if v { f as f64 } else { 0.0 })
                .collect()
        };
        Self::from_hz(&hz(reference), &hz(hypothesis))
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// `(reference, hypothesis)` pairs of frames voiced in both tracks.
    fn mutually_voiced(&self) -> Vec<(f64, f64)> {
        self.reference
            .iter()
            .zip(&self.hypothesis)
            .filter(|(r, h)| **r > 0.0 && **h > 0.0)
            .map(|(&r, &h)| (r, h))
            .collect()
    }

    fn is_gross(&self, r: f64, h: f64) -> bool {
        (h - r).abs() / r > self.threshold
    }
}

/// Percentage of mutually voiced frames whose relative error exceeds the threshold.
pub fn gpe(cmp: &PitchComparison) -> Result<f64> {
    let pairs = cmp.mutually_voiced();
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("gpe: no mutually voiced frames"));
    }
    let gross = pairs.iter().filter(|(r, h)| cmp.is_gross(*r, *h)).count();
    Ok(100.0 * gross as f64 / pairs.len() as f64)
}

/// Population standard deviation, in cents, of `1200·log2(hyp/ref)` over
/// mutually voiced frames without gross errors.
pub fn fpe(cmp: &PitchComparison) -> Result<f64> {
    let cents: Vec<f64> = cmp
        .mutually_voiced()
        .into_iter()
        .filter(|(r, h)| !cmp.is_gross(*r, *h))
        .map(|(r, h)| 1200.0 * (h / r).log2())
        .collect();
    if cents.is_empty() {
        return Err(Error::UndefinedMetric("fpe: no fine-error frames"));
    }
    let n = cents.len() as f64;
    let mean = cents.iter().sum::<f64>() / n;
    Ok((cents.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Mean squared relative error over mutually voiced frames, ×100.
pub fn pitch_mse(cmp: &PitchComparison) -> Result<f64> {
    let pairs = cmp.mutually_voiced();
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("pitch_mse: no mutually voiced frames"));
    }
    let sum: f64 = pairs.iter().map(|(r, h)| ((h - r) / r).powi(2)).sum();
    Ok(100.0 * sum / pairs.len() as f64)
}

/// Orthonormal DCT-II of each log-mel frame, keeping coefficients `0..order`.
pub fn mel_cepstra(mel: &MelSpectrogram, order: usize) -> Result<Vec<Vec<f64>>> {
    let frames: Vec<Vec<f64>> = (0..mel.frames)
        .map(|t| mel.frame(t).iter().map(|&x| x as f64).collect())
        .collect();
    cepstra_from_rows(&frames, order)
}

pub fn cepstra_from_rows(rows: &[Vec<f64>], order: usize) -> Result<Vec<Vec<f64>>> {
    let n = rows.first().map_or(0, Vec::len);
    if order == 0 || order > n {
        return Err(Error::Config(format!("cepstral order {order} must be in 1..={n}")));
    }
    let basis: Vec<Vec<f64>> = (0..order)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect();
    Ok(rows
        .iter()
        .map(|row| {
            basis
                .iter()
                .map(|b| b.iter().zip(row).map(|(w, x)| w * x).sum())
                .collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    None,
    Dtw,
}

const MCD_SCALE: f64 = 10.0 / std::f64::consts::LN_10;

/// `(10/ln 10)·sqrt(2·Σ_{d≥1}(a_d − b_d)²)`, coefficient 0 excluded.
pub fn frame_distortion(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).skip(1).map(|(x, y)| (x - y).powi(2)).sum();
    MCD_SCALE * (2.0 * s).sqrt()
}

/// Minimum-cost monotone alignment with steps (1,0), (0,1), (1,1); returns
/// the aligned `(ref, hyp)` index pairs in order.
pub fn dtw_path(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let (n, m) = (cost.len(), cost[0].len());
    let mut acc = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[i - 1][j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i][j] = prev + cost[i][j];
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[i - 1][j - 1];
            let up = acc[i - 1][j];
            let left = acc[i][j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    path
}

/// Mean frame distortion over aligned frame pairs.
pub fn mcd(reference: &[Vec<f64>], hypothesis: &[Vec<f64>], align: Alignment) -> Result<f64> {
    if reference.is_empty() || hypothesis.is_empty() {
        return Err(Error::EmptyInput("cepstra"));
    }
    let order = reference[0].len();
    if order < 2 || hypothesis.iter().chain(reference).any(|r| r.len() != order) {
        return Err(Error::contract("mcd", "cepstra need a common order of at least 2"));
    }
    let pairs: Vec<(usize, usize)> = match align {
        Alignment::None => {
            if reference.len() != hypothesis.len() {
                return Err(Error::contract(
                    "mcd",
                    format!(
                        "{} reference frames vs {} hypothesis frames (use dtw alignment)",
                        reference.len(),
                        hypothesis.len()
                    ),
                ));
            }
            (0..reference.len()).map(|i| (i, i)).collect()
        }
        Alignment::Dtw => {
            let cost: Vec<Vec<f64>> = reference
                .iter()
                .map(|r| hypothesis.iter().map(|h| frame_distortion(r, h)).collect())
                .collect();
            dtw_path(&cost)
        }
    };
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| frame_distortion(&reference[i], &hypothesis[j]))
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Mel-cepstral distortion between two log-mel spectrograms.
pub fn mel_mcd(reference: &MelSpectrogram, hypothesis: &MelSpectrogram, align: Alignment) -> Result<f64> {
    let a = mel_cepstra(reference, DEFAULT_CEPSTRAL_ORDER)?;
    let b = mel_cepstra(hypothesis, DEFAULT_CEPSTRAL_ORDER)?;
    mcd(&a, &b, align)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pitch_mse_percent: Option<f64>,
    pub gpe_percent: Option<f64>,
    pub fpe_cents: Option<f64>,
    pub mcd: Option<f64>,
    pub voiced_frames: usize,
    pub fine_frames: usize,
    pub mcd_frames: usize,
    pub gpe_threshold: f64,
    pub cepstral_order: usize,
    pub alignment: Option<Alignment>,
    pub definitions: Vec<String>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self {
            gpe_threshold: DEFAULT_GPE_THRESHOLD,
            cepstral_order: DEFAULT_CEPSTRAL_ORDER,
            definitions: vec![
                "pitch_mse_percent: mean of ((hyp-ref)/ref)^2 over mutually voiced frames, x100".into(),
                "fpe_cents: population standard deviation of 1200*log2(hyp/ref) over non-gross frames".into(),
                "mcd: (10/ln10)*sqrt(2*sum_{d>=1} dc_d^2) averaged over aligned frames, c0 excluded, orthonormal DCT-II of log-mel".into(),
            ],
            ..Self::default()
        }
    }

    /// Fills the three pitch metrics; metrics without qualifying frames stay `None`.
    pub fn with_pitch(mut self, cmp: &PitchComparison) -> Self {
        self.gpe_threshold = cmp.threshold;
        let voiced = cmp.mutually_voiced();
        self.voiced_frames = voiced.len();
        self.fine_frames = voiced.iter().filter(|(r, h)| !cmp.is_gross(*r, *h)).count();
        self.pitch_mse_percent = pitch_mse(cmp).ok();
        self.gpe_percent = gpe(cmp).ok();
        self.fpe_cents = fpe(cmp).ok();
        self
    }

    pub fn with_mcd(mut self, reference: &MelSpectrogram, hypothesis: &MelSpectrogram, align: Alignment) -> Result<Self> {
        self.mcd = Some(mel_mcd(reference, hypothesis, align)?);
        self.mcd_frames = reference.frames.min(hypothesis.frames);
        self.alignment = Some(align);
        Ok(self)
    }
}
