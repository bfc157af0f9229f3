use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter path prefixes of every sub-network.
pub mod prefix {
    pub const TEXT_ENCODER: &str = "text_encoder";
    pub const TEXT_DECODER: &str = "text_decoder";
    pub const MEL_ENCODER: &str = "mel_encoder";
    pub const MEL_DECODER: &str = "mel_decoder";
    pub const PITCH_ENCODER: &str = "pitch_encoder";
    pub const PITCH_REGRESSOR: &str = "pitch_regressor";
    pub const DURATION_PREDICTOR: &str = "duration_predictor";
    pub const PITCH_EMBED: &str = "pitch_embed";
    pub const SPEAKER_TABLE: &str = "speaker_table";
    pub const FUSION: &str = "fusion";

    /// Sub-networks frozen during supervised training.
    pub const STAGE2_FROZEN: [&str; 3] = [TEXT_ENCODER, MEL_ENCODER, MEL_DECODER];
    pub const STAGE2_TRAINABLE: [&str; 6] = [
        PITCH_ENCODER,
        PITCH_REGRESSOR,
        DURATION_PREDICTOR,
        PITCH_EMBED,
        SPEAKER_TABLE,
        FUSION,
    ];
}

/// Layer sizes for every sub-network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub n_mels: usize,
    pub num_speakers: usize,
    pub embed_dim: usize,
    pub text_conv_layers: usize,
    pub text_conv_kernel: usize,
    pub text_conv_stride: usize,
    pub text_lstm_hidden: usize,
    pub text_decoder_hidden: usize,
    pub mel_channels: Vec<usize>,
    pub mel_kernel: (usize, usize),
    pub latent_dim: usize,
    pub mel_decoder_layers: usize,
    pub mel_ffn_hidden: usize,
    pub pitch_dim: usize,
    pub pitch_layers: usize,
    pub pitch_ffn_hidden: usize,
    pub speaker_dim: usize,
    pub pitch_embed_dim: usize,
    pub duration_hidden: usize,
    /// Anchors of the hat-function basis the pitch embedding reads.
    pub pitch_bins: usize,
    /// Hz range spanned by the anchors, evenly in log-Hz; values outside clamp.
    pub pitch_range: (f64, f64),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            n_mels: 80,
            num_speakers: 2,
            embed_dim: 512,
            text_conv_layers: 3,
            text_conv_kernel: 5,
            text_conv_stride: 1,
            text_lstm_hidden: 256,
            text_decoder_hidden: 256,
            mel_channels: vec![32, 32, 32],
            mel_kernel: (3, 3),
            latent_dim: 256,
            mel_decoder_layers: 4,
            mel_ffn_hidden: 1024,
            pitch_dim: 128,
            pitch_layers: 2,
            pitch_ffn_hidden: 512,
            speaker_dim: 64,
            pitch_embed_dim: 64,
            duration_hidden: 64,
            pitch_bins: 256,
            pitch_range: (50.0, 600.0),
        }
    }
}

impl ModelConfig {
    /// Same layer counts and kernels with narrow widths, sized for a single
    /// CPU core.
    pub fn desk() -> Self {
        Self {
            embed_dim: 64,
            text_lstm_hidden: 32,
            text_decoder_hidden: 32,
            mel_channels: vec![8, 8, 8],
            latent_dim: 64,
            mel_ffn_hidden: 128,
            pitch_dim: 32,
            pitch_ffn_hidden: 64,
            speaker_dim: 16,
            pitch_embed_dim: 32,
            duration_hidden: 32,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" | "default" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown preset {other:?} (full|desk)"))),
        }
    }

    pub fn encoder_dim(&self) -> usize {
        2 * self.text_lstm_hidden
    }

    pub fn fusion_input_dim(&self) -> usize {
        self.encoder_dim() + self.pitch_embed_dim + self.speaker_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("n_mels", self.n_mels),
            ("num_speakers", self.num_speakers),
            ("embed_dim", self.embed_dim),
            ("text_conv_kernel", self.text_conv_kernel),
            ("text_lstm_hidden", self.text_lstm_hidden),
            ("text_decoder_hidden", self.text_decoder_hidden),
            ("latent_dim", self.latent_dim),
            ("mel_ffn_hidden", self.mel_ffn_hidden),
            ("pitch_dim", self.pitch_dim),
            ("pitch_ffn_hidden", self.pitch_ffn_hidden),
            ("speaker_dim", self.speaker_dim),
            ("pitch_embed_dim", self.pitch_embed_dim),
            ("duration_hidden", self.duration_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.text_conv_stride != 1 {
            return Err(Error::Config(
                "text conv stride must be 1 so latent length equals token count".into(),
            ));
        }
        if self.text_conv_kernel.is_multiple_of(2) || self.mel_kernel.0.is_multiple_of(2) || self.mel_kernel.1.is_multiple_of(2) {
            return Err(Error::Config("same padding needs odd kernel sizes".into()));
        }
        if self.mel_channels.is_empty() || self.mel_channels.contains(&0) {
            return Err(Error::Config("mel_channels must be nonempty and positive".into()));
        }
        if self.pitch_bins < 2 {
            return Err(Error::Config("pitch_bins must be at least 2".into()));
        }
        let (lo, hi) = self.pitch_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("pitch range {lo}..{hi} must satisfy 0 < lo < hi")));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocabulary must hold the four special tokens".into()));
        }
        Ok(())
    }
}
