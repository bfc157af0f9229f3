//! Multi-speaker text-to-speech training pipeline with self-supervised
//! text-to-text and mel-to-mel pretraining, a pitch/text/speaker
//! disentangling variance adaptor, and objective pitch and spectral
//! evaluation metrics.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod dsp;
pub mod error;
pub mod m2m;
pub mod metrics;
pub mod t2t;
pub mod trainer;
pub mod variance_adaptor;

pub use config::ModelConfig;
pub use error::{Error, Result};
