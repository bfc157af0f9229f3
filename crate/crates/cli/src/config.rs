//! Serializable run configuration. A JSON file supplies a base, flags
//! override it, and the resolved result is written next to the outputs.

use std::path::{Path, PathBuf};

use adapitch_core::dsp::{MelConfig, PitchConfig};
use adapitch_core::trainer::LossWeights;
use adapitch_core::{Error, ModelConfig, Result};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "ADAPITCH_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub t2t: Option<PathBuf>,
    pub m2m: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub max_steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub checkpoint_interval: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub paths: Paths,
    pub model: Option<ModelConfig>,
    pub mel: MelConfig,
    pub pitch: PitchConfig,
    pub weights: LossWeights,
    pub train: TrainSettings,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Seed precedence: flag, config file, `ADAPITCH_SEED`, `fallback`.
    pub fn resolve_seed(&mut self, flag: Option<u64>, fallback: u64) -> Result<u64> {
        let seed = match flag.or(self.seed) {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => fallback,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    /// Model dims: an explicit preset flag wins, then the file's model, then
    /// the file's preset, then the full-size defaults.
    pub fn resolve_model(&mut self, preset_flag: Option<&str>) -> Result<ModelConfig> {
        let model = match (preset_flag, &self.model) {
            (Some(p), _) => {
                self.preset = Some(p.to_string());
                ModelConfig::preset(p)?
            }
            (None, Some(m)) => m.clone(),
            (None, None) => ModelConfig::preset(self.preset.as_deref().unwrap_or("full"))?,
        };
        self.model = Some(model.clone());
        Ok(model)
    }

    pub fn archive(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
