use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which training phase an entry is consumed by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    T2t,
    M2m,
    Supervised,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::T2t => "t2t",
            Stage::M2m => "m2m",
            Stage::Supervised => "supervised",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Vec<usize>>,
    #[serde(default = "default_split")]
    pub split: String,
}

fn default_split() -> String {
    "train".into()
}

impl ManifestEntry {
    /// Checks that the fields `stage` consumes are present, naming the first
    /// missing one.
    pub fn require(&self, stage: Stage) -> Result<()> {
        let missing = match stage {
            Stage::T2t => self.text.is_none().then_some("text"),
            Stage::M2m => self.audio.is_none().then_some("audio"),
            Stage::Supervised => [
                ("audio", self.audio.is_none()),
                ("text", self.text.is_none()),
                ("speaker", self.speaker.is_none()),
                ("durations", self.durations.is_none()),
            ]
            .into_iter()
            .find(|(_, m)| *m)
            .map(|(f, _)| f),
        };
        match missing {
            Some(field) => Err(Error::Config(format!(
                "utterance {:?} lacks field `{field}` required for {stage} training",
                self.id
            ))),
            None => Ok(()),
        }
    }

    /// Audio path, resolved against `base` when relative.
    pub fn audio_path(&self, base: &Path) -> Option<PathBuf> {
        self.audio.as_ref().map(|a| {
            let p = Path::new(a);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
    }
}

/// Parses line-delimited JSON entries; blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: n + 1,
            detail: e.to_string(),
        })?;
        if !seen.insert(entry.id.clone()) {
            return Err(Error::Manifest {
                line: n + 1,
                detail: format!("duplicate utterance id {:?}", entry.id),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

pub fn manifest_to_string(entries: &[ManifestEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(manifest_to_string(entries)?.as_bytes())?;
    Ok(())
}

pub fn validate_for(entries: &[ManifestEntry], stage: Stage) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::EmptyCorpus("manifest has no entries"));
    }
    entries.iter().try_for_each(|e| e.require(stage))
}
