//! Binary checkpoint container: magic `ADPT`, format version, named blobs
//! (one per parameter plus a JSON config snapshot) and a trailing FNV-1a
//! checksum over every preceding byte. All integers little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Param, ParameterSet, Tensor};
use crate::config::ModelConfig;
use crate::data::manifest::Stage;
use crate::dsp::{Lexicon, MelConfig, PitchConfig, Vocabulary};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADPT";
pub const FORMAT_VERSION: u32 = 1;
const CONFIG_BLOB: &str = "__config__";

/// Training metadata stored beside the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: Stage,
    pub step: u64,
    pub seed: u64,
    pub model: ModelConfig,
    pub mel: MelConfig,
    pub pitch: PitchConfig,
    pub vocabulary: Vocabulary,
    pub lexicon: Lexicon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub meta: CheckpointMeta,
    pub params: ParameterSet,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn push_blob(out: &mut Vec<u8>, name: &str, payload: &[u8]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn encode_param(p: &Param) -> Vec<u8> {
    let shape = p.value.shape();
    let mut out = Vec::with_capacity(5 + 4 * shape.len() + 4 * p.value.numel());
    out.push(p.frozen as u8);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in p.value.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode_param(payload: &[u8]) -> std::result::Result<Param, String> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let frozen = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(format!("bad freeze flag {b}")),
    };
    let ndim = r.u32()? as usize;
    let shape = (0..ndim)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let n: usize = shape.iter().product();
    let raw = r.take(4 * n)?;
    if r.pos != payload.len() {
        return Err("trailing bytes in parameter blob".into());
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let value = Tensor::new(&shape, data).map_err(|e| e.to_string())?;
    Ok(Param { value, frozen })
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, params: ParameterSet) -> Self {
        Self {
            version: FORMAT_VERSION,
            meta,
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32 + 1).to_le_bytes());
        push_blob(&mut out, CONFIG_BLOB, &serde_json::to_vec(&self.meta)?);
        for (name, p) in self.params.iter() {
            push_blob(&mut out, name, &encode_param(p));
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: String| Error::Checkpoint {
            path: path.to_path_buf(),
            detail,
        };
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint (missing ADPT magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = fnv1a64(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32().map_err(bad)?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32().map_err(bad)?;
        let mut meta = None;
        let mut params = ParameterSet::new();
        for _ in 0..count {
            let name_len = r.u32().map_err(bad)? as usize;
            let name = std::str::from_utf8(r.take(name_len).map_err(bad)?)
                .map_err(|e| bad(format!("blob name: {e}")))?
                .to_string();
            let len = r.u64().map_err(bad)? as usize;
            let payload = r.take(len).map_err(bad)?;
            if name == CONFIG_BLOB {
                meta = Some(serde_json::from_slice(payload)?);
            } else {
                let p = decode_param(payload).map_err(|e| bad(format!("{name}: {e}")))?;
                params.insert_param(name, p);
            }
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes after last blob".into()));
        }
        let meta = meta.ok_or_else(|| bad("missing config blob".into()))?;
        Ok(Self { version, meta, params })
    }

    /// Removes the sub-networks not used at inference time.
    pub fn strip_for_inference(&mut self) {
        use crate::config::prefix::*;
        self.params.retain_prefixes(&[
            TEXT_ENCODER,
            MEL_DECODER,
            PITCH_ENCODER,
            PITCH_REGRESSOR,
            DURATION_PREDICTOR,
            PITCH_EMBED,
            SPEAKER_TABLE,
            FUSION,
        ]);
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Checkpoint::from_bytes(&bytes, path)
}
