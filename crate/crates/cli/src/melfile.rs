//! Binary mel matrix files: `MELF`, u32 frames, u32 bins, row-major f32 (all
//! little-endian).

use std::path::Path;

use adapitch_core::dsp::{MelConfig, MelSpectrogram};
use adapitch_core::{Error, Result};

pub const MEL_MAGIC: &[u8; 4] = b"MELF";

pub fn encode(mel: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + mel.data.len() * 4);
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&(mel.frames as u32).to_le_bytes());
    out.extend_from_slice(&(mel.n_mels as u32).to_le_bytes());
    for v in &mel.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], config: MelConfig) -> Result<MelSpectrogram> {
    let bad = |detail: String| Error::Config(format!("mel file: {detail}"));
    if bytes.len() < 12 || &bytes[..4] != MEL_MAGIC {
        return Err(bad("missing MELF header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (frames, bins) = (word(4), word(8));
    let body = &bytes[12..];
    if body.len() != frames * bins * 4 {
        return Err(bad(format!("{frames}x{bins} header but {} payload bytes", body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let config = MelConfig { n_mels: bins, ..config };
    MelSpectrogram::new(frames, bins, data, config)
}

pub fn write(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    std::fs::write(path, encode(mel))?;
    Ok(())
}
