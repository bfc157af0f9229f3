use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];
const FALLBACK_CHARS: &str = "abcdefghijklmnopqrstuvwxyz0123456789'";

/// Word to phoneme-list mapping. Keys are stored lowercase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// Parses `word<TAB>ph ph ...` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (word, phones) = line.split_once('\t').ok_or_else(|| Error::Manifest {
                line: n + 1,
                detail: "lexicon entry needs word<TAB>phonemes".into(),
            })?;
            let phones: Vec<String> = phones.split_whitespace().map(str::to_string).collect();
            if word.trim().is_empty() || phones.is_empty() {
                return Err(Error::Manifest {
                    line: n + 1,
                    detail: "empty word or phoneme list".into(),
                });
            }
            entries.insert(word.trim().to_lowercase(), phones);
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, p) in &self.entries {
            out.push_str(w);
            out.push('\t');
            out.push_str(&p.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn phonemes(&self) -> BTreeSet<&str> {
        self.entries.values().flatten().map(String::as_str).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Specials, then the lexicon's phonemes in sorted order, then fallback characters.
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
        let chars = FALLBACK_CHARS.chars().map(String::from);
        for t in lexicon.phonemes().into_iter().map(str::to_string).chain(chars) {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        }
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhonemeSequence {
    pub ids: Vec<u32>,
    pub vocab_size: usize,
}

impl PhonemeSequence {
    pub fn new(ids: Vec<u32>, vocab_size: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("phoneme sequence"));
        }
        if let Some(&id) = ids.iter().find(|&&i| i as usize >= vocab_size) {
            return Err(Error::OutOfVocabulary {
                id: id as usize,
                size: vocab_size,
            });
        }
        Ok(Self { ids, vocab_size })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Lowercases and splits on whitespace; lexicon words map to their phonemes,
/// anything else is spelled out character by character (UNK if unknown).
pub fn text_to_phonemes(text: &str, lexicon: &Lexicon, vocab: &Vocabulary) -> Result<PhonemeSequence> {
    let normalized = text.to_lowercase();
    let mut ids = Vec::new();
    for word in normalized.split_whitespace() {
        match lexicon.entries.get(word) {
            Some(phones) => ids.extend(phones.iter().map(|p| vocab.id(p).unwrap_or(UNK))),
            None => ids.extend(
                word.chars()
                    .map(|c| vocab.id(c.encode_utf8(&mut [0; 4])).unwrap_or(UNK)),
            ),
        }
    }
    PhonemeSequence::new(ids, vocab.len())
}
