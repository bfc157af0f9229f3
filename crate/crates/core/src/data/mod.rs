//! Manifests, feature preparation, batching, checkpoints and the synthetic
//! toy corpus.

mod batch;
mod checkpoint;
mod corpus;
mod manifest;

pub use batch::{batch_iterate, Batch, BatchSchedule, Example, FeatureExtractor};
pub use checkpoint::{fnv1a64, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use corpus::{
    build_toy_corpus, generate_toy_corpus, CorpusFiles, CorpusSpec, ToyCorpus, ToyUtterance, MAX_DURATION,
    MAX_PHONEMES, MIN_DURATION, MIN_PHONEMES,
};
pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, validate_for, write_manifest, ManifestEntry, Stage,
};
