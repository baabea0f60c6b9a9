//! Seeded two-domain corpus of speech-like audio.
//!
//! Each letter is a short burst of two or three sinusoids with a
//! letter-specific frequency set. Words are letter bursts back to back;
//! silences separate words. The target domain passes the same kind of audio
//! through a channel filter and/or background noise.

mod config;
mod corpus;
mod manifest;
mod noise;
mod render;

pub use config::{generate_lexicon, CorpusConfig, DomainShift, NoiseKind, SplitSizes, MAX_UTTERANCE_SECONDS};
pub use corpus::{generate_corpus, utterance_rng, Corpus, Split};
pub use manifest::{
    manifest_path, read_corpus, read_manifest, read_split, write_corpus, write_manifest, ManifestRow, CONFIG_FILE,
};
pub use noise::{mix_at_snr, noise};
pub use render::{apply_fir, character_prototypes, CharacterPrototype, Domain, Synthesizer, UnlabeledUtterance, Utterance};
