use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asr::SymbolTable;
use crate::error::{Error, Result};
use crate::features::DEFAULT_SAMPLE_RATE;

/// Longest utterance the generator will emit, in seconds.
pub const MAX_UTTERANCE_SECONDS: f64 = 17.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    /// Band-limited hiss, 1.5–5 kHz.
    Rain,
    /// Gusty low-frequency rumble.
    Wind,
    /// Bursts of voiced harmonic "ha" syllables.
    Laughter,
}

/// How a domain differs from clean source audio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainShift {
    /// Channel impulse response; `[1.0]` is the identity.
    pub fir: Vec<f64>,
    pub noise: NoiseKind,
    pub snr_db: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self::device()
    }
}

impl DomainShift {
    pub fn identity() -> Self {
        Self {
            fir: vec![1.0],
            noise: NoiseKind::None,
            snr_db: 30.0,
        }
    }

    /// A cheap microphone: a channel that boosts highs and cuts lows, plus
    /// band-limited self-noise at 10 dB.
    pub fn device() -> Self {
        Self {
            fir: vec![0.9, -0.75, 0.35, -0.1],
            noise: NoiseKind::Rain,
            snr_db: 10.0,
        }
    }

    /// Background-noise shift through an identity channel.
    pub fn environment(noise: NoiseKind, snr_db: f64) -> Self {
        Self {
            fir: vec![1.0],
            noise,
            snr_db,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.fir == [1.0] && self.noise == NoiseKind::None
    }

    pub fn validate(&self) -> Result<()> {
        if self.fir.is_empty() || self.fir.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("FIR taps must be a non-empty finite list".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("SNR must be finite".into()));
        }
        Ok(())
    }

    /// `|H(f)|` of the channel at `hz`.
    pub fn channel_gain(&self, hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * std::f64::consts::PI * hz / sample_rate as f64;
        let (re, im) = self
            .fir
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| {
                (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
            });
        (re * re + im * im).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    /// Labelled source utterances; a validation share is carved out of these.
    pub source_train: usize,
    pub target_train: usize,
    pub target_test: usize,
    /// Held-out source utterances for measuring the domain gap.
    pub source_test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            source_train: 200,
            target_train: 200,
            target_test: 100,
            source_test: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Number of letters; a word separator is added on top.
    pub num_chars: usize,
    /// Words over the letters; generated from `prototype_seed` when empty.
    pub lexicon: Vec<String>,
    pub lexicon_size: usize,
    pub splits: SplitSizes,
    pub validation_fraction: f64,
    pub words_per_utterance: [usize; 2],
    /// Seconds per character segment.
    pub segment_seconds: [f64; 2],
    /// Seconds of silence between words.
    pub silence_seconds: [f64; 2],
    /// Seconds of silence before the first and after the last word.
    pub edge_silence_seconds: f64,
    pub sample_rate: u32,
    /// Standard deviation of white noise added to both domains.
    pub noise_floor: f64,
    pub target: DomainShift,
    /// Seeds character signatures and the generated lexicon.
    pub prototype_seed: u64,
    /// Seeds transcripts, renderings and noise.
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            num_chars: 6,
            lexicon: Vec::new(),
            lexicon_size: 20,
            splits: SplitSizes::default(),
            validation_fraction: 0.1,
            words_per_utterance: [1, 3],
            segment_seconds: [0.10, 0.16],
            silence_seconds: [0.08, 0.12],
            edge_silence_seconds: 0.02,
            sample_rate: DEFAULT_SAMPLE_RATE,
            noise_floor: 0.01,
            target: DomainShift::default(),
            prototype_seed: 0,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.num_chars < 3 || self.num_chars > 26 {
            return bad("num_chars must be between 3 and 26");
        }
        let [wmin, wmax] = self.words_per_utterance;
        if wmin == 0 || wmin > wmax {
            return bad("words_per_utterance must be a non-empty range starting at 1 or more");
        }
        for [lo, hi] in [self.segment_seconds, self.silence_seconds] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("durations must be positive ranges");
            }
        }
        if !(self.edge_silence_seconds >= 0.0 && self.edge_silence_seconds.is_finite()) {
            return bad("edge silence must be non-negative");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if self.sample_rate == 0 || !(self.noise_floor >= 0.0) {
            return bad("sample_rate must be positive and noise_floor non-negative");
        }
        if self.lexicon.is_empty() && self.lexicon_size == 0 {
            return bad("lexicon is empty");
        }
        self.target.validate()
    }

    pub fn symbols(&self) -> Result<SymbolTable> {
        SymbolTable::letters_with_space(self.num_chars)
    }

    /// The configured lexicon, or a generated one.
    pub fn resolved_lexicon(&self) -> Result<Vec<String>> {
        let symbols = self.symbols()?;
        if !self.lexicon.is_empty() {
            for w in &self.lexicon {
                if w.is_empty() || w.chars().any(|c| c == ' ' || symbols.id(c).is_err()) {
                    return Err(Error::InvalidArgument(format!("lexicon word {w:?} uses unknown letters")));
                }
            }
            return Ok(self.lexicon.clone());
        }
        generate_lexicon(self.num_chars, self.lexicon_size, self.prototype_seed)
    }
}

/// Distinct words of 2–4 letters with no letter repeated back to back.
pub fn generate_lexicon(num_chars: usize, size: usize, seed: u64) -> Result<Vec<String>> {
    let letters: Vec<char> = ('a'..='z').take(num_chars).collect();
    let capacity: usize = (2..=4).map(|l| num_chars * (num_chars - 1).pow(l as u32 - 1)).sum();
    if size > capacity {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {size} distinct words from {num_chars} letters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1e81c0);
    let mut words: Vec<String> = Vec::with_capacity(size);
    while words.len() < size {
        let len = rng.gen_range(2..=4);
        let mut w = String::new();
        let mut prev = None;
        while w.len() < len {
            let c = letters[rng.gen_range(0..num_chars)];
            if Some(c) != prev {
                w.push(c);
                prev = Some(c);
            }
        }
        if !words.contains(&w) {
            words.push(w);
        }
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_is_deterministic_and_valid() {
        let a = generate_lexicon(6, 20, 3).unwrap();
        assert_eq!(a, generate_lexicon(6, 20, 3).unwrap());
        assert_eq!(a.len(), 20);
        for w in &a {
            assert!((2..=4).contains(&w.len()));
            assert!(w.as_bytes().windows(2).all(|p| p[0] != p[1]));
            assert!(w.chars().all(|c| ('a'..='f').contains(&c)));
        }
        assert!(generate_lexicon(3, 1000, 0).is_err());
    }

    #[test]
    fn channel_gain_of_identity_and_difference() {
        let id = DomainShift::identity();
        assert!((id.channel_gain(1234.0, 16000) - 1.0).abs() < 1e-12);
        let diff = DomainShift {
            fir: vec![1.0, -1.0],
            ..DomainShift::identity()
        };
        assert!(diff.channel_gain(0.0, 16000).abs() < 1e-12);
        assert!((diff.channel_gain(8000.0, 16000) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(CorpusConfig::default().validate().is_ok());
        let c = CorpusConfig {
            num_chars: 2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = CorpusConfig {
            target: DomainShift {
                snr_db: f64::INFINITY,
                ..DomainShift::identity()
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = CorpusConfig {
            lexicon: vec!["ab".into(), "az".into()],
            ..Default::default()
        };
        assert!(c.resolved_lexicon().is_err());
    }
}
