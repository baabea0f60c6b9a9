use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{CorpusConfig, DomainShift, MAX_UTTERANCE_SECONDS};
use super::noise::{mix_at_snr, noise};
use crate::asr::SymbolTable;
use crate::error::{Error, Result};
use crate::features::Waveform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// A labelled recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub waveform: Waveform,
    /// Words separated by single spaces.
    pub transcript: String,
    pub domain: Domain,
}

impl Utterance {
    /// Drops the transcript.
    pub fn unlabeled(&self) -> UnlabeledUtterance {
        UnlabeledUtterance {
            id: self.id.clone(),
            waveform: self.waveform.clone(),
            domain: self.domain,
        }
    }
}

/// A recording without its transcript. Adaptation only ever sees target
/// audio in this form.
///
/// ```compile_fail
/// # use madi::synth::UnlabeledUtterance;
/// fn peek(u: &UnlabeledUtterance) -> &str {
///     &u.transcript
/// }
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledUtterance {
    pub id: String,
    pub waveform: Waveform,
    pub domain: Domain,
}

/// Acoustic signature of one letter: a few sinusoids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterPrototype {
    /// `(frequency Hz, relative amplitude)`.
    pub components: Vec<(f64, f64)>,
}

/// Letters get disjoint frequency sets drawn from a log-spaced grid.
pub fn character_prototypes(num_chars: usize, seed: u64) -> Vec<CharacterPrototype> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x9e0);
    let slots = 3 * num_chars;
    let (lo, hi) = (300f64.ln(), 5000f64.ln());
    let mut grid: Vec<f64> = (0..slots)
        .map(|i| (lo + (hi - lo) * i as f64 / (slots - 1) as f64).exp())
        .collect();
    for i in (1..grid.len()).rev() {
        grid.swap(i, rng.gen_range(0..=i));
    }
    grid.chunks(3)
        .map(|chunk| {
            let k = rng.gen_range(2..=3);
            CharacterPrototype {
                components: chunk[..k]
                    .iter()
                    .map(|&f| (f, rng.gen_range(0.5..1.0)))
                    .collect(),
            }
        })
        .collect()
}

const RAMP_SECONDS: f64 = 0.005;
const FREQ_JITTER: f64 = 0.03;
const AMP_JITTER: f64 = 0.2;

/// Renders transcripts in either domain.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    pub config: CorpusConfig,
    pub symbols: SymbolTable,
    pub lexicon: Vec<String>,
    pub prototypes: Vec<CharacterPrototype>,
}

impl Synthesizer {
    pub fn new(config: CorpusConfig) -> Result<Self> {
        config.validate()?;
        let lexicon = config.resolved_lexicon()?;
        let longest = lexicon.iter().map(|w| w.chars().count()).max().unwrap_or(0);
        let words = config.words_per_utterance[1] as f64;
        let worst = words * longest as f64 * config.segment_seconds[1]
            + (words - 1.0) * config.silence_seconds[1]
            + 2.0 * config.edge_silence_seconds;
        if worst >= MAX_UTTERANCE_SECONDS {
            return Err(Error::InvalidArgument(format!(
                "utterances could last {worst:.1} s, over the {MAX_UTTERANCE_SECONDS} s cap"
            )));
        }
        Ok(Self {
            symbols: config.symbols()?,
            prototypes: character_prototypes(config.num_chars, config.prototype_seed),
            lexicon,
            config,
        })
    }

    /// A transcript of lexicon words, drawn uniformly.
    pub fn draw_transcript<R: Rng>(&self, rng: &mut R) -> String {
        let [lo, hi] = self.config.words_per_utterance;
        let n = rng.gen_range(lo..=hi);
        (0..n)
            .map(|_| self.lexicon[rng.gen_range(0..self.lexicon.len())].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Clean rendering, then the noise floor, then (target only) the domain
    /// channel and noise. Randomness for the clean signal is drawn first, so
    /// an identity shift reproduces the source rendering exactly.
    pub fn synthesize<R: Rng>(
        &self,
        id: &str,
        transcript: &str,
        domain: Domain,
        rng: &mut R,
    ) -> Result<Utterance> {
        let words: Vec<&str> = transcript.split(' ').collect();
        if words.iter().any(|w| w.is_empty()) {
            return Err(Error::InvalidArgument(format!("malformed transcript {transcript:?}")));
        }
        for w in &words {
            if !self.lexicon.iter().any(|l| l == w) {
                return Err(Error::UnknownWord(w.to_string()));
            }
        }
        let clean = self.render_clean(&words, rng)?;
        let shift = match domain {
            Domain::Source => DomainShift::identity(),
            Domain::Target => self.config.target.clone(),
        };
        let mut samples = apply_fir(&clean, &shift.fir);
        if self.config.noise_floor > 0.0 {
            for s in samples.iter_mut() {
                *s += self.config.noise_floor * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let sr = self.config.sample_rate;
        let n = noise(shift.noise, samples.len(), sr, rng);
        if let Some(n) = n {
            mix_at_snr(&mut samples, &n, shift.snr_db);
        }
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.99 {
            samples.iter_mut().for_each(|s| *s *= 0.99 / peak);
        }
        Ok(Utterance {
            id: id.to_string(),
            waveform: Waveform::new(samples, sr)?,
            transcript: transcript.to_string(),
            domain,
        })
    }

    fn render_clean<R: Rng>(&self, words: &[&str], rng: &mut R) -> Result<Vec<f64>> {
        let sr = self.config.sample_rate as f64;
        let [smin, smax] = self.config.segment_seconds;
        let [qmin, qmax] = self.config.silence_seconds;
        let silence = |rng: &mut R| vec![0.0; (rng.gen_range(qmin..=qmax) * sr).round() as usize];
        let edge = vec![0.0; (self.config.edge_silence_seconds * sr).round() as usize];
        let gain = rng.gen_range(0.15..0.25);
        let mut out = edge.clone();
        for (k, w) in words.iter().enumerate() {
            if k > 0 {
                out.extend(silence(rng));
            }
            for c in w.chars() {
                let id = self.symbols.id(c)?;
                let len = (rng.gen_range(smin..=smax) * sr).round() as usize;
                out.extend(self.render_segment(&self.prototypes[id], len, gain, rng));
            }
        }
        out.extend(edge);
        Ok(out)
    }

    fn render_segment<R: Rng>(&self, p: &CharacterPrototype, len: usize, gain: f64, rng: &mut R) -> Vec<f64> {
        let sr = self.config.sample_rate as f64;
        let ramp = ((RAMP_SECONDS * sr) as usize).clamp(1, len / 2 + 1);
        let parts: Vec<(f64, f64, f64)> = p
            .components
            .iter()
            .map(|&(f, a)| {
                let f = f * (1.0 + rng.gen_range(-FREQ_JITTER..=FREQ_JITTER));
                let a = a * (1.0 + rng.gen_range(-AMP_JITTER..=AMP_JITTER));
                (f, a, rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        (0..len)
            .map(|i| {
                let t = i as f64 / sr;
                let env = if i < ramp {
                    0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
                } else if len - i <= ramp {
                    0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
                } else {
                    1.0
                };
                let v: f64 = parts.iter().map(|(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum();
                gain * env * v
            })
            .collect()
    }
}

/// Causal FIR filtering, truncated to the input length.
pub fn apply_fir(x: &[f64], taps: &[f64]) -> Vec<f64> {
    if taps == [1.0] {
        return x.to_vec();
    }
    (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(k, h)| h * x[n - k])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::NoiseKind;

    fn synth(target: DomainShift) -> Synthesizer {
        Synthesizer::new(CorpusConfig {
            target,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn identity_shift_reproduces_source() {
        let s = synth(DomainShift::identity());
        let t = format!("{} {}", s.lexicon[0], s.lexicon[1]);
        let a = s.synthesize("x", &t, Domain::Source, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = s.synthesize("x", &t, Domain::Target, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.waveform, b.waveform);
        let c = s.synthesize("x", &t, Domain::Source, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn duration_within_segment_bounds() {
        let s = synth(DomainShift::environment(NoiseKind::Wind, 5.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sr = s.config.sample_rate as f64;
        for _ in 0..20 {
            let t = s.draw_transcript(&mut rng);
            let words = t.split(' ').count() as f64;
            let chars = t.chars().filter(|&c| c != ' ').count() as f64;
            let u = s.synthesize("x", &t, Domain::Target, &mut rng).unwrap();
            let d = u.waveform.samples.len() as f64 / sr;
            let slack = 1.0 / sr * (chars + words + 1.0);
            assert!(d >= chars * s.config.segment_seconds[0] - slack);
            let silences = (words - 1.0) * s.config.silence_seconds[1] + 2.0 * s.config.edge_silence_seconds;
            assert!(d <= chars * s.config.segment_seconds[1] + silences + slack);
            assert!(d < MAX_UTTERANCE_SECONDS);
        }
    }

    #[test]
    fn unknown_words_are_rejected() {
        let s = synth(DomainShift::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let missing = ["ab", "ba", "abc", "fed", "cafe"]
            .into_iter()
            .find(|w| !s.lexicon.iter().any(|l| l == w))
            .unwrap();
        assert!(matches!(
            s.synthesize("x", missing, Domain::Source, &mut rng),
            Err(Error::UnknownWord(_))
        ));
    }

    #[test]
    fn prototypes_use_distinct_frequencies() {
        let p = character_prototypes(6, 0);
        let mut all: Vec<f64> = p.iter().flat_map(|c| c.components.iter().map(|x| x.0)).collect();
        let n = all.len();
        all.sort_by(f64::total_cmp);
        all.dedup();
        assert_eq!(all.len(), n);
        assert!(p.iter().all(|c| (2..=3).contains(&c.components.len())));
    }

    #[test]
    fn fir_is_causal_convolution() {
        assert_eq!(apply_fir(&[1.0, 2.0, 3.0], &[1.0, 0.5]), vec![1.0, 2.5, 4.0]);
    }
}
