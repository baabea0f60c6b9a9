use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use crate::asr::SymbolTable;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::features::{FbankExtractor, Waveform};
use crate::synth::{generate_corpus, read_corpus, Corpus, Domain, UnlabeledUtterance, Utterance};

/// Features of a transcribed utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub domain: Domain,
    pub transcript: String,
    pub labels: Vec<usize>,
    pub feats: Tensor,
}

/// Features of target audio, which keeps its waveform for augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledExample {
    pub id: String,
    pub waveform: Waveform,
    pub feats: Tensor,
}

pub fn extractor(cfg: &ExperimentConfig) -> Result<FbankExtractor> {
    FbankExtractor::new(cfg.features.clone(), cfg.corpus.sample_rate)
}

pub fn prepare_labeled(utts: &[Utterance], symbols: &SymbolTable, fx: &FbankExtractor) -> Result<Vec<LabeledExample>> {
    utts.iter()
        .map(|u| {
            Ok(LabeledExample {
                id: u.id.clone(),
                domain: u.domain,
                transcript: u.transcript.clone(),
                labels: symbols.encode(&u.transcript)?,
                feats: fx.compute(&u.waveform)?.frames,
            })
        })
        .collect()
}

pub fn prepare_unlabeled(utts: &[UnlabeledUtterance], fx: &FbankExtractor) -> Result<Vec<UnlabeledExample>> {
    utts.iter()
        .map(|u| {
            Ok(UnlabeledExample {
                id: u.id.clone(),
                feats: fx.compute(&u.waveform)?.frames,
                waveform: u.waveform.clone(),
            })
        })
        .collect()
}

/// The configured corpus: read from `corpus_dir` when set, else generated.
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    match &cfg.corpus_dir {
        Some(dir) => read_corpus(dir),
        None => generate_corpus(&cfg.corpus),
    }
}

/// Draws batches without replacement, reshuffling at every epoch.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, seed: u64, stream: u64) -> Self {
        assert!(n > 0, "cannot sample from an empty set");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut s = Self {
            order: (0..n).collect(),
            pos: 0,
            epoch: 0,
            rng,
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        for i in (1..self.order.len()).rev() {
            self.order.swap(i, self.rng.gen_range(0..=i));
        }
    }

    /// Zero-based epoch of the next index to be drawn.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.shuffle();
                    self.pos = 0;
                    self.epoch += 1;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(5, 1, 0);
        let mut first: Vec<usize> = s.next_batch(5);
        first.sort_unstable();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.epoch(), 0);
        s.next_batch(1);
        assert_eq!(s.epoch(), 1);
        let mut a = BatchSampler::new(7, 3, 2);
        let mut b = BatchSampler::new(7, 3, 2);
        assert_eq!(a.next_batch(20), b.next_batch(20));
    }
}
