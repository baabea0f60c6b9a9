use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::CorpusConfig;
use super::render::{Domain, Synthesizer, UnlabeledUtterance, Utterance};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SourceTrain,
    SourceValid,
    SourceTest,
    TargetTrain,
    TargetTest,
}

impl Split {
    pub const ALL: [Split; 5] = [
        Split::SourceTrain,
        Split::SourceValid,
        Split::SourceTest,
        Split::TargetTrain,
        Split::TargetTest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::SourceTrain => "source_train",
            Split::SourceValid => "source_valid",
            Split::SourceTest => "source_test",
            Split::TargetTrain => "target_train",
            Split::TargetTest => "target_test",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Split::SourceTrain | Split::SourceValid | Split::SourceTest => Domain::Source,
            Split::TargetTrain | Split::TargetTest => Domain::Target,
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

/// All splits of a generated corpus.
///
/// `target_train` keeps its transcripts so that evaluation can score it;
/// adaptation code receives it only through [`Corpus::target_train_unlabeled`].
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub source_train: Vec<Utterance>,
    pub source_valid: Vec<Utterance>,
    pub source_test: Vec<Utterance>,
    pub target_train: Vec<Utterance>,
    pub target_test: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, s: Split) -> &[Utterance] {
        match s {
            Split::SourceTrain => &self.source_train,
            Split::SourceValid => &self.source_valid,
            Split::SourceTest => &self.source_test,
            Split::TargetTrain => &self.target_train,
            Split::TargetTest => &self.target_test,
        }
    }

    pub(crate) fn split_mut(&mut self, s: Split) -> &mut Vec<Utterance> {
        match s {
            Split::SourceTrain => &mut self.source_train,
            Split::SourceValid => &mut self.source_valid,
            Split::SourceTest => &mut self.source_test,
            Split::TargetTrain => &mut self.target_train,
            Split::TargetTest => &mut self.target_test,
        }
    }

    pub fn target_train_unlabeled(&self) -> Vec<UnlabeledUtterance> {
        self.target_train.iter().map(Utterance::unlabeled).collect()
    }

    pub fn len(&self) -> usize {
        Split::ALL.iter().map(|&s| self.split(s).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Independent random stream per (split, utterance index), so output does
/// not depend on generation order.
pub fn utterance_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split as u64 + 1) << 32) | index as u64);
    rng
}

pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    let synth = Synthesizer::new(cfg.clone())?;
    let make = |split: Split, n: usize| -> Result<Vec<Utterance>> {
        (0..n)
            .map(|i| {
                let mut rng = utterance_rng(cfg.seed, split, i);
                let transcript = synth.draw_transcript(&mut rng);
                synth.synthesize(&format!("{}-{i:05}", split.as_str()), &transcript, split.domain(), &mut rng)
            })
            .collect()
    };
    let mut pool = make(Split::SourceTrain, cfg.splits.source_train)?;
    let n_valid = (pool.len() as f64 * cfg.validation_fraction).round() as usize;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut rng = utterance_rng(cfg.seed, Split::SourceValid, usize::MAX >> 32);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut valid_idx: Vec<usize> = order[..n_valid].to_vec();
    valid_idx.sort_unstable();
    let mut source_valid = Vec::with_capacity(n_valid);
    for &i in valid_idx.iter().rev() {
        let mut u = pool.remove(i);
        u.id = u.id.replacen(Split::SourceTrain.as_str(), Split::SourceValid.as_str(), 1);
        source_valid.push(u);
    }
    source_valid.reverse();
    Ok(Corpus {
        config: cfg.clone(),
        source_train: pool,
        source_valid,
        source_test: make(Split::SourceTest, cfg.splits.source_test)?,
        target_train: make(Split::TargetTrain, cfg.splits.target_train)?,
        target_test: make(Split::TargetTest, cfg.splits.target_test)?,
    })
}
