use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::data::LabeledExample;
use crate::asr::{ctc_greedy_decode, AsrModel};
use crate::error::Result;

/// Minimum number of insertions, deletions and substitutions turning `a`
/// into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word errors over reference words. A hypothesis against an empty
/// reference scores its length.
pub fn word_error_rate(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    levenshtein(&r, &h) as f64 / r.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub word_errors: usize,
    pub words: usize,
    pub char_errors: usize,
    pub chars: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub utterances: usize,
    pub words: usize,
    pub word_errors: usize,
    pub chars: usize,
    pub char_errors: usize,
    pub wer: f64,
    pub cer: f64,
}

impl DomainSummary {
    fn add(&mut self, r: &UtteranceResult) {
        self.utterances += 1;
        self.words += r.words;
        self.word_errors += r.word_errors;
        self.chars += r.chars;
        self.char_errors += r.char_errors;
        self.wer = self.word_errors as f64 / self.words.max(1) as f64;
        self.cer = self.char_errors as f64 / self.chars.max(1) as f64;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub wer: f64,
    pub cer: f64,
    pub by_domain: BTreeMap<String, DomainSummary>,
    pub utterances: Vec<UtteranceResult>,
}

/// Greedy CTC transcription.
pub fn transcribe(model: &AsrModel, feats: &crate::autodiff::Tensor) -> Result<String> {
    let out = model.encode_eval(feats)?;
    let ids = ctc_greedy_decode(&out.log_probs, model.symbols.blank());
    let text = model.symbols.decode(&ids);
    Ok(text.split_whitespace().collect::<Vec<_>>().join(" "))
}

pub fn evaluate(model: &AsrModel, examples: &[LabeledExample], split: &str) -> Result<EvalReport> {
    let mut total = DomainSummary::default();
    let mut by_domain: BTreeMap<String, DomainSummary> = BTreeMap::new();
    let mut utterances = Vec::with_capacity(examples.len());
    for ex in examples {
        let hyp = transcribe(model, &ex.feats)?;
        let reference = ex.transcript.split_whitespace().collect::<Vec<_>>().join(" ");
        let rw: Vec<&str> = reference.split(' ').collect();
        let hw: Vec<&str> = hyp.split_whitespace().collect();
        let rc: Vec<char> = reference.chars().collect();
        let hc: Vec<char> = hyp.chars().collect();
        let r = UtteranceResult {
            id: ex.id.clone(),
            word_errors: levenshtein(&rw, &hw),
            words: rw.len(),
            char_errors: levenshtein(&rc, &hc),
            chars: rc.len(),
            reference,
            hypothesis: hyp,
        };
        total.add(&r);
        by_domain.entry(ex.domain.as_str().to_string()).or_default().add(&r);
        utterances.push(r);
    }
    Ok(EvalReport {
        split: split.to_string(),
        wer: total.wer,
        cer: total.cer,
        by_domain,
        utterances,
    })
}
