use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{BatchSampler, LabeledExample};
use crate::asr::{asr_loss_var, AsrModel, Cmvn, SymbolTable};
use crate::autodiff::{clip_grad_norm, Adam, BoundParams, Graph, Var};
use crate::error::{Error, Result};

/// One optimizer step of source pretraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub l_ctc: f64,
    pub l_att: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub model: AsrModel,
    pub records: Vec<PretrainRecord>,
}

impl PretrainOutcome {
    /// Mean loss per epoch, in order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in &self.records {
            if out.len() <= r.epoch {
                out.resize(r.epoch + 1, (0.0, 0));
            }
            out[r.epoch].0 += r.loss;
            out[r.epoch].1 += 1;
        }
        out.into_iter().filter(|(_, n)| *n > 0).map(|(s, n)| s / n as f64).collect()
    }
}

/// Joint CTC/attention loss of a batch, averaged over utterances.
pub(crate) struct BatchLoss<'g> {
    pub asr: Var<'g>,
    pub ctc: f64,
    pub att: f64,
    /// Encoder outputs, in batch order.
    pub encoded: Vec<crate::asr::Encoded<'g>>,
}

pub(crate) fn supervised_loss<'g>(
    model: &AsrModel,
    p: &BoundParams<'g>,
    g: &'g Graph,
    batch: &[&LabeledExample],
    ctc_weight: f64,
) -> Result<BatchLoss<'g>> {
    let mut total: Option<Var<'g>> = None;
    let (mut ctc_sum, mut att_sum) = (0.0, 0.0);
    let mut encoded = Vec::with_capacity(batch.len());
    for ex in batch {
        let enc = model.encode(p, g, &ex.feats)?;
        let ctc = model.ctc_loss(&enc, &ex.labels)?;
        let att = model.attention_loss(p, enc.features, &ex.labels)?;
        ctc_sum += ctc.item();
        att_sum += att.item();
        let l = asr_loss_var(ctc, att, ctc_weight);
        total = Some(total.map_or(l, |t| t + l));
        encoded.push(enc);
    }
    let n = batch.len() as f64;
    Ok(BatchLoss {
        asr: total.expect("non-empty batch").scale(1.0 / n),
        ctc: ctc_sum / n,
        att: att_sum / n,
        encoded,
    })
}

pub(crate) fn ensure_finite(step: u64, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            step,
            what: what.to_string(),
        })
    }
}

/// Trains a fresh model on labelled source examples.
pub fn pretrain(examples: &[LabeledExample], symbols: &SymbolTable, cfg: &ExperimentConfig) -> Result<PretrainOutcome> {
    pretrain_with(examples, symbols, cfg, |_| {})
}

/// Like [`pretrain`], calling `on_step` after every update.
pub fn pretrain_with(
    examples: &[LabeledExample],
    symbols: &SymbolTable,
    cfg: &ExperimentConfig,
    mut on_step: impl FnMut(&PretrainRecord),
) -> Result<PretrainOutcome> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("pretraining needs labelled examples".into()));
    }
    let mut model = AsrModel::new(cfg.model.clone(), symbols.clone(), cfg.seed)?;
    model.cmvn = Cmvn::estimate(examples.iter().map(|e| &e.feats))?;
    let pc = &cfg.pretrain;
    let mut adam = Adam::new(pc.optimizer.clone());
    let mut sampler = BatchSampler::new(examples.len(), cfg.seed, 1);
    let mut records = Vec::with_capacity(pc.steps as usize);
    for step in 1..=pc.steps {
        let epoch = sampler.epoch();
        let batch: Vec<&LabeledExample> = sampler
            .next_batch(pc.batch_size.min(examples.len()))
            .into_iter()
            .map(|i| &examples[i])
            .collect();
        let g = Graph::new();
        let p = model.params.bind(&g);
        let loss = supervised_loss(&model, &p, &g, &batch, cfg.ctc_weight)?;
        let value = loss.asr.item();
        ensure_finite(step, "loss", value)?;
        let grads = g.backward(loss.asr)?;
        let mut grads = p.collect_grads(&grads);
        let grad_norm = clip_grad_norm(&mut grads, pc.clip_norm);
        ensure_finite(step, "gradient norm", grad_norm)?;
        let lr = adam.step(&mut model.params, &grads)?;
        let rec = PretrainRecord {
            step,
            epoch,
            loss: value,
            l_ctc: loss.ctc,
            l_att: loss.att,
            lr,
            grad_norm,
        };
        on_step(&rec);
        records.push(rec);
    }
    Ok(PretrainOutcome { model, records })
}
