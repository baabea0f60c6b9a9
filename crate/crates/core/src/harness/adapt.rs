use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, PseudoLabelMode};
use super::data::{extractor, BatchSampler, LabeledExample, UnlabeledExample};
use super::train::{ensure_finite, supervised_loss};
use crate::adaptation::{
    assign_frame_labels, cdcl_loss, compute_centroids, dat_loss, discrimination_loss, gather_batch,
    init_discriminator, matching_loss, total_loss_var, CharacterFeatureSets, FrameAssignment, KernelBank,
    KernelPolicy, LossBreakdown, Method, View, DAT_PREFIX,
};
use crate::asr::{AsrModel, Encoded};
use crate::autodiff::{clip_grad_norm, Adam, Graph, Var};
use crate::error::{Error, Result};
use crate::features::augment_chain;

#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub model: AsrModel,
    pub records: Vec<LossBreakdown>,
}

impl AdaptOutcome {
    pub fn skipped_steps(&self) -> usize {
        self.records.iter().filter(|r| r.skipped).count()
    }
}

/// Adapts `model` to unlabeled target audio with the configured method,
/// keeping the supervised loss on labelled source batches.
pub fn adapt(
    model: &AsrModel,
    source: &[LabeledExample],
    target: &[UnlabeledExample],
    cfg: &ExperimentConfig,
) -> Result<AdaptOutcome> {
    adapt_with(model, source, target, cfg, |_| {})
}

pub fn adapt_with(
    model: &AsrModel,
    source: &[LabeledExample],
    target: &[UnlabeledExample],
    cfg: &ExperimentConfig,
    mut on_step: impl FnMut(&LossBreakdown),
) -> Result<AdaptOutcome> {
    let ac = &cfg.adaptation;
    ac.validate()?;
    let method = ac.method;
    if method == Method::So {
        return Ok(AdaptOutcome {
            model: model.clone(),
            records: Vec::new(),
        });
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("adaptation needs source and target examples".into()));
    }
    let run = &cfg.adapt;
    let blank = model.symbols.blank();
    let fx = extractor(cfg)?;
    let mut model = model.clone();
    if method.uses_discriminator() {
        init_discriminator(&mut model.params, cfg.model.encoder.hidden, run.discriminator_width, cfg.seed);
    }
    let frozen: Option<Vec<FrameAssignment>> = match run.pseudo_labels {
        PseudoLabelMode::Frozen if method.needs_pseudo_labels() => Some(
            target
                .iter()
                .map(|t| Ok(assign_frame_labels(&model.encode_eval(&t.feats)?.log_probs)))
                .collect::<Result<_>>()?,
        ),
        _ => None,
    };
    let (w_ma, w_di) = ac.effective_weights();
    let b = run.batch_size;
    let mut adam = Adam::new(run.optimizer.clone());
    let mut src_sampler = BatchSampler::new(source.len(), cfg.seed, 11);
    let mut tgt_sampler = BatchSampler::new(target.len(), cfg.seed, 12);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ run.augment.seed);
    aug_rng.set_stream(13);
    let mut records = Vec::with_capacity(run.steps as usize);

    for step in 1..=run.steps {
        let src_batch: Vec<&LabeledExample> = src_sampler
            .next_batch(b.min(source.len()))
            .into_iter()
            .map(|i| &source[i])
            .collect();
        let tgt_idx = tgt_sampler.next_batch(b.min(target.len()));

        let g = Graph::new();
        let p = model.params.bind(&g);
        let sup = supervised_loss(&model, &p, &g, &src_batch, cfg.ctc_weight)?;
        let tgt_enc: Vec<Encoded<'_>> = tgt_idx
            .iter()
            .map(|&j| model.encode(&p, &g, &target[j].feats))
            .collect::<Result<_>>()?;

        let zero = g.scalar(0.0);
        let (mut l_ma, mut l_di, mut shared) = (zero, zero, 0usize);
        let mut skipped = false;
        match method {
            Method::So => unreachable!(),
            Method::Dat => {
                let s: Vec<Var<'_>> = sup.encoded.iter().map(|e| e.features).collect();
                let t: Vec<Var<'_>> = tgt_enc.iter().map(|e| e.features).collect();
                let progress = step as f64 / run.steps as f64;
                l_ma = dat_loss(&p, &s, &t, ac.grl_strength * grl_ramp(progress))?.loss;
            }
            Method::CMatch | Method::Madi | Method::Cdcl => {
                let src_labels: Vec<FrameAssignment> = sup
                    .encoded
                    .iter()
                    .map(|e| assign_frame_labels(&e.log_probs.value()))
                    .collect();
                let tgt_labels: Vec<FrameAssignment> = match &frozen {
                    Some(f) => tgt_idx.iter().map(|&j| f[j].clone()).collect(),
                    None => tgt_enc.iter().map(|e| assign_frame_labels(&e.log_probs.value())).collect(),
                };
                let src_sets = sets(&sup.encoded, &src_labels, blank);
                let tgt_sets = sets(&tgt_enc, &tgt_labels, blank);
                if method.uses_matching() {
                    let bank = kernel_bank(&ac.kernel, &src_sets, &tgt_sets)?;
                    if !src_sets.is_empty() && !tgt_sets.is_empty() {
                        let m = matching_loss(&src_sets, &tgt_sets, &bank)?;
                        l_ma = m.loss;
                        shared = m.shared;
                    }
                }
                if method.uses_discrimination() {
                    let aug_enc: Vec<Encoded<'_>> = tgt_idx
                        .iter()
                        .map(|&j| {
                            let w = augment_chain(&target[j].waveform, &run.augment, &mut aug_rng)?;
                            model.encode(&p, &g, &fx.compute(&w)?.frames)
                        })
                        .collect::<Result<_>>()?;
                    let aug_labels: Vec<FrameAssignment> =
                        aug_enc.iter().map(|e| assign_frame_labels(&e.log_probs.value())).collect();
                    let aug_sets = sets(&aug_enc, &aug_labels, blank);
                    if !tgt_sets.is_empty() && !aug_sets.is_empty() {
                        let d = discrimination_loss(
                            &compute_centroids(&tgt_sets, View::Target),
                            &compute_centroids(&aug_sets, View::Augmented),
                            ac.tau,
                        )?;
                        l_di = d.loss;
                    }
                }
                if method.uses_cdcl() && !src_sets.is_empty() && !tgt_sets.is_empty() {
                    let d = cdcl_loss(
                        &compute_centroids(&src_sets, View::Source),
                        &compute_centroids(&tgt_sets, View::Target),
                        ac.tau,
                    )?;
                    l_di = d.loss;
                    shared = d.shared;
                }
                skipped = shared == 0;
            }
        }

        let total = total_loss_var(sup.asr, l_ma, l_di, w_ma, w_di);
        let mut rec = LossBreakdown {
            step,
            l_asr: sup.asr.item(),
            l_ctc: sup.ctc,
            l_att: sup.att,
            l_ma: l_ma.item(),
            l_di: l_di.item(),
            total: total.item(),
            shared_char_count: shared,
            skipped,
            lr: 0.0,
        };
        ensure_finite(step, "total loss", rec.total)?;
        if !skipped {
            let grads = g.backward(total)?;
            let mut grads = p.collect_grads(&grads);
            let norm = clip_grad_norm(&mut grads, run.clip_norm);
            ensure_finite(step, "gradient norm", norm)?;
            rec.lr = adam.step(&mut model.params, &grads)?;
        }
        on_step(&rec);
        records.push(rec);
    }
    model.params.retain(|k, _| !k.starts_with(DAT_PREFIX));
    Ok(AdaptOutcome { model, records })
}

/// Reversal strength ramps from 0 to 1 over training, `2/(1 + e^(−10p)) − 1`,
/// so the domain classifier gets a head start on the encoder.
pub fn grl_ramp(progress: f64) -> f64 {
    2.0 / (1.0 + (-10.0 * progress).exp()) - 1.0
}

fn sets<'g>(enc: &[Encoded<'g>], labels: &[FrameAssignment], blank: usize) -> CharacterFeatureSets<'g> {
    let items: Vec<(Var<'g>, &FrameAssignment)> = enc.iter().map(|e| e.features).zip(labels).collect();
    gather_batch(&items, blank)
}

fn kernel_bank(policy: &KernelPolicy, a: &CharacterFeatureSets<'_>, b: &CharacterFeatureSets<'_>) -> Result<KernelBank> {
    match policy {
        KernelPolicy::Fixed { bandwidths } => KernelBank::new(bandwidths.clone()),
        KernelPolicy::Median { factors } => {
            let rows: Vec<Vec<f64>> = [a.pooled(), b.pooled()]
                .into_iter()
                .flatten()
                .flat_map(|t| (0..t.rows()).map(move |r| t.row(r).to_vec()).collect::<Vec<_>>())
                .collect();
            if rows.is_empty() {
                return KernelBank::new(factors.clone());
            }
            KernelBank::median_heuristic(&crate::autodiff::Tensor::from_rows(&rows)?, factors)
        }
    }
}
