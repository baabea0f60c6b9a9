//! Compact joint CTC-attention recognizer.
//!
//! Encoder: frame stacking by the subsampling factor (a strided convolution
//! whose kernel equals its stride), a ReLU projection, sinusoidal positions,
//! then pre-norm self-attention/feed-forward blocks and a final layer norm.
//! The final normalized frames are the encoder features used by the
//! adaptation losses. A linear CTC head sits on top.
//!
//! Decoder: one layer. Previous-token embedding plus position, cross
//! attention over encoder features, a feed-forward residual, and an output
//! projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ctc::ctc_loss_var;
use super::symbols::SymbolTable;
use crate::autodiff::{concat_cols, BoundParams, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub feat_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub subsampling: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feat_dim: 80,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
            subsampling: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 || self.hidden == 0 || self.subsampling == 0 || self.heads == 0 {
            return Err(Error::InvalidArgument("encoder dimensions must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "hidden width {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    /// `⌈frames / subsampling⌉`.
    pub fn output_frames(&self, frames: usize) -> usize {
        frames.div_ceil(self.subsampling)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub ff_dim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { ff_dim: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}


/// Global per-dimension feature normalization, estimated on source data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cmvn {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Cmvn {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    pub fn estimate<'a>(feats: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for f in feats {
            if sum.is_empty() {
                sum = vec![0.0; f.cols()];
                sq = vec![0.0; f.cols()];
            }
            for r in 0..f.rows() {
                for (j, &v) in f.row(r).iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
            n += f.rows();
        }
        if n == 0 {
            return Err(Error::InvalidArgument("no frames to estimate statistics".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let inv_std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| 1.0 / (s / n as f64 - m * m).max(1e-8).sqrt())
            .collect();
        Ok(Self { mean, inv_std })
    }

    pub fn apply(&self, feats: &Tensor) -> Tensor {
        let c = feats.cols();
        let data = feats
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % c]) * self.inv_std[i % c])
            .collect();
        Tensor::matrix(feats.rows(), c, data).expect("same shape")
    }
}

/// Encoder features and CTC log-probabilities of one utterance, on a graph.
#[derive(Clone, Copy, Debug)]
pub struct Encoded<'g> {
    /// `T' × H`.
    pub features: Var<'g>,
    /// `T' × (N + 1)`, rows log-normalized.
    pub log_probs: Var<'g>,
}

/// Detached encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub frames: Tensor,
    pub log_probs: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsrModel {
    pub config: ModelConfig,
    pub symbols: SymbolTable,
    pub cmvn: Cmvn,
    pub params: ParamStore,
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive dims")
}

fn linear(p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) {
    p.insert(format!("{name}.w"), xavier(rng, fan_in, fan_out));
    p.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

fn norm(p: &mut ParamStore, name: &str, dim: usize) {
    p.insert(format!("{name}.g"), Tensor::full(&[dim], 1.0));
    p.insert(format!("{name}.b"), Tensor::zeros(&[dim]));
}

pub fn sinusoidal_positions(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf(-((i / 2 * 2) as f64) / dim as f64);
            let a = pos as f64 * rate;
            data[pos * dim + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Tensor::matrix(len, dim, data).expect("positive dims")
}

fn apply_linear<'g>(p: &BoundParams<'g>, name: &str, x: Var<'g>) -> Var<'g> {
    x.matmul(p.get(&format!("{name}.w")))
        .add_row(p.get(&format!("{name}.b")))
}

fn apply_norm<'g>(p: &BoundParams<'g>, name: &str, x: Var<'g>) -> Var<'g> {
    x.layer_norm(LN_EPS)
        .mul_row(p.get(&format!("{name}.g")))
        .add_row(p.get(&format!("{name}.b")))
}

/// Multi-head scaled dot-product attention of `q_in` over `kv_in`.
fn attention<'g>(
    p: &BoundParams<'g>,
    name: &str,
    q_in: Var<'g>,
    kv_in: Var<'g>,
    heads: usize,
) -> Var<'g> {
    let q = apply_linear(p, &format!("{name}.q"), q_in);
    let k = apply_linear(p, &format!("{name}.k"), kv_in);
    let v = apply_linear(p, &format!("{name}.v"), kv_in);
    let h = q.cols();
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let outs: Vec<Var<'g>> = (0..heads)
        .map(|i| {
            let (s, e) = (i * d, (i + 1) * d);
            let qh = q.slice_cols(s, e);
            let kh = k.slice_cols(s, e);
            let vh = v.slice_cols(s, e);
            qh.matmul_t(kh).scale(scale).softmax().matmul(vh)
        })
        .collect();
    let cat = if heads == 1 { outs[0] } else { concat_cols(&outs) };
    apply_linear(p, &format!("{name}.o"), cat)
}

impl AsrModel {
    pub fn new(config: ModelConfig, symbols: SymbolTable, seed: u64) -> Result<Self> {
        config.encoder.validate()?;
        let e = &config.encoder;
        let h = e.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        linear(&mut p, &mut rng, "enc.in", e.feat_dim * e.subsampling, h);
        for l in 0..e.layers {
            let pre = format!("enc.l{l}");
            norm(&mut p, &format!("{pre}.ln1"), h);
            for part in ["q", "k", "v", "o"] {
                linear(&mut p, &mut rng, &format!("{pre}.att.{part}"), h, h);
            }
            norm(&mut p, &format!("{pre}.ln2"), h);
            linear(&mut p, &mut rng, &format!("{pre}.ff1"), h, e.ff_dim);
            linear(&mut p, &mut rng, &format!("{pre}.ff2"), e.ff_dim, h);
        }
        norm(&mut p, "enc.out", h);
        linear(&mut p, &mut rng, "ctc", h, symbols.ctc_width());

        let dw = symbols.decoder_width();
        p.insert("dec.emb", xavier(&mut rng, dw, h));
        for part in ["q", "k", "v", "o"] {
            linear(&mut p, &mut rng, &format!("dec.att.{part}"), h, h);
        }
        norm(&mut p, "dec.ln", h);
        linear(&mut p, &mut rng, "dec.ff1", h, config.decoder.ff_dim);
        linear(&mut p, &mut rng, "dec.ff2", config.decoder.ff_dim, h);
        linear(&mut p, &mut rng, "dec.out", h, dw);

        Ok(Self {
            cmvn: Cmvn::identity(e.feat_dim),
            config,
            symbols,
            params: p,
        })
    }

    /// Normalizes and stacks frames: `[T, F] -> [⌈T/s⌉, s·F]`, zero-padded.
    pub fn prepare_input(&self, feats: &Tensor) -> Result<Tensor> {
        let e = &self.config.encoder;
        if feats.cols() != e.feat_dim {
            return Err(Error::Shape(format!(
                "features have {} dims, model expects {}",
                feats.cols(),
                e.feat_dim
            )));
        }
        let normed = self.cmvn.apply(feats);
        let out_t = e.output_frames(feats.rows());
        let mut data = normed.into_data();
        data.resize(out_t * e.subsampling * e.feat_dim, 0.0);
        Tensor::matrix(out_t, e.subsampling * e.feat_dim, data)
    }

    pub fn encode<'g>(&self, p: &BoundParams<'g>, graph: &'g Graph, feats: &Tensor) -> Result<Encoded<'g>> {
        let e = &self.config.encoder;
        let x = graph.constant(self.prepare_input(feats)?);
        let t = x.rows();
        let pos = graph.constant(sinusoidal_positions(t, e.hidden));
        let mut h = apply_linear(p, "enc.in", x).relu() + pos;
        for l in 0..e.layers {
            let pre = format!("enc.l{l}");
            let a = apply_norm(p, &format!("{pre}.ln1"), h);
            h = h + attention(p, &format!("{pre}.att"), a, a, e.heads);
            let f = apply_norm(p, &format!("{pre}.ln2"), h);
            let ff = apply_linear(p, &format!("{pre}.ff2"), apply_linear(p, &format!("{pre}.ff1"), f).relu());
            h = h + ff;
        }
        let features = apply_norm(p, "enc.out", h);
        let log_probs = apply_linear(p, "ctc", features).log_softmax();
        Ok(Encoded {
            features,
            log_probs,
        })
    }

    /// Teacher-forced cross-entropy of the decoder, averaged over the
    /// `len(labels) + 1` predicted positions (labels then end token).
    pub fn attention_loss<'g>(
        &self,
        p: &BoundParams<'g>,
        features: Var<'g>,
        labels: &[usize],
    ) -> Result<Var<'g>> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("attention loss needs labels".into()));
        }
        let logits = self.decoder_logits(p, features, labels);
        let mut targets = labels.to_vec();
        targets.push(self.symbols.sos_eos());
        Ok(-logits.log_softmax().pick_per_row(&targets).mean())
    }

    /// Decoder logits for inputs `[sos] + labels`: `(len + 1) × (N + 2)`.
    pub fn decoder_logits<'g>(&self, p: &BoundParams<'g>, features: Var<'g>, labels: &[usize]) -> Var<'g> {
        let graph = features.graph();
        let h = self.config.encoder.hidden;
        let mut inputs = vec![self.symbols.sos_eos()];
        inputs.extend_from_slice(labels);
        let pos = graph.constant(sinusoidal_positions(inputs.len(), h));
        let x = p.get("dec.emb").select_rows(&inputs) + pos;
        let x = x + attention(p, "dec.att", x, features, self.config.encoder.heads);
        let f = apply_norm(p, "dec.ln", x);
        let x = x + apply_linear(p, "dec.ff2", apply_linear(p, "dec.ff1", f).relu());
        apply_linear(p, "dec.out", x)
    }

    pub fn ctc_loss<'g>(&self, enc: &Encoded<'g>, labels: &[usize]) -> Result<Var<'g>> {
        ctc_loss_var(enc.log_probs, labels, self.symbols.blank())
    }

    /// Inference pass with frozen parameters.
    pub fn encode_eval(&self, feats: &Tensor) -> Result<EncodedSequence> {
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let enc = self.encode(&p, &g, feats)?;
        Ok(EncodedSequence {
            frames: enc.features.value(),
            log_probs: enc.log_probs.value(),
        })
    }
}

/// `λ·L_CTC + (1 − λ)·L_ATT`.
pub fn asr_loss(ctc: f64, att: f64, lambda: f64) -> f64 {
    lambda * ctc + (1.0 - lambda) * att
}

pub fn asr_loss_var<'g>(ctc: Var<'g>, att: Var<'g>, lambda: f64) -> Var<'g> {
    ctc.scale(lambda) + att.scale(1.0 - lambda)
}
