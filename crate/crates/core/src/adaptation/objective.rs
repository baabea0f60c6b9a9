use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mmd::DEFAULT_BANDWIDTH_FACTORS;
use crate::autodiff::Var;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Source only: no adaptation.
    So,
    /// Domain-adversarial training.
    Dat,
    /// Character-level MMD matching only.
    CMatch,
    /// Cross-domain centroid contrast.
    Cdcl,
    /// Matching plus intra-domain discrimination.
    Madi,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::So, Method::Dat, Method::CMatch, Method::Cdcl, Method::Madi];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::So => "so",
            Method::Dat => "dat",
            Method::CMatch => "cmatch",
            Method::Cdcl => "cdcl",
            Method::Madi => "madi",
        }
    }

    /// Display name used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::So => "SO",
            Method::Dat => "DAT",
            Method::CMatch => "CMatch",
            Method::Cdcl => "CDCL",
            Method::Madi => "MADI",
        }
    }

    pub fn uses_matching(self) -> bool {
        matches!(self, Method::CMatch | Method::Madi)
    }

    pub fn uses_discrimination(self) -> bool {
        self == Method::Madi
    }

    pub fn uses_augmentation(self) -> bool {
        self == Method::Madi
    }

    pub fn uses_cdcl(self) -> bool {
        self == Method::Cdcl
    }

    pub fn uses_discriminator(self) -> bool {
        self == Method::Dat
    }

    pub fn needs_pseudo_labels(self) -> bool {
        matches!(self, Method::CMatch | Method::Cdcl | Method::Madi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// How kernel bandwidths are chosen for the matching loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelPolicy {
    /// Fixed list of `σ²`.
    Fixed { bandwidths: Vec<f64> },
    /// Median pairwise squared distance of the batch's pooled character
    /// frames, times each factor.
    Median { factors: Vec<f64> },
}

impl Default for KernelPolicy {
    fn default() -> Self {
        KernelPolicy::Median {
            factors: DEFAULT_BANDWIDTH_FACTORS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    pub method: Method,
    /// Weight of the matching loss.
    pub alpha: f64,
    /// Weight of the discrimination loss; also weights CDCL.
    pub beta: f64,
    pub tau: f64,
    /// Peak gradient-reversal strength for DAT; ramped up from 0 over the run.
    pub grl_strength: f64,
    /// Weight of the DAT domain-classifier loss.
    pub dat_weight: f64,
    pub kernel: KernelPolicy,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            method: Method::Madi,
            alpha: 5.0,
            beta: 5.0,
            tau: 0.1,
            grl_strength: 0.1,
            dat_weight: 0.1,
            kernel: KernelPolicy::default(),
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if [self.alpha, self.beta, self.grl_strength, self.dat_weight]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return bad("alpha, beta, grl_strength and dat_weight must be non-negative".into());
        }
        if self.method == Method::Madi && !(self.alpha > 0.0 && self.beta > 0.0) {
            return bad("MADI requires alpha > 0 and beta > 0".into());
        }
        match &self.kernel {
            KernelPolicy::Fixed { bandwidths: v } | KernelPolicy::Median { factors: v }
                if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) =>
            {
                bad("kernel list must be non-empty and positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Weights `(matching, discrimination)` actually applied for the method.
    pub fn effective_weights(&self) -> (f64, f64) {
        match self.method {
            Method::So => (0.0, 0.0),
            Method::CMatch => (self.alpha, 0.0),
            Method::Madi => (self.alpha, self.beta),
            Method::Dat => (self.dat_weight, 0.0),
            Method::Cdcl => (0.0, self.beta),
        }
    }
}

/// Every loss term of one adaptation step, as logged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: u64,
    pub l_asr: f64,
    pub l_ctc: f64,
    pub l_att: f64,
    /// Matching term: character MMD, or the domain classifier loss for DAT.
    pub l_ma: f64,
    /// Discrimination term: intra-domain NT-Xent, or CDCL.
    pub l_di: f64,
    pub total: f64,
    pub shared_char_count: usize,
    /// Set when the batch had no shared character and the adaptation terms
    /// were zero.
    pub skipped: bool,
    pub lr: f64,
}

/// `l_asr + alpha·l_ma + beta·l_di`.
pub fn total_loss(parts: &LossBreakdown, alpha: f64, beta: f64) -> f64 {
    parts.l_asr + alpha * parts.l_ma + beta * parts.l_di
}

pub fn total_loss_var<'g>(l_asr: Var<'g>, l_ma: Var<'g>, l_di: Var<'g>, alpha: f64, beta: f64) -> Var<'g> {
    let mut t = l_asr;
    if alpha != 0.0 {
        t = t + l_ma.scale(alpha);
    }
    if beta != 0.0 {
        t = t + l_di.scale(beta);
    }
    t
}
