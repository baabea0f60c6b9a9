//! Character-conditioned maximum mean discrepancy with a bank of Gaussian
//! kernels.

use serde::{Deserialize, Serialize};

use super::assign::CharacterFeatureSets;
use crate::autodiff::{sq_dist_values, Tensor, Var};
use crate::error::{Error, Result};

/// Gaussian bandwidths `σ²` for `k(x, y) = exp(−‖x − y‖² / 2σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    bandwidths: Vec<f64>,
}

pub const DEFAULT_BANDWIDTH_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

impl KernelBank {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() || bandwidths.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidths must be a non-empty list of positive values, got {bandwidths:?}"
            )));
        }
        Ok(Self { bandwidths })
    }

    pub fn single(sigma_sq: f64) -> Result<Self> {
        Self::new(vec![sigma_sq])
    }

    /// Median pairwise squared distance of `pooled` rows, times each factor.
    /// Falls back to a unit median when fewer than two distinct rows exist.
    pub fn median_heuristic(pooled: &Tensor, factors: &[f64]) -> Result<Self> {
        let n = pooled.rows();
        let all = sq_dist_values(pooled, pooled);
        let mut upper: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| all[i * n + j])
            .collect();
        let median = if upper.is_empty() {
            0.0
        } else {
            let mid = upper.len() / 2;
            *upper.select_nth_unstable_by(mid, f64::total_cmp).1
        };
        let base = if median > 0.0 { median } else { 1.0 };
        Self::new(factors.iter().map(|f| f * base).collect())
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }
}

/// Biased (V-statistic) squared MMD averaged over the kernel bank.
pub fn mmd_squared<'g>(a: Var<'g>, b: Var<'g>, bank: &KernelBank) -> Result<Var<'g>> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "feature widths differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let daa = a.sq_dist(a);
    let dbb = b.sq_dist(b);
    let dab = a.sq_dist(b);
    let mut total: Option<Var<'g>> = None;
    for &s2 in &bank.bandwidths {
        let k = |d: Var<'g>| d.scale(-0.5 / s2).exp().mean();
        let term = k(daa) + k(dbb) - k(dab).scale(2.0);
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    Ok(total
        .expect("bank is non-empty")
        .scale(1.0 / bank.bandwidths.len() as f64))
}

/// Matching loss plus how many characters it averaged over.
#[derive(Clone, Copy, Debug)]
pub struct MatchingOutput<'g> {
    pub loss: Var<'g>,
    /// Characters present in both domains.
    pub shared: usize,
    /// Characters present in only one domain.
    pub unshared: usize,
}

/// Mean of [`mmd_squared`] over characters observed in both domains.
/// With no shared character the loss is a constant zero and `shared == 0`.
pub fn matching_loss<'g>(
    src: &CharacterFeatureSets<'g>,
    tgt: &CharacterFeatureSets<'g>,
    bank: &KernelBank,
) -> Result<MatchingOutput<'g>> {
    let mut terms = Vec::new();
    let mut unshared = 0;
    let mut graph = None;
    for (ch, a) in &src.sets {
        graph = Some(a.graph());
        match tgt.sets.get(ch) {
            Some(b) => terms.push(mmd_squared(*a, *b, bank)?),
            None => unshared += 1,
        }
    }
    unshared += tgt.sets.keys().filter(|k| !src.sets.contains_key(k)).count();
    let shared = terms.len();
    let loss = match terms.split_first() {
        Some((first, rest)) => rest
            .iter()
            .fold(*first, |acc, t| acc + *t)
            .scale(1.0 / shared as f64),
        None => {
            let g = graph
                .or_else(|| tgt.sets.values().next().map(|v| v.graph()))
                .ok_or_else(|| Error::InvalidArgument("matching loss of two empty sets".into()))?;
            g.scalar(0.0)
        }
    };
    Ok(MatchingOutput {
        loss,
        shared,
        unshared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn singleton_closed_form() {
        let g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let b = g.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let v = mmd_squared(a, b, &KernelBank::single(2.0).unwrap()).unwrap().item();
        assert!((v - (2.0 - 2.0 * (-1f64).exp())).abs() < 1e-12);
        assert!((v - 1.264241).abs() < 1e-6);
    }

    #[test]
    fn identical_sets_give_zero() {
        let g = Graph::new();
        let t = Tensor::matrix(3, 2, vec![0.1, 0.2, -1.0, 0.5, 2.0, 0.0]).unwrap();
        let a = g.constant(t.clone());
        let b = g.constant(t);
        let bank = KernelBank::new(vec![0.5, 1.0, 3.0]).unwrap();
        assert!(mmd_squared(a, b, &bank).unwrap().item().abs() < 1e-12);
    }

    #[test]
    fn bank_validation() {
        assert!(KernelBank::new(vec![]).is_err());
        assert!(KernelBank::new(vec![1.0, 0.0]).is_err());
        let pooled = Tensor::matrix(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        // pairwise: 1, 9, 4 -> median 4
        let bank = KernelBank::median_heuristic(&pooled, &[0.5, 1.0]).unwrap();
        assert_eq!(bank.bandwidths(), &[2.0, 4.0]);
        let one = Tensor::matrix(1, 1, vec![5.0]).unwrap();
        assert_eq!(KernelBank::median_heuristic(&one, &[1.0]).unwrap().bandwidths(), &[1.0]);
    }

    #[test]
    fn matching_counts_shared_characters() {
        let g = Graph::new();
        let m = |v: Vec<f64>| g.constant(Tensor::matrix(v.len(), 1, v).unwrap());
        let bank = KernelBank::single(1.0).unwrap();
        let src = CharacterFeatureSets {
            sets: [(0, m(vec![0.0])), (1, m(vec![1.0, 2.0]))].into(),
        };
        let tgt = CharacterFeatureSets {
            sets: [(1, m(vec![0.5])), (3, m(vec![9.0]))].into(),
        };
        let out = matching_loss(&src, &tgt, &bank).unwrap();
        assert_eq!((out.shared, out.unshared), (1, 2));
        let direct = mmd_squared(src.sets[&1], tgt.sets[&1], &bank).unwrap().item();
        assert_eq!(out.loss.item(), direct);

        let disjoint = CharacterFeatureSets {
            sets: [(5, m(vec![0.0]))].into(),
        };
        let out = matching_loss(&src, &disjoint, &bank).unwrap();
        assert_eq!((out.shared, out.loss.item()), (0, 0.0));
    }
}
