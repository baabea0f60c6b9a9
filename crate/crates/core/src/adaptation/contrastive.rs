//! Character centroids and the centroid-level NT-Xent objective shared by
//! the intra-domain discrimination loss and CDCL.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::assign::CharacterFeatureSets;
use crate::autodiff::{concat_cols, concat_rows, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Added to a logit to exclude it from the softmax.
const MASKED: f64 = -1e30;

/// Which features a centroid set summarizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Source,
    Target,
    Augmented,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Source => "source",
            View::Target => "target",
            View::Augmented => "augmented",
        }
    }
}

/// Mean feature vector per character, plus how many frames produced it.
#[derive(Clone, Debug)]
pub struct CentroidSet<'g> {
    pub view: View,
    pub centroids: BTreeMap<usize, (Var<'g>, usize)>,
}

impl<'g> CentroidSet<'g> {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn get(&self, ch: usize) -> Option<Var<'g>> {
        self.centroids.get(&ch).map(|(v, _)| *v)
    }

    pub fn symbols(&self) -> impl Iterator<Item = usize> + '_ {
        self.centroids.keys().copied()
    }

    fn graph(&self) -> Option<&'g Graph> {
        self.centroids.values().next().map(|(v, _)| v.graph())
    }

    /// Centroids stacked in symbol order.
    fn stacked(&self) -> Var<'g> {
        let rows: Vec<Var<'g>> = self.centroids.values().map(|(v, _)| *v).collect();
        concat_rows(&rows)
    }

    fn position(&self, ch: usize) -> usize {
        self.centroids.keys().position(|&k| k == ch).expect("present")
    }
}

pub fn compute_centroids<'g>(sets: &CharacterFeatureSets<'g>, view: View) -> CentroidSet<'g> {
    CentroidSet {
        view,
        centroids: sets
            .sets
            .iter()
            .map(|(&ch, v)| (ch, (v.mean_rows(), v.rows())))
            .collect(),
    }
}

/// Detached per-character means of plain feature rows grouped by symbol.
pub fn centroid_values(groups: &BTreeMap<usize, Vec<Vec<f64>>>) -> BTreeMap<usize, (Vec<f64>, usize)> {
    groups
        .iter()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(&ch, rows)| {
            let mut mean = vec![0.0; rows[0].len()];
            for r in rows {
                mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
            (ch, (mean, rows.len()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ContrastiveOutput<'g> {
    pub loss: Var<'g>,
    /// Characters present in both views, i.e. the number of anchors per
    /// direction.
    pub shared: usize,
}

/// Symmetrized NT-Xent over character centroids of two views.
///
/// For every character present in both views, its L2-normalized centroid in
/// one view is the anchor and the same character's centroid in the other
/// view is the positive. All remaining centroids of both views, except the
/// anchor itself, are negatives. Cosine similarities are divided by `tau`.
/// The loss averages both directions over all anchors. It is a constant zero
/// when no character is shared.
pub fn nt_xent_centroids<'g>(
    a: &CentroidSet<'g>,
    b: &CentroidSet<'g>,
    tau: f64,
) -> Result<ContrastiveOutput<'g>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let shared: Vec<usize> = a.symbols().filter(|k| b.centroids.contains_key(k)).collect();
    if shared.is_empty() {
        let g = a
            .graph()
            .or_else(|| b.graph())
            .ok_or_else(|| Error::InvalidArgument("contrastive loss of two empty views".into()))?;
        return Ok(ContrastiveOutput {
            loss: g.scalar(0.0),
            shared: 0,
        });
    }
    let za = a.stacked().normalize_rows();
    let zb = b.stacked().normalize_rows();
    let ab = direction(&shared, (a, za), (b, zb), tau);
    let ba = direction(&shared, (b, zb), (a, za), tau);
    Ok(ContrastiveOutput {
        loss: (ab + ba).scale(0.5),
        shared: shared.len(),
    })
}

fn direction<'g>(
    shared: &[usize],
    (own, z_own): (&CentroidSet<'g>, Var<'g>),
    (other, z_other): (&CentroidSet<'g>, Var<'g>),
    tau: f64,
) -> Var<'g> {
    let g = z_own.graph();
    let anchor_idx: Vec<usize> = shared.iter().map(|&c| own.position(c)).collect();
    let positive_idx: Vec<usize> = shared.iter().map(|&c| other.position(c)).collect();
    let anchors = z_own.select_rows(&anchor_idx);
    let to_other = anchors.matmul_t(z_other).scale(1.0 / tau);
    let n_own = own.len();
    let mut mask = vec![0.0; shared.len() * n_own];
    for (i, &j) in anchor_idx.iter().enumerate() {
        mask[i * n_own + j] = MASKED;
    }
    let to_own = anchors.matmul_t(z_own).scale(1.0 / tau)
        + g.constant(Tensor::matrix(shared.len(), n_own, mask).expect("non-empty"));
    let logits = concat_cols(&[to_other, to_own]);
    -logits.log_softmax().pick_per_row(&positive_idx).mean()
}

/// Intra-domain discrimination: target centroids against centroids of the
/// augmented target view.
pub fn discrimination_loss<'g>(
    target: &CentroidSet<'g>,
    augmented: &CentroidSet<'g>,
    tau: f64,
) -> Result<ContrastiveOutput<'g>> {
    nt_xent_centroids(target, augmented, tau)
}

/// Cross-domain contrastive baseline: the same objective with source and
/// target centroids as the two views.
pub fn cdcl_loss<'g>(
    source: &CentroidSet<'g>,
    target: &CentroidSet<'g>,
    tau: f64,
) -> Result<ContrastiveOutput<'g>> {
    nt_xent_centroids(source, target, tau)
}

/// Mean pairwise cosine distance between centroids.
pub fn mean_pairwise_cosine_distance(centroids: &[Vec<f64>]) -> Option<f64> {
    let n = centroids.len();
    if n < 2 {
        return None;
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = centroids[i].iter().zip(&centroids[j]).map(|(x, y)| x * y).sum();
            total += 1.0 - dot / (norm(&centroids[i]) * norm(&centroids[j]));
            pairs += 1;
        }
    }
    Some(total / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set<'g>(g: &'g Graph, rows: &[(usize, [f64; 2])]) -> CentroidSet<'g> {
        CentroidSet {
            view: View::Target,
            centroids: rows
                .iter()
                .map(|&(k, v)| (k, (g.param(Tensor::vector(v.to_vec())), 1)))
                .collect(),
        }
    }

    #[test]
    fn orthogonal_hand_case() {
        // anchor (1,0) vs positive (1,0) and negatives (0,1) twice: all
        // similarities are 1 or 0, so the loss is -log(e / (e + 2)).
        let g = Graph::new();
        let a = set(&g, &[(0, [1.0, 0.0]), (1, [0.0, 1.0])]);
        let b = set(&g, &[(0, [1.0, 0.0]), (2, [0.0, 1.0])]);
        let out = nt_xent_centroids(&a, &b, 1.0).unwrap();
        let e = 1f64.exp();
        assert_eq!(out.shared, 1);
        assert!((out.loss.item() - (-(e / (e + 2.0)).ln())).abs() < 1e-12);
        assert!((out.loss.item() - 0.551445).abs() < 1e-6);
    }

    #[test]
    fn single_shared_character_alone_costs_nothing() {
        let g = Graph::new();
        let a = set(&g, &[(3, [1.0, 2.0])]);
        let b = set(&g, &[(3, [-0.5, 0.1])]);
        let out = nt_xent_centroids(&a, &b, 0.1).unwrap();
        assert!(out.loss.item().abs() < 1e-12);
    }

    #[test]
    fn no_shared_character_is_a_flagged_zero() {
        let g = Graph::new();
        let a = set(&g, &[(0, [1.0, 0.0])]);
        let b = set(&g, &[(1, [0.0, 1.0])]);
        let out = nt_xent_centroids(&a, &b, 0.1).unwrap();
        assert_eq!((out.shared, out.loss.item()), (0, 0.0));
        assert!(nt_xent_centroids(&a, &b, 0.0).is_err());
    }

    #[test]
    fn invariant_to_centroid_scale() {
        let g = Graph::new();
        let rows = [(0, [0.3, -1.0]), (1, [2.0, 0.5]), (4, [-0.7, 0.2])];
        let scaled: Vec<_> = rows.iter().map(|&(k, [x, y])| (k, [7.5 * x, 7.5 * y])).collect();
        let other = set(&g, &[(0, [0.1, -0.9]), (1, [1.0, 1.0]), (2, [0.0, 1.0])]);
        let l1 = nt_xent_centroids(&set(&g, &rows), &other, 0.1).unwrap().loss.item();
        let l2 = nt_xent_centroids(&set(&g, &scaled), &other, 0.1).unwrap().loss.item();
        assert!((l1 - l2).abs() < 1e-10);
    }

    #[test]
    fn cosine_spread() {
        assert_eq!(mean_pairwise_cosine_distance(&[vec![1.0, 0.0]]), None);
        let d = mean_pairwise_cosine_distance(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![-3.0, 0.0]]).unwrap();
        assert!((d - (1.0 + 2.0 + 1.0) / 3.0).abs() < 1e-12);
    }
}
