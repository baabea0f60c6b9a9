use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::asr::argmax_rows;
use crate::autodiff::{concat_rows, Tensor, Var};

/// Symbol id per encoded frame, blank included.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAssignment(pub Vec<usize>);

impl FrameAssignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Frame indices per non-blank symbol.
    pub fn frames_by_symbol(&self, blank: usize) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (t, &k) in self.0.iter().enumerate() {
            if k != blank {
                out.entry(k).or_default().push(t);
            }
        }
        out
    }
}

/// Per-frame argmax of the CTC posteriors; ties go to the lowest id.
pub fn assign_frame_labels(log_probs: &Tensor) -> FrameAssignment {
    FrameAssignment(argmax_rows(log_probs))
}

/// Encoder frames grouped by assigned character. Each entry is an
/// `n × H` matrix with `n ≥ 1`; the blank never appears as a key.
#[derive(Clone, Debug, Default)]
pub struct CharacterFeatureSets<'g> {
    pub sets: BTreeMap<usize, Var<'g>>,
}

impl<'g> CharacterFeatureSets<'g> {
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn count(&self, ch: usize) -> usize {
        self.sets.get(&ch).map_or(0, |v| v.rows())
    }

    pub fn total_frames(&self) -> usize {
        self.sets.values().map(|v| v.rows()).sum()
    }

    /// Every stored vector stacked in key order, detached.
    pub fn pooled(&self) -> Option<Tensor> {
        let rows: Vec<Vec<f64>> = self
            .sets
            .values()
            .flat_map(|v| {
                let t = v.value();
                (0..t.rows()).map(|r| t.row(r).to_vec()).collect::<Vec<_>>()
            })
            .collect();
        (!rows.is_empty()).then(|| Tensor::from_rows(&rows).expect("equal widths"))
    }
}

/// Groups the frames of one utterance by assigned non-blank symbol.
pub fn gather_character_features<'g>(
    features: Var<'g>,
    assignment: &FrameAssignment,
    blank: usize,
) -> CharacterFeatureSets<'g> {
    gather_batch(&[(features, assignment)], blank)
}

/// Like [`gather_character_features`] across a batch of utterances.
pub fn gather_batch<'g>(
    items: &[(Var<'g>, &FrameAssignment)],
    blank: usize,
) -> CharacterFeatureSets<'g> {
    let mut parts: BTreeMap<usize, Vec<Var<'g>>> = BTreeMap::new();
    for (feats, a) in items {
        assert_eq!(feats.rows(), a.len(), "assignment length must match frames");
        for (ch, idx) in a.frames_by_symbol(blank) {
            parts.entry(ch).or_default().push(feats.select_rows(&idx));
        }
    }
    let sets = parts
        .into_iter()
        .map(|(ch, vs)| {
            let v = if vs.len() == 1 { vs[0] } else { concat_rows(&vs) };
            (ch, v)
        })
        .collect();
    CharacterFeatureSets { sets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn one_hot_rows_and_ties() {
        let z = -50.0;
        let lp = Tensor::matrix(3, 3, vec![0.0, z, z, z, z, 0.0, z, 0.0, z]).unwrap();
        assert_eq!(assign_frame_labels(&lp).0, vec![0, 2, 1]);
        let uniform = Tensor::matrix(1, 3, vec![-(3f64).ln(); 3]).unwrap();
        assert_eq!(assign_frame_labels(&uniform).0, vec![0]);
    }

    #[test]
    fn grouping_examples() {
        let g = Graph::new();
        let f = g.constant(Tensor::matrix(3, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap());
        let blank = 2;
        let sets = gather_character_features(f, &FrameAssignment(vec![0, blank, 0]), blank);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets.sets[&0].value().data(), &[1.0, 1.0, 3.0, 3.0]);

        let none = gather_character_features(f, &FrameAssignment(vec![blank; 3]), blank);
        assert!(none.is_empty());

        let each = gather_character_features(f, &FrameAssignment(vec![1, 0, blank]), blank);
        assert_eq!(each.count(0), 1);
        assert_eq!(each.count(1), 1);
    }

    #[test]
    fn batch_concatenates_across_utterances() {
        let g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let fa = FrameAssignment(vec![0, 1]);
        let fb = FrameAssignment(vec![1, 0]);
        let sets = gather_batch(&[(a, &fa), (b, &fb)], 5);
        assert_eq!(sets.sets[&0].value().data(), &[1.0, 4.0]);
        assert_eq!(sets.sets[&1].value().data(), &[2.0, 3.0]);
        assert_eq!(sets.total_frames(), 4);
    }
}
