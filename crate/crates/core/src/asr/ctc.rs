//! Connectionist temporal classification: log-space forward-backward loss and
//! greedy decoding.

use crate::autodiff::{log_sum_exp, Tensor, Var};
use crate::error::{Error, Result};

/// Loss value and its gradient with respect to every log-probability entry.
#[derive(Clone, Debug)]
pub struct CtcOutput {
    pub loss: f64,
    pub grad: Tensor,
}

/// Minimum number of frames any alignment of `labels` needs: one per label
/// plus a blank between each pair of equal neighbours.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// `−log P(labels | log_probs)` summed over all alignments.
///
/// `log_probs` is `T × V`; its rows are treated as free inputs and need not
/// be normalized, so the gradient is exact for any input.
pub fn ctc_loss(log_probs: &Tensor, labels: &[usize], blank: usize) -> Result<CtcOutput> {
    let (t_len, v) = (log_probs.rows(), log_probs.cols());
    if blank >= v || labels.iter().any(|&l| l >= v || l == blank) {
        return Err(Error::InvalidArgument(format!(
            "labels must be non-blank ids below {v}"
        )));
    }
    let need = min_frames(labels);
    if need > t_len {
        return Err(Error::InfeasibleAlignment {
            labels: labels.len(),
            required: need,
            frames: t_len,
        });
    }

    // blank-expanded sequence: blank, l1, blank, l2, ..., blank
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(labels.iter().flat_map(|&l| [l, blank]))
        .collect();
    let s_len = ext.len();
    let lp = |t: usize, k: usize| log_probs.at(t, k);
    let neg = f64::NEG_INFINITY;
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let mut alpha = vec![neg; t_len * s_len];
    alpha[0] = lp(0, ext[0]);
    if s_len > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = lae(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = lae(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = acc + lp(t, ext[s]);
        }
    }

    let mut beta = vec![neg; t_len * s_len];
    let last = (t_len - 1) * s_len;
    beta[last + s_len - 1] = lp(t_len - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(t_len - 1, ext[s_len - 2]);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = lae(acc, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = lae(acc, next[s + 2]);
            }
            beta[t * s_len + s] = acc + lp(t, ext[s]);
        }
    }

    let tail = &alpha[last..];
    let log_p = if s_len > 1 {
        lae(tail[s_len - 1], tail[s_len - 2])
    } else {
        tail[0]
    };

    // dL/dlp[t,k] = −exp(logsumexp_{s: ext[s]=k}(α+β) − lp[t,k] − log P)
    let mut grad = vec![0.0; t_len * v];
    let mut per_k = vec![Vec::new(); v];
    for t in 0..t_len {
        per_k.iter_mut().for_each(Vec::clear);
        for s in 0..s_len {
            let ab = alpha[t * s_len + s] + beta[t * s_len + s];
            if ab > neg {
                per_k[ext[s]].push(ab);
            }
        }
        for (k, terms) in per_k.iter().enumerate() {
            if !terms.is_empty() {
                grad[t * v + k] = -(log_sum_exp(terms) - lp(t, k) - log_p).exp();
            }
        }
    }
    Ok(CtcOutput {
        loss: -log_p,
        grad: Tensor::matrix(t_len, v, grad)?,
    })
}

/// Records the CTC loss of `log_probs` on its graph.
pub fn ctc_loss_var<'g>(log_probs: Var<'g>, labels: &[usize], blank: usize) -> Result<Var<'g>> {
    let out = log_probs.with_value(|lp| ctc_loss(lp, labels, blank))?;
    Ok(log_probs.scalar_with_grad(out.loss, out.grad))
}

/// Per-row argmax; ties go to the lowest id.
pub fn argmax_rows(m: &Tensor) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (k, &x) in row.iter().enumerate().skip(1) {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Collapses repeats, then removes blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

pub fn ctc_greedy_decode(log_probs: &Tensor, blank: usize) -> Vec<usize> {
    collapse_path(&argmax_rows(log_probs), blank)
}

fn lae(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_frame_hand_case() {
        let half = 0.5f64.ln();
        let lp = Tensor::matrix(2, 2, vec![half; 4]).unwrap();
        let out = ctc_loss(&lp, &[0], 1).unwrap();
        assert!((out.loss - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((out.loss - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn certain_alignment_costs_nothing() {
        // frames: a, blank, b with probability one
        let z = f64::NEG_INFINITY;
        let lp = Tensor::matrix(3, 3, vec![0.0, z, z, z, z, 0.0, z, 0.0, z]).unwrap();
        let out = ctc_loss(&lp, &[0, 1], 2).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn infeasible_is_an_error() {
        let lp = Tensor::matrix(2, 3, vec![-1.0; 6]).unwrap();
        assert!(matches!(
            ctc_loss(&lp, &[0, 0], 2),
            Err(Error::InfeasibleAlignment { required: 3, .. })
        ));
        assert!(ctc_loss(&lp, &[0, 1, 0], 2).is_err());
        assert!(ctc_loss(&lp, &[0, 1], 2).is_ok());
    }

    #[test]
    fn empty_label_is_all_blank() {
        let lp = Tensor::matrix(2, 2, vec![(0.3f64).ln(), (0.7f64).ln(), (0.6f64).ln(), (0.4f64).ln()])
            .unwrap();
        let out = ctc_loss(&lp, &[], 1).unwrap();
        assert!((out.loss + (0.7f64 * 0.4).ln()).abs() < 1e-12);
    }

    #[test]
    fn greedy_examples() {
        let blank = 2;
        assert_eq!(collapse_path(&[0, 0, blank, 1], blank), vec![0, 1]);
        assert_eq!(collapse_path(&[blank, blank], blank), Vec::<usize>::new());
        assert_eq!(collapse_path(&[0, blank, 0], blank), vec![0, 0]);
    }

    #[test]
    fn argmax_ties_go_low() {
        let m = Tensor::matrix(2, 3, vec![0.2, 0.2, 0.2, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }
}
