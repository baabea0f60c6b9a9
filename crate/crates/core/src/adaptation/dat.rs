//! Domain-adversarial baseline: a small domain classifier on mean-pooled
//! encoder features, trained through a gradient-reversal layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat_rows, BoundParams, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Prefix of every discriminator parameter name.
pub const DAT_PREFIX: &str = "dat.";

/// Adds a `H → width → 1` ReLU classifier to `params`.
pub fn init_discriminator(params: &mut ParamStore, input: usize, width: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = |i: usize, o: usize| {
        let a = (6.0 / (i + o) as f64).sqrt();
        Tensor::matrix(i, o, (0..i * o).map(|_| rng.gen_range(-a..a)).collect()).expect("dims")
    };
    params.insert("dat.l1.w", w(input, width));
    params.insert("dat.l1.b", Tensor::zeros(&[width]));
    params.insert("dat.l2.w", w(width, 1));
    params.insert("dat.l2.b", Tensor::zeros(&[1]));
}

#[derive(Clone, Copy, Debug)]
pub struct DatOutput<'g> {
    pub loss: Var<'g>,
    /// Fraction of utterances the classifier assigns to the right domain.
    pub accuracy: f64,
}

/// Binary cross-entropy of the domain classifier, source labelled 1 and
/// target 0. Encoder gradients pass through a reversal of `strength`.
pub fn dat_loss<'g>(
    p: &BoundParams<'g>,
    source: &[Var<'g>],
    target: &[Var<'g>],
    strength: f64,
) -> Result<DatOutput<'g>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("domain classifier needs both domains".into()));
    }
    let pooled: Vec<Var<'g>> = source.iter().chain(target).map(|f| f.mean_rows()).collect();
    let x = concat_rows(&pooled).grad_reverse(strength);
    let h = x.matmul(p.get("dat.l1.w")).add_row(p.get("dat.l1.b")).relu();
    let z = h.matmul(p.get("dat.l2.w")).add_row(p.get("dat.l2.b"));
    let labels: Vec<f64> = std::iter::repeat_n(1.0, source.len())
        .chain(std::iter::repeat_n(0.0, target.len()))
        .collect();
    let n = labels.len();
    let y = x.graph().constant(Tensor::matrix(n, 1, labels.clone())?);
    let loss = (z.softplus() - z * y).mean();
    let correct = z
        .value()
        .data()
        .iter()
        .zip(&labels)
        .filter(|(s, l)| (**s > 0.0) == (**l > 0.5))
        .count();
    Ok(DatOutput {
        loss,
        accuracy: correct as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn zero_classifier_gives_log_two() {
        let mut ps = ParamStore::new();
        init_discriminator(&mut ps, 3, 4, 0);
        ps.get_mut("dat.l2.w").unwrap().data_mut().fill(0.0);
        let g = Graph::new();
        let p = ps.bind(&g);
        let s = g.param(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        let t = g.param(Tensor::matrix(3, 3, vec![-1.0; 9]).unwrap());
        let out = dat_loss(&p, &[s], &[t], 1.0).unwrap();
        assert!((out.loss.item() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reversal_flips_encoder_gradient_only() {
        let mut ps = ParamStore::new();
        init_discriminator(&mut ps, 2, 3, 5);
        let run = |strength: f64| {
            let g = Graph::new();
            let p = ps.bind(&g);
            let s = g.param(Tensor::matrix(2, 2, vec![0.3, -0.2, 0.5, 0.1]).unwrap());
            let t = g.param(Tensor::matrix(1, 2, vec![-0.4, 0.9]).unwrap());
            let out = dat_loss(&p, &[s], &[t], strength).unwrap();
            let gr = out.loss.backward().unwrap();
            (gr.get(s).unwrap().clone(), gr.get(p.get("dat.l1.w")).unwrap().clone())
        };
        let (enc_rev, disc_rev) = run(1.0);
        let (enc_half, disc_half) = run(0.5);
        assert_eq!(disc_rev, disc_half);
        for (a, b) in enc_rev.data().iter().zip(enc_half.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }
}
