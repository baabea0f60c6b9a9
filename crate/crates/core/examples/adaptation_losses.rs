//! The adaptation losses on toy encoder outputs: character MMD matching,
//! centroid contrastive discrimination, CDCL and the DAT classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use madi::adaptation::{
    assign_frame_labels, cdcl_loss, compute_centroids, dat_loss, discrimination_loss, gather_character_features,
    init_discriminator, matching_loss, total_loss_var, KernelBank, View, DEFAULT_BANDWIDTH_FACTORS,
};
use madi::autodiff::{Graph, ParamStore, Tensor};

const CHARS: usize = 3;
const DIM: usize = 4;

/// Frames near per-character prototypes, offset by a domain shift, plus
/// posteriors that peak on the true character (or blank).
fn domain(rng: &mut ChaCha8Rng, frames: usize, shift: f64) -> (Tensor, Tensor) {
    let mut feats = Vec::new();
    let mut logp = Vec::new();
    for _ in 0..frames {
        let c = rng.gen_range(0..=CHARS);
        for d in 0..DIM {
            let proto = if c < CHARS && d == c { 2.0 } else { 0.0 };
            feats.push(proto + shift + rng.gen_range(-0.3..0.3));
        }
        for k in 0..=CHARS {
            logp.push(if k == c { -0.1 } else { -3.0 });
        }
    }
    (
        Tensor::matrix(frames, DIM, feats).unwrap(),
        Tensor::matrix(frames, CHARS + 1, logp).unwrap(),
    )
}

fn main() -> madi::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let blank = CHARS;
    let (src, src_lp) = domain(&mut rng, 40, 0.0);
    let (tgt, tgt_lp) = domain(&mut rng, 40, 0.8);
    let (aug, aug_lp) = domain(&mut rng, 40, 0.9);

    let g = Graph::new();
    let (s, t, a) = (g.param(src), g.param(tgt), g.param(aug));
    let s_sets = gather_character_features(s, &assign_frame_labels(&src_lp), blank);
    let t_sets = gather_character_features(t, &assign_frame_labels(&tgt_lp), blank);
    let a_sets = gather_character_features(a, &assign_frame_labels(&aug_lp), blank);
    println!("frames per character: source {:?}", s_sets.sets.iter().map(|(k, v)| (*k, v.rows())).collect::<Vec<_>>());

    let pooled = Tensor::from_rows(
        &[s_sets.pooled(), t_sets.pooled()]
            .into_iter()
            .flatten()
            .flat_map(|m| (0..m.rows()).map(move |r| m.row(r).to_vec()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    )?;
    let bank = KernelBank::median_heuristic(&pooled, &DEFAULT_BANDWIDTH_FACTORS)?;
    println!("kernel bandwidths {:?}", bank.bandwidths().iter().map(|b| format!("{b:.2}")).collect::<Vec<_>>());

    let ma = matching_loss(&s_sets, &t_sets, &bank)?;
    let di = discrimination_loss(&compute_centroids(&t_sets, View::Target), &compute_centroids(&a_sets, View::Augmented), 0.1)?;
    let cd = cdcl_loss(&compute_centroids(&s_sets, View::Source), &compute_centroids(&t_sets, View::Target), 0.1)?;
    println!("matching  {:.4} over {} shared characters", ma.loss.item(), ma.shared);
    println!("discrim.  {:.4}", di.loss.item());
    println!("CDCL      {:.4}", cd.loss.item());

    let mut disc = ParamStore::new();
    init_discriminator(&mut disc, DIM, 8, 0);
    let p = disc.bind(&g);
    let dat = dat_loss(&p, &[s], &[t], 1.0)?;
    println!("DAT       {:.4}, classifier accuracy {:.2}", dat.loss.item(), dat.accuracy);

    let total = total_loss_var(g.scalar(0.0), ma.loss, di.loss, 5.0, 5.0);
    let grads = total.backward()?;
    let norm = |v| grads.get(v).map_or(0.0, |t: &Tensor| t.data().iter().map(|x| x * x).sum::<f64>().sqrt());
    println!(
        "total {:.4}; gradient norm on source {:.4}, target {:.4}, augmented {:.4}",
        total.item(),
        norm(s),
        norm(t),
        norm(a)
    );
    Ok(())
}
