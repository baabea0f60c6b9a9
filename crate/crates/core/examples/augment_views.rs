//! The augmented target view: pitch randomization, reverberation and
//! temporal masking applied to one synthetic utterance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use madi::features::{augment_chain_traced, AugmentConfig, FbankConfig, FbankExtractor};
use madi::synth::{CorpusConfig, Domain, Synthesizer};

fn main() -> madi::Result<()> {
    let synth = Synthesizer::new(CorpusConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let transcript = synth.draw_transcript(&mut rng);
    let utt = synth.synthesize("demo", &transcript, Domain::Target, &mut rng)?;
    let fx = FbankExtractor::new(FbankConfig::default(), utt.waveform.sample_rate)?;
    let base = fx.compute(&utt.waveform)?.frames;
    println!("\"{transcript}\": {:.2} s, {} frames", utt.waveform.duration(), base.rows());

    let cfg = AugmentConfig::default();
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for k in 0..3 {
        let (w, draw) = augment_chain_traced(&utt.waveform, &cfg, &mut aug_rng)?;
        let feats = fx.compute(&w)?.frames;
        let n = feats.rows().min(base.rows());
        let diff: f64 = (0..n)
            .flat_map(|t| feats.row(t).iter().zip(base.row(t)).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .sum::<f64>()
            / (n * feats.cols()) as f64;
        println!(
            "view {k}: pitch x{:.3}, masks {:?}, power {:.2e} -> {:.2e}, mean |Δ log-mel| {diff:.3}",
            draw.pitch_factor,
            draw.mask_spans,
            utt.waveform.power(),
            w.power()
        );
    }
    Ok(())
}
