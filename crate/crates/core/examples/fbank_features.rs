//! Log-mel features of a two-tone signal.
//!
//!     cargo run --example fbank_features [-- out.csv]

use std::f64::consts::PI;

use madi::features::{write_features_csv, FbankConfig, FbankExtractor, Waveform, DEFAULT_SAMPLE_RATE};

fn main() -> madi::Result<()> {
    let sr = DEFAULT_SAMPLE_RATE;
    // 0.5 s at 440 Hz, then 0.5 s at 2 kHz
    let samples: Vec<f64> = (0..sr as usize)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let f = if t < 0.5 { 440.0 } else { 2000.0 };
            0.3 * (2.0 * PI * f * t).sin()
        })
        .collect();
    let wave = Waveform::new(samples, sr)?;
    let fx = FbankExtractor::new(FbankConfig::default(), sr)?;
    let feats = fx.compute(&wave)?;
    println!(
        "{} frames x {} bins ({} ms window, {} ms hop)",
        feats.num_frames(),
        feats.dim(),
        fx.window_samples() * 1000 / sr as usize,
        fx.hop_samples() * 1000 / sr as usize
    );
    for t in [10, feats.num_frames() - 10] {
        let row = feats.frames.row(t);
        let (bin, energy) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        println!("frame {t:>3}: loudest bin {bin:>2} at {energy:.2} log-energy");
    }
    if let Some(path) = std::env::args().nth(1) {
        write_features_csv(std::path::Path::new(&path), &feats)?;
        println!("wrote {path}");
    }
    Ok(())
}
