use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::NoiseKind;

/// Unscaled background noise of `len` samples; `None` for [`NoiseKind::None`].
pub fn noise<R: Rng>(kind: NoiseKind, len: usize, sample_rate: u32, rng: &mut R) -> Option<Vec<f64>> {
    let sr = sample_rate as f64;
    let mut white = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let out = match kind {
        NoiseKind::None => return None,
        NoiseKind::Rain => {
            let taps = bandpass(1500.0 / sr, 5000.0 / sr, 63);
            let w = white(len + taps.len());
            (0..len)
                .map(|n| taps.iter().enumerate().map(|(k, h)| h * w[n + taps.len() - 1 - k]).sum())
                .collect()
        }
        NoiseKind::Wind => {
            let a = (-2.0 * PI * 150.0 / sr).exp();
            let w = white(len);
            let rate = rng.gen_range(0.5..1.5);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mut y = 0.0;
            w.iter()
                .enumerate()
                .map(|(i, x)| {
                    y = a * y + (1.0 - a) * x;
                    let gust = 0.6 + 0.4 * (2.0 * PI * rate * i as f64 / sr + phase).sin();
                    y * gust
                })
                .collect()
        }
        NoiseKind::Laughter => {
            let mut out = vec![0.0; len];
            let mut t = (rng.gen_range(0.0..0.15) * sr) as usize;
            while t < len {
                let syllables = rng.gen_range(2..=4);
                let f0 = rng.gen_range(200.0..320.0);
                for _ in 0..syllables {
                    let dur = (rng.gen_range(0.07..0.11) * sr) as usize;
                    for i in 0..dur.min(len.saturating_sub(t)) {
                        let env = (PI * i as f64 / dur as f64).sin();
                        let s: f64 = (1..=5)
                            .map(|h| (2.0 * PI * f0 * h as f64 * i as f64 / sr).sin() / h as f64)
                            .sum();
                        out[t + i] += env * s;
                    }
                    t += dur + (rng.gen_range(0.04..0.08) * sr) as usize;
                }
                t += (rng.gen_range(0.1..0.35) * sr) as usize;
            }
            out
        }
    };
    Some(out)
}

/// Adds `noise` scaled so that signal power over noise power is `snr_db`.
pub fn mix_at_snr(signal: &mut [f64], noise: &[f64], snr_db: f64) {
    let power = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64;
    let (ps, pn) = (power(signal), power(noise));
    if pn == 0.0 {
        return;
    }
    let scale = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    for (s, n) in signal.iter_mut().zip(noise) {
        *s += scale * n;
    }
}

/// Hamming-windowed sinc band-pass between normalized frequencies `lo` and
/// `hi` (cycles per sample).
fn bandpass(lo: f64, hi: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    (0..taps)
        .map(|i| {
            let n = i as f64 - m;
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
            (2.0 * hi * sinc(2.0 * hi * n) - 2.0 * lo * sinc(2.0 * lo * n)) * w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snr_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sig: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.05).sin()).collect();
        let clean = sig.clone();
        let n = noise(NoiseKind::Rain, sig.len(), 16000, &mut rng).unwrap();
        mix_at_snr(&mut sig, &n, 10.0);
        let ps: f64 = clean.iter().map(|x| x * x).sum();
        let pn: f64 = sig.iter().zip(&clean).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((10.0 * (ps / pn).log10() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn kinds_have_expected_character() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(noise(NoiseKind::None, 100, 16000, &mut rng).is_none());
        for kind in [NoiseKind::Rain, NoiseKind::Wind, NoiseKind::Laughter] {
            let n = noise(kind, 16000, 16000, &mut rng).unwrap();
            assert_eq!(n.len(), 16000);
            assert!(n.iter().all(|x| x.is_finite()));
            assert!(n.iter().any(|x| *x != 0.0));
        }
        // wind is dominated by low frequencies: successive samples correlate
        let w = noise(NoiseKind::Wind, 16000, 16000, &mut rng).unwrap();
        let num: f64 = w.windows(2).map(|p| p[0] * p[1]).sum();
        let den: f64 = w.iter().map(|x| x * x).sum();
        assert!(num / den > 0.9);
    }
}
