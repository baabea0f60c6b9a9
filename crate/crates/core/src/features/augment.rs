//! Waveform-level augmentations used to build the second contrastive view of
//! target-domain audio: pitch randomization, reverberation, temporal masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub pitch_factor_range: [f64; 2],
    /// Time for the reverb tail to fall by 60 dB, in seconds.
    pub reverb_decay: f64,
    pub reverb_wet: f64,
    pub mask_count: usize,
    /// Length of each mask in seconds.
    pub mask_span: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pitch_factor_range: [0.9, 1.1],
            reverb_decay: 0.2,
            reverb_wet: 0.3,
            mask_count: 2,
            mask_span: 0.05,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// A configuration under which `augment_chain` is the identity.
    pub fn identity() -> Self {
        Self {
            pitch_factor_range: [1.0, 1.0],
            reverb_decay: 0.2,
            reverb_wet: 0.0,
            mask_count: 0,
            mask_span: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.pitch_factor_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "pitch factor range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if self.reverb_decay <= 0.0 || !(0.0..=1.0).contains(&self.reverb_wet) {
            return Err(Error::InvalidArgument(
                "reverb decay must be positive and wet in [0, 1]".into(),
            ));
        }
        if self.mask_span < 0.0 {
            return Err(Error::InvalidArgument("mask span must be non-negative".into()));
        }
        Ok(())
    }
}

/// Pitch scaling by plain resampling: a tone at `f` comes out at
/// `f · factor`, and the length becomes `round(len / factor)`.
pub fn augment_pitch(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("pitch factor {factor} must be positive")));
    }
    if factor == 1.0 {
        return Ok(w.clone());
    }
    let n = w.samples.len();
    let out_len = ((n as f64 / factor).round() as usize).max(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * factor;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            let a = w.samples.get(j).copied().unwrap_or(0.0);
            let b = w.samples.get(j + 1).copied().unwrap_or(0.0);
            a + frac * (b - a)
        })
        .collect();
    Waveform::new(samples, w.sample_rate)
}

/// Exponentially decaying Gaussian noise with a unit first tap.
pub fn synthetic_impulse_response(decay: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
    let len = ((decay * sample_rate as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // amplitude falls by 60 dB over `decay` seconds
    let k = 3.0 * std::f64::consts::LN_10 / len as f64;
    let mut ir: Vec<f64> = (0..len)
        .map(|n| {
            let g: f64 = rng.sample(StandardNormal);
            0.5 * g * (-k * n as f64).exp()
        })
        .collect();
    ir[0] = 1.0;
    ir
}

/// Linear convolution through the FFT, full length `x + h − 1`.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![];
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |s: &[f64]| {
        let mut v: Vec<Complex<f64>> = s.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(n, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.truncate(out_len);
    a.into_iter().map(|c| c.re / n as f64).collect()
}

/// Mixes `w` with its convolution by `ir`, truncates to the input length,
/// and rescales so the output peak matches the input peak.
pub fn reverb_with_ir(w: &Waveform, ir: &[f64], wet: f64) -> Result<Waveform> {
    if !(0.0..=1.0).contains(&wet) {
        return Err(Error::InvalidArgument(format!("wet {wet} outside [0, 1]")));
    }
    if wet == 0.0 {
        return Ok(w.clone());
    }
    let conv = fft_convolve(&w.samples, ir);
    let mut mixed: Vec<f64> = w
        .samples
        .iter()
        .zip(&conv)
        .map(|(&d, &c)| d + wet * (c - d))
        .collect();
    let peak_in = peak(&w.samples);
    let peak_out = peak(&mixed);
    if peak_out > 0.0 && peak_in != peak_out {
        let s = peak_in / peak_out;
        mixed.iter_mut().for_each(|v| *v *= s);
    }
    Waveform::new(mixed, w.sample_rate)
}

pub fn augment_reverb(w: &Waveform, decay: f64, wet: f64, seed: u64) -> Result<Waveform> {
    if !(decay > 0.0) {
        return Err(Error::InvalidArgument(format!("reverb decay {decay} must be positive")));
    }
    let ir = synthetic_impulse_response(decay, w.sample_rate, seed);
    reverb_with_ir(w, &ir, wet)
}

/// Zeroes each half-open `[start, end)` sample range.
pub fn augment_temporal_mask(w: &Waveform, spans: &[(usize, usize)]) -> Result<Waveform> {
    let n = w.samples.len();
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for (i, &(s, e)) in sorted.iter().enumerate() {
        if s > e || e > n {
            return Err(Error::InvalidArgument(format!(
                "mask span [{s}, {e}) outside 0..{n}"
            )));
        }
        if i > 0 && sorted[i - 1].1 > s {
            return Err(Error::InvalidArgument(format!("mask spans overlap at {s}")));
        }
    }
    let mut out = w.clone();
    for &(s, e) in spans {
        out.samples[s..e].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(out)
}

/// Parameters drawn by one `augment_chain` call.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentDraw {
    pub pitch_factor: f64,
    pub ir_seed: u64,
    pub mask_spans: Vec<(usize, usize)>,
}

/// Pitch, then reverb, then masking, with parameters drawn from `rng`.
pub fn augment_chain<R: Rng>(w: &Waveform, cfg: &AugmentConfig, rng: &mut R) -> Result<Waveform> {
    augment_chain_traced(w, cfg, rng).map(|(w, _)| w)
}

pub fn augment_chain_traced<R: Rng>(
    w: &Waveform,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Waveform, AugmentDraw)> {
    cfg.validate()?;
    let [lo, hi] = cfg.pitch_factor_range;
    let factor = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let ir_seed: u64 = rng.gen();
    let pitched = augment_pitch(w, factor)?;
    let reverbed = if cfg.reverb_wet > 0.0 {
        augment_reverb(&pitched, cfg.reverb_decay, cfg.reverb_wet, ir_seed)?
    } else {
        pitched
    };

    let n = reverbed.samples.len();
    let span = (cfg.mask_span * w.sample_rate as f64).round() as usize;
    let mut spans = Vec::with_capacity(cfg.mask_count);
    if cfg.mask_count > 0 && span > 0 {
        if cfg.mask_count * span >= n {
            return Err(Error::InvalidArgument(format!(
                "{} masks of {span} samples do not fit in {n} samples",
                cfg.mask_count
            )));
        }
        // one mask per equal slot keeps spans disjoint
        let slot = n / cfg.mask_count;
        for k in 0..cfg.mask_count {
            let room = slot.saturating_sub(span);
            let start = k * slot + if room > 0 { rng.gen_range(0..=room) } else { 0 };
            let end = (start + span).min(n);
            spans.push((start, end));
        }
    }
    let out = augment_temporal_mask(&reverbed, &spans)?;
    Ok((
        out,
        AugmentDraw {
            pitch_factor: factor,
            ir_seed,
            mask_spans: spans,
        },
    ))
}

fn peak(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, n: usize, sr: u32) -> Waveform {
        let s = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(s, sr).unwrap()
    }

    /// Frequency of the largest DFT magnitude, by direct evaluation.
    fn spectral_peak_hz(x: &[f64], sr: u32) -> (f64, f64) {
        let n = x.len();
        let bin_hz = sr as f64 / n as f64;
        let best = (1..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let ph = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    re += v * ph.cos();
                    im -= v * ph.sin();
                }
                (k, re * re + im * im)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        (best.0 as f64 * bin_hz, bin_hz)
    }

    #[test]
    fn pitch_identity_and_length() {
        let w = sine(440.0, 16000, 16000);
        assert_eq!(augment_pitch(&w, 1.0).unwrap(), w);
        assert_eq!(augment_pitch(&w, 2.0).unwrap().samples.len(), 8000);
        assert!(augment_pitch(&w, 0.0).is_err());
        assert!(augment_pitch(&w, -1.0).is_err());
    }

    #[test]
    fn pitch_moves_tone() {
        let w = sine(440.0, 4800, 16000);
        let p = augment_pitch(&w, 1.5).unwrap();
        let (peak, bin) = spectral_peak_hz(&p.samples, 16000);
        assert!((peak - 660.0).abs() <= bin, "peak {peak} Hz, bin {bin} Hz");
    }

    #[test]
    fn reverb_dry_and_delta() {
        let w = sine(300.0, 2000, 16000);
        assert_eq!(augment_reverb(&w, 0.2, 0.0, 1).unwrap(), w);
        for wet in [0.3, 1.0] {
            let r = reverb_with_ir(&w, &[1.0], wet).unwrap();
            assert!(r.samples.iter().zip(&w.samples).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn reverb_is_seeded_and_keeps_peak() {
        let w = sine(300.0, 4000, 16000);
        let a = augment_reverb(&w, 0.1, 0.5, 9).unwrap();
        let b = augment_reverb(&w, 0.1, 0.5, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), w.samples.len());
        assert!((peak(&a.samples) - peak(&w.samples)).abs() < 1e-12);
        assert!(augment_reverb(&w, 0.0, 0.5, 9).is_err());
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let h = [0.5, 0.25, -1.0];
        let mut direct = vec![0.0; 6];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                direct[i + j] += a * b;
            }
        }
        let got = fft_convolve(&x, &h);
        assert!(got.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn masking_examples() {
        let w = Waveform::new(vec![1.0; 5], 16000).unwrap();
        assert_eq!(augment_temporal_mask(&w, &[]).unwrap(), w);
        assert_eq!(
            augment_temporal_mask(&w, &[(2, 4)]).unwrap().samples,
            vec![1.0, 1.0, 0.0, 0.0, 1.0]
        );
        assert!(augment_temporal_mask(&w, &[(0, 5)])
            .unwrap()
            .samples
            .iter()
            .all(|v| *v == 0.0));
        assert!(augment_temporal_mask(&w, &[(3, 6)]).is_err());
        assert!(augment_temporal_mask(&w, &[(0, 3), (2, 4)]).is_err());
    }

    #[test]
    fn chain_identity_determinism_and_length() {
        let w = sine(500.0, 8000, 16000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment_chain(&w, &AugmentConfig::identity(), &mut rng).unwrap(), w);

        let cfg = AugmentConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            augment_chain_traced(&w, &cfg, &mut rng).unwrap()
        };
        let (a, draw) = run(5);
        let (b, _) = run(5);
        assert_eq!(a, b);
        let expect = (w.samples.len() as f64 / draw.pitch_factor).round() as usize;
        assert_eq!(a.samples.len(), expect);
        for &(s, e) in &draw.mask_spans {
            assert!(a.samples[s..e].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn chain_rejects_masks_longer_than_audio() {
        let w = sine(500.0, 1600, 16000);
        let cfg = AugmentConfig {
            mask_count: 3,
            mask_span: 0.05,
            ..AugmentConfig::identity()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(augment_chain(&w, &cfg, &mut rng).is_err());
    }
}
