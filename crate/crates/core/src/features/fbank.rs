use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbankConfig {
    pub num_mel_bins: usize,
    /// Analysis window in seconds.
    pub frame_length: f64,
    /// Hop in seconds.
    pub frame_shift: f64,
    pub energy_floor: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            num_mel_bins: 80,
            frame_length: 0.025,
            frame_shift: 0.010,
            energy_floor: 1e-10,
        }
    }
}

/// `T × F` log-mel energies.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub frames: Tensor,
    pub frame_shift: f64,
    pub frame_length: f64,
}

impl FeatureSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `1 + ⌊(len − win) / hop⌋`, or `None` when the signal is shorter than
/// one window.
pub fn num_frames(len: usize, win: usize, hop: usize) -> Option<usize> {
    (len >= win).then(|| 1 + (len - win) / hop)
}

/// Triangular filters on the HTK mel scale, spanning 0 Hz to Nyquist.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// Filter `m` peaks at `centers[m]` Hz.
    pub centers: Vec<f64>,
    /// `[num_filters][num_fft_bins]`.
    pub weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(num_filters: usize, fft_size: usize, sample_rate: f64) -> Self {
        let nyquist = sample_rate / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..num_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
            .collect();
        let n_bins = fft_size / 2 + 1;
        let bin_hz = sample_rate / fft_size as f64;
        let weights = (0..num_filters)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= c {
                            (f - lo) / (c - lo)
                        } else {
                            (hi - f) / (hi - c)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            centers: edges[1..=num_filters].to_vec(),
            weights,
        }
    }
}

/// Reusable extractor holding the planned FFT, window, and filterbank.
pub struct FbankExtractor {
    config: FbankConfig,
    sample_rate: u32,
    win: usize,
    hop: usize,
    fft_size: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    pub filterbank: MelFilterbank,
}

impl FbankExtractor {
    pub fn new(config: FbankConfig, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 || config.num_mel_bins == 0 {
            return Err(Error::InvalidArgument(
                "sample rate and mel bin count must be positive".into(),
            ));
        }
        let sr = sample_rate as f64;
        let win = (config.frame_length * sr).round() as usize;
        let hop = (config.frame_shift * sr).round() as usize;
        if win == 0 || hop == 0 {
            return Err(Error::InvalidArgument("frame length and shift must be positive".into()));
        }
        let fft_size = win.next_power_of_two();
        // periodic Hann
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let filterbank = MelFilterbank::new(config.num_mel_bins, fft_size, sr);
        Ok(Self {
            config,
            sample_rate,
            win,
            hop,
            fft_size,
            window,
            fft,
            filterbank,
        })
    }

    pub fn window_samples(&self) -> usize {
        self.win
    }

    pub fn hop_samples(&self) -> usize {
        self.hop
    }

    pub fn compute(&self, w: &Waveform) -> Result<FeatureSequence> {
        if w.sample_rate != self.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "extractor built for {} Hz, waveform is {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        let t = num_frames(w.samples.len(), self.win, self.hop).ok_or(Error::TooShort {
            samples: w.samples.len(),
            window: self.win,
        })?;
        let f = self.config.num_mel_bins;
        let n_bins = self.fft_size / 2 + 1;
        let floor_log = self.config.energy_floor;
        let mut out = Vec::with_capacity(t * f);
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut mag = vec![0.0; n_bins];
        for i in 0..t {
            let frame = &w.samples[i * self.hop..i * self.hop + self.win];
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = if k < self.win {
                    Complex::new(frame[k] * self.window[k], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for filt in &self.filterbank.weights {
                let e: f64 = filt.iter().zip(&mag).map(|(a, b)| a * b).sum();
                out.push(e.max(floor_log).ln());
            }
        }
        Ok(FeatureSequence {
            frames: Tensor::matrix(t, f, out)?,
            frame_shift: self.config.frame_shift,
            frame_length: self.config.frame_length,
        })
    }
}

/// One-shot log-mel extraction with default window settings and `num_mel_bins`
/// filters.
pub fn compute_fbank(w: &Waveform, num_mel_bins: usize) -> Result<FeatureSequence> {
    let cfg = FbankConfig {
        num_mel_bins,
        ..FbankConfig::default()
    };
    FbankExtractor::new(cfg, w.sample_rate)?.compute(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, sr: u32) -> Waveform {
        let n = (secs * sr as f64) as usize;
        let s = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(s, sr).unwrap()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let f = compute_fbank(&Waveform::new(vec![0.1; 16000], 16000).unwrap(), 80).unwrap();
        assert_eq!(f.num_frames(), 98);
        assert_eq!(f.dim(), 80);
    }

    #[test]
    fn silence_hits_the_floor() {
        let f = compute_fbank(&Waveform::new(vec![0.0; 4000], 16000).unwrap(), 80).unwrap();
        let floor = 1e-10f64.ln();
        assert!(f.frames.data().iter().all(|&v| v == floor));
    }

    #[test]
    fn too_short_is_rejected() {
        let w = Waveform::new(vec![0.0; 399], 16000).unwrap();
        assert!(matches!(compute_fbank(&w, 80), Err(Error::TooShort { .. })));
    }

    #[test]
    fn tone_peaks_in_nearest_filter() {
        let ex = FbankExtractor::new(FbankConfig::default(), 16000).unwrap();
        let nearest = ex
            .filterbank
            .centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        let f = ex.compute(&sine(1000.0, 0.5, 16000)).unwrap();
        for t in 0..f.num_frames() {
            let row = f.frames.row(t);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, nearest, "frame {t}");
        }
    }

    #[test]
    fn filters_are_triangular_and_ordered() {
        let fb = MelFilterbank::new(80, 512, 16000.0);
        assert!(fb.centers.windows(2).all(|w| w[1] > w[0]));
        assert!(*fb.centers.last().unwrap() < 8000.0);
        for (m, w) in fb.weights.iter().enumerate() {
            assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(w.iter().any(|&v| v > 0.0), "filter {m} is empty");
            // rises then falls
            let peak = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
            assert!(w[..=peak].windows(2).all(|p| p[1] >= p[0]));
            assert!(w[peak..].windows(2).all(|p| p[1] <= p[0]));
        }
        // neighbours overlap (sampled densely so narrow low filters share bins)
        let dense = MelFilterbank::new(80, 1 << 14, 16000.0);
        for pair in dense.weights.windows(2) {
            assert!(pair[0].iter().zip(&pair[1]).any(|(a, b)| *a > 0.0 && *b > 0.0));
        }
    }

    #[test]
    fn mel_scale_roundtrip() {
        for hz in [0.0, 440.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }
}
