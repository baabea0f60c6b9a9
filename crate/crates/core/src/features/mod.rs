//! Log-mel filterbank features and waveform augmentations.

mod augment;
mod fbank;
mod io;

pub use augment::{
    augment_chain, augment_chain_traced, augment_pitch, augment_reverb, augment_temporal_mask,
    fft_convolve, reverb_with_ir, synthetic_impulse_response, AugmentConfig, AugmentDraw,
};
pub use fbank::{
    compute_fbank, hz_to_mel, mel_to_hz, num_frames, FbankConfig, FbankExtractor,
    FeatureSequence, MelFilterbank,
};
pub use io::{read_wav, write_features_csv, write_wav};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty waveform".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }
}
