use std::path::Path;

use super::{FeatureSequence, Waveform};
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32767.0;

/// Writes 16-bit PCM mono. Samples are clamped to `[-1, 1]`.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &w.samples {
        writer.write_sample((s.clamp(-1.0, 1.0) * PCM_SCALE).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::InvalidArgument(format!(
            "{}: expected 16-bit PCM mono, got {spec:?}",
            path.display()
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// One row per frame, no header.
pub fn write_features_csv(path: &Path, f: &FeatureSequence) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for t in 0..f.num_frames() {
        w.write_record(f.frames.row(t).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let w = Waveform::new((0..1000).map(|i| (i as f64 * 0.01).sin() * 0.9).collect(), 16000)
            .unwrap();
        write_wav(&p, &w).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.sample_rate, 16000);
        assert_eq!(r.samples.len(), w.samples.len());
        let err = r
            .samples
            .iter()
            .zip(&w.samples)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1.0 / 32768.0, "{err}");
    }

    #[test]
    fn features_csv_has_one_row_per_frame() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let w = Waveform::new(vec![0.2; 1200], 16000).unwrap();
        let f = super::super::compute_fbank(&w, 8).unwrap();
        write_features_csv(&p, &f).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), f.num_frames());
        assert_eq!(text.lines().next().unwrap().split(',').count(), 8);
    }
}
