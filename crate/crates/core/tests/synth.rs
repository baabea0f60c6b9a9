use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use madi::synth::{
    generate_corpus, read_corpus, write_corpus, CorpusConfig, Domain, DomainShift, NoiseKind, SplitSizes, Synthesizer,
};

fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2].iter().map(|c| c.norm_sqr()).collect()
}

#[test]
fn target_spectrum_follows_the_channel_response() {
    let shift = DomainShift {
        noise: NoiseKind::None,
        ..DomainShift::device()
    };
    let cfg = CorpusConfig {
        target: shift.clone(),
        noise_floor: 0.0,
        ..Default::default()
    };
    let s = Synthesizer::new(cfg).unwrap();
    let sr = s.config.sample_rate;
    let transcript = s.lexicon[..3].join(" ");
    let src = s.synthesize("x", &transcript, Domain::Source, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let tgt = s.synthesize("x", &transcript, Domain::Target, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(tgt.waveform.samples.iter().all(|v| v.abs() < 0.99), "clamping would rescale");

    let (ps, pt) = (power_spectrum(&src.waveform.samples), power_spectrum(&tgt.waveform.samples));
    let bin_hz = sr as f64 / (2 * ps.len()) as f64;
    let mut checked = 0;
    for band in [(250.0, 500.0), (500.0, 1000.0), (1000.0, 2000.0), (2000.0, 4000.0), (4000.0, 6000.0)] {
        let bins: Vec<usize> = (0..ps.len())
            .filter(|&k| (band.0..band.1).contains(&(k as f64 * bin_hz)))
            .collect();
        let e_src: f64 = bins.iter().map(|&k| ps[k]).sum();
        if e_src < 1e-3 * ps.iter().sum::<f64>() {
            continue;
        }
        let e_tgt: f64 = bins.iter().map(|&k| pt[k]).sum();
        let e_filter: f64 = bins
            .iter()
            .map(|&k| ps[k] * shift.channel_gain(k as f64 * bin_hz, sr).powi(2))
            .sum();
        let measured = 10.0 * (e_tgt / e_src).log10();
        let expected = 10.0 * (e_filter / e_src).log10();
        assert!(
            (measured - expected).abs() < 1.0,
            "band {band:?}: measured {measured:.2} dB, filter {expected:.2} dB"
        );
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn corpus_survives_a_disk_roundtrip() {
    let cfg = CorpusConfig {
        splits: SplitSizes {
            source_train: 10,
            target_train: 4,
            target_test: 3,
            source_test: 2,
        },
        ..Default::default()
    };
    let c = generate_corpus(&cfg).unwrap();
    assert_eq!(c, generate_corpus(&cfg).unwrap());
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&c, dir.path()).unwrap();
    let back = read_corpus(dir.path()).unwrap();
    assert_eq!(back.config, c.config);
    for (a, b) in c.source_train.iter().zip(&back.source_train) {
        assert_eq!((&a.id, &a.transcript, a.domain), (&b.id, &b.transcript, b.domain));
        assert!(a.transcript.contains(' ') || !b.transcript.contains(' '));
        let err = a
            .waveform
            .samples
            .iter()
            .zip(&b.waveform.samples)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err <= 1.0 / 32768.0);
    }
    assert_eq!(back.target_test.len(), 3);
}

#[test]
fn source_domain_does_not_depend_on_the_target_shift() {
    let small = SplitSizes {
        source_train: 6,
        target_train: 2,
        target_test: 2,
        source_test: 2,
    };
    let a = generate_corpus(&CorpusConfig {
        splits: small.clone(),
        target: DomainShift::environment(NoiseKind::Wind, 5.0),
        ..Default::default()
    })
    .unwrap();
    let b = generate_corpus(&CorpusConfig {
        splits: small,
        target: DomainShift::environment(NoiseKind::Laughter, 15.0),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(a.source_train, b.source_train);
    assert_eq!(a.source_test, b.source_test);
    assert_ne!(a.target_test[0].waveform, b.target_test[0].waveform);
}
