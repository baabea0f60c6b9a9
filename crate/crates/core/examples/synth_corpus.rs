//! Generates the two-domain corpus and writes it to disk.
//!
//!     cargo run --example synth_corpus [-- OUT_DIR]

use std::path::PathBuf;

use madi::synth::{character_prototypes, generate_corpus, write_corpus, CorpusConfig, Split};

fn main() -> madi::Result<()> {
    let cfg = CorpusConfig::default();
    println!("target shift: {:?}", cfg.target);
    for (c, p) in ('a'..).zip(character_prototypes(cfg.num_chars, cfg.prototype_seed)) {
        let f: Vec<String> = p.components.iter().map(|(f, _)| format!("{f:.0} Hz")).collect();
        println!("  {c}: {}", f.join(", "));
    }
    let corpus = generate_corpus(&cfg)?;
    for split in [Split::SourceTrain, Split::SourceValid, Split::SourceTest, Split::TargetTrain, Split::TargetTest] {
        let utts = corpus.split(split);
        let secs: f64 = utts.iter().map(|u| u.waveform.duration()).sum();
        println!(
            "{:<13} {:>4} utterances, {:>6.1} s, e.g. {:?}",
            split.as_str(),
            utts.len(),
            secs,
            utts.first().map(|u| u.transcript.as_str()).unwrap_or("")
        );
    }
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("madi-corpus"));
    write_corpus(&corpus, &out)?;
    println!("wrote manifests and WAV files to {}", out.display());
    Ok(())
}
