//! On-disk corpus: one JSON-lines manifest per split, PCM-16 WAV files, and
//! the generating configuration.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::CorpusConfig;
use super::corpus::{Corpus, Split};
use super::render::{Domain, Utterance};
use crate::error::{Error, Result};
use crate::features::{read_wav, write_wav};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    /// Relative to the manifest's directory.
    pub audio_path: String,
    pub transcript: String,
    pub domain: Domain,
}

pub const CONFIG_FILE: &str = "corpus.json";

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.as_str()))
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in rows {
        let line = serde_json::to_string(r)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes every split plus `corpus.json` under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&corpus.config)?)
        .map_err(|e| Error::io(&cfg_path, e))?;
    for split in Split::ALL {
        let mut rows = Vec::new();
        for u in corpus.split(split) {
            let rel = format!("wav/{}.wav", u.id);
            write_wav(&dir.join(&rel), &u.waveform)?;
            rows.push(ManifestRow {
                id: u.id.clone(),
                audio_path: rel,
                transcript: u.transcript.clone(),
                domain: u.domain,
            });
        }
        write_manifest(&manifest_path(dir, split), &rows)?;
    }
    Ok(())
}

pub fn read_split(dir: &Path, split: Split) -> Result<Vec<Utterance>> {
    let path = manifest_path(dir, split);
    read_manifest(&path)?
        .into_iter()
        .map(|r| {
            Ok(Utterance {
                waveform: read_wav(&dir.join(&r.audio_path))?,
                id: r.id,
                transcript: r.transcript,
                domain: r.domain,
            })
        })
        .collect()
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config: CorpusConfig = serde_json::from_str(&text)?;
    let mut corpus = Corpus {
        config,
        source_train: Vec::new(),
        source_valid: Vec::new(),
        source_test: Vec::new(),
        target_train: Vec::new(),
        target_test: Vec::new(),
    };
    for split in Split::ALL {
        *corpus.split_mut(split) = read_split(dir, split)?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, SplitSizes};

    #[test]
    fn roundtrip_within_quantization() {
        let cfg = CorpusConfig {
            splits: SplitSizes {
                source_train: 4,
                target_train: 2,
                target_test: 2,
                source_test: 1,
            },
            ..Default::default()
        };
        let c = generate_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&c, dir.path()).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back.config, c.config);
        for split in Split::ALL {
            let (a, b) = (c.split(split), back.split(split));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!((&x.id, &x.transcript, x.domain), (&y.id, &y.transcript, y.domain));
                let err = x
                    .waveform
                    .samples
                    .iter()
                    .zip(&y.waveform.samples)
                    .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
                assert!(err <= 1.0 / 32768.0, "{err}");
            }
        }
    }

    #[test]
    fn malformed_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"a\",\"audio_path\":\"a.wav\",\"transcript\":\"ab cd\",\"domain\":\"source\"}\n{\"id\":3}\n",
        )
        .unwrap();
        match read_manifest(&p) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let rows = vec![ManifestRow {
            id: "u".into(),
            audio_path: "u.wav".into(),
            transcript: "ab ca bd".into(),
            domain: Domain::Target,
        }];
        write_manifest(&p, &rows).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
    }
}
