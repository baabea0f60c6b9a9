use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::adaptation::Method;
use crate::error::{Error, Result};

/// First line of every metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsHeader {
    /// `pretrain` or `adapt`.
    pub stage: String,
    pub method: Option<Method>,
    /// CTC weight of the recognition loss.
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub grl_strength: f64,
    pub seed: u64,
    pub steps: u64,
}

impl MetricsHeader {
    pub fn pretrain(cfg: &ExperimentConfig) -> Self {
        Self::build("pretrain", None, cfg, cfg.pretrain.steps)
    }

    pub fn adapt(cfg: &ExperimentConfig) -> Self {
        Self::build("adapt", Some(cfg.adaptation.method), cfg, cfg.adapt.steps)
    }

    fn build(stage: &str, method: Option<Method>, cfg: &ExperimentConfig, steps: u64) -> Self {
        let a = &cfg.adaptation;
        Self {
            stage: stage.into(),
            method,
            lambda: cfg.ctc_weight,
            alpha: a.alpha,
            beta: a.beta,
            tau: a.tau,
            grl_strength: a.grl_strength,
            seed: cfg.seed,
            steps,
        }
    }
}

/// JSON-lines log: the header, then one object per step.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, header: &MetricsHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.write(header)?;
        Ok(w)
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics<T: DeserializeOwned>(path: &Path) -> Result<(MetricsHeader, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let first = lines
        .next()
        .ok_or_else(|| bad(1, "empty metrics file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::LossBreakdown;

    #[test]
    fn roundtrip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let cfg = ExperimentConfig::default();
        let rec = LossBreakdown {
            step: 1,
            l_asr: 0.5,
            l_ctc: 0.7,
            l_att: 0.4,
            l_ma: 0.1,
            l_di: 0.2,
            total: 2.0,
            shared_char_count: 3,
            skipped: false,
            lr: 1e-3,
        };
        let mut w = MetricsWriter::create(&p, &MetricsHeader::adapt(&cfg)).unwrap();
        w.write(&rec).unwrap();
        w.finish().unwrap();
        let (h, rows): (_, Vec<LossBreakdown>) = read_metrics(&p).unwrap();
        assert_eq!(h.lambda, 0.3);
        assert_eq!(h.method, Some(Method::Madi));
        assert_eq!(rows, vec![rec]);
    }
}
