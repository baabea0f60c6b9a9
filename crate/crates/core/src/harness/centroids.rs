use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::{assign_frame_labels, centroid_values, mean_pairwise_cosine_distance};
use crate::asr::AsrModel;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::synth::Domain;

/// Mean encoder feature of the frames pseudo-labelled with one character.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidRow {
    pub domain: Domain,
    pub symbol: usize,
    /// Printable symbol name.
    pub name: String,
    /// Frames assigned to the symbol.
    pub count: usize,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CentroidDump {
    pub rows: Vec<CentroidRow>,
}

impl CentroidDump {
    /// Mean pairwise cosine distance between the centroids of distinct
    /// characters in `domain`; `None` with fewer than two characters.
    pub fn spread(&self, domain: Domain) -> Option<f64> {
        let v: Vec<Vec<f64>> = self
            .rows
            .iter()
            .filter(|r| r.domain == domain)
            .map(|r| r.vector.clone())
            .collect();
        mean_pairwise_cosine_distance(&v)
    }

    pub fn total_count(&self, domain: Domain) -> usize {
        self.rows.iter().filter(|r| r.domain == domain).map(|r| r.count).sum()
    }

    /// `domain,char,count,v1..vH`, one row per domain and observed character.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.rows.first().map_or(0, |r| r.vector.len());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["domain".to_string(), "char".into(), "count".into()];
        header.extend((1..=dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.domain.as_str().to_string(), r.name.clone(), r.count.to_string()];
            rec.extend(r.vector.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-domain character centroids under the model's own argmax labels.
/// Blank frames are left out.
pub fn dump_centroids(model: &AsrModel, inputs: &[(Domain, &[Tensor])]) -> Result<CentroidDump> {
    let blank = model.symbols.blank();
    let mut groups: BTreeMap<Domain, BTreeMap<usize, Vec<Vec<f64>>>> = BTreeMap::new();
    for (domain, feats) in inputs {
        let g = groups.entry(*domain).or_default();
        for f in feats.iter() {
            let out = model.encode_eval(f)?;
            let labels = assign_frame_labels(&out.log_probs);
            for (t, &c) in labels.0.iter().enumerate() {
                if c != blank {
                    g.entry(c).or_default().push(out.frames.row(t).to_vec());
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (domain, g) in groups {
        for (symbol, (vector, count)) in centroid_values(&g) {
            rows.push(CentroidRow {
                domain,
                symbol,
                name: model.symbols.name(symbol),
                count,
                vector,
            });
        }
    }
    Ok(CentroidDump { rows })
}
