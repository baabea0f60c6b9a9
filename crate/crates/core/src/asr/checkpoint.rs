//! Versioned JSON checkpoint of named parameter tensors.
//!
//! Floats are written with shortest round-trip formatting and parsed with
//! correct rounding, so save/load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{AsrModel, Cmvn, ModelConfig};
use super::symbols::SymbolTable;
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "madi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub symbols: SymbolTable,
    pub cmvn: Cmvn,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(m: &AsrModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: m.config.clone(),
            symbols: m.symbols.clone(),
            cmvn: m.cmvn.clone(),
            params: m
                .params
                .iter()
                .map(|(k, t)| NamedTensor {
                    name: k.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<AsrModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut params = ParamStore::new();
        for nt in self.params {
            let t = Tensor::new(nt.shape, nt.data)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", nt.name)))?;
            params.insert(nt.name, t);
        }
        Ok(AsrModel {
            config: self.model,
            symbols: self.symbols,
            cmvn: self.cmvn,
            params,
        })
    }
}

pub fn save_checkpoint(path: &Path, m: &AsrModel) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_model(m))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AsrModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::{DecoderConfig, EncoderConfig};

    #[test]
    fn roundtrip_is_bit_exact() {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                feat_dim: 4,
                hidden: 4,
                layers: 1,
                heads: 1,
                ff_dim: 4,
                subsampling: 2,
            },
            decoder: DecoderConfig { ff_dim: 4 },
        };
        let mut m = AsrModel::new(cfg, SymbolTable::letters_with_space(2).unwrap(), 3).unwrap();
        m.cmvn.mean = vec![0.1, 1.0 / 3.0, -7.25e-300, 1e300];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_checkpoint(&p, &m).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back, m);
        for ((_, a), (_, b)) in back.params.iter().zip(m.params.iter()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        std::fs::write(&p, "{\"format\":\"other\"}").unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
