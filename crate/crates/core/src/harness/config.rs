use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptationConfig;
use crate::asr::ModelConfig;
use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::features::{AugmentConfig, FbankConfig};
use crate::synth::{CorpusConfig, DomainShift, NoiseKind};

/// Environment variable that overrides every seed in a loaded config.
pub const SEED_ENV: &str = "MADI_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 800,
            batch_size: 8,
            optimizer: AdamConfig {
                base_lr: 0.02,
                warmup_steps: 200,
                ..AdamConfig::default()
            },
            clip_norm: 5.0,
        }
    }
}

/// Where target pseudo labels come from during adaptation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoLabelMode {
    /// Re-derived from the current model at every step.
    Refresh,
    /// Computed once with the pretrained model.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub steps: u64,
    /// Utterances per domain per step.
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
    pub pseudo_labels: PseudoLabelMode,
    pub augment: AugmentConfig,
    /// Hidden width of the DAT domain classifier.
    pub discriminator_width: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 8,
            optimizer: AdamConfig {
                base_lr: 0.004,
                warmup_steps: 50,
                ..AdamConfig::default()
            },
            clip_norm: 5.0,
            pseudo_labels: PseudoLabelMode::Refresh,
            augment: AugmentConfig::default(),
            discriminator_width: 32,
        }
    }
}

/// One domain-shift condition of the method matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub name: String,
    pub shift: DomainShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub seeds: Vec<u64>,
    pub tasks: Vec<TaskConfig>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            tasks: vec![
                TaskConfig {
                    name: "cross-device".into(),
                    shift: DomainShift::device(),
                },
                TaskConfig {
                    name: "cross-environment".into(),
                    shift: DomainShift::environment(NoiseKind::Laughter, 15.0),
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    /// Read the corpus from this directory instead of generating it.
    pub corpus_dir: Option<PathBuf>,
    pub features: FbankConfig,
    pub model: ModelConfig,
    /// CTC weight in the joint recognition loss.
    pub ctc_weight: f64,
    pub pretrain: PretrainConfig,
    pub adapt: AdaptConfig,
    pub adaptation: AdaptationConfig,
    pub matrix: MatrixConfig,
    pub output_dir: PathBuf,
    /// Seeds model initialization, batch order and augmentation.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            corpus_dir: None,
            features: FbankConfig::default(),
            model: ModelConfig::default(),
            ctc_weight: 0.3,
            pretrain: PretrainConfig::default(),
            adapt: AdaptConfig::default(),
            adaptation: AdaptationConfig::default(),
            matrix: MatrixConfig::default(),
            output_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.model.encoder.validate()?;
        self.adaptation.validate()?;
        self.adapt.augment.validate()?;
        if self.model.encoder.feat_dim != self.features.num_mel_bins {
            return Err(Error::InvalidArgument(format!(
                "encoder expects {} features but the filterbank has {} bins",
                self.model.encoder.feat_dim, self.features.num_mel_bins
            )));
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return Err(Error::InvalidArgument("ctc_weight must be in [0, 1]".into()));
        }
        if self.pretrain.batch_size == 0 || self.adapt.batch_size == 0 {
            return Err(Error::InvalidArgument("batch sizes must be positive".into()));
        }
        if let Some(dir) = &self.corpus_dir {
            if !dir.is_dir() {
                return Err(Error::InvalidArgument(format!("corpus_dir {} does not exist", dir.display())));
            }
        }
        if self.matrix.seeds.is_empty() || self.matrix.tasks.is_empty() {
            return Err(Error::InvalidArgument("matrix needs at least one seed and one task".into()));
        }
        Ok(())
    }

    /// Sets the run seed and the corpus seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.corpus.seed = seed;
        self
    }

    /// Applies [`SEED_ENV`] when set.
    pub fn with_env_seed(self) -> Result<Self> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an integer")))?;
                Ok(self.with_seed(seed))
            }
            Err(_) => Ok(self),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"seed": 4, "adaptation": {"method": "cmatch"}}"#).unwrap();
        let c = ExperimentConfig::load(&j).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.adaptation.method, crate::adaptation::Method::CMatch);
        assert_eq!(c.adaptation.alpha, 5.0);

        let t = dir.path().join("c.toml");
        std::fs::write(&t, "ctc_weight = 0.5\n[pretrain]\nsteps = 7\n[adaptation]\nmethod = \"dat\"\n").unwrap();
        let c = ExperimentConfig::load(&t).unwrap();
        assert_eq!((c.ctc_weight, c.pretrain.steps), (0.5, 7));
        assert_eq!(c.pretrain.batch_size, PretrainConfig::default().batch_size);

        std::fs::write(&j, r#"{"corpus_dir": "/definitely/not/here"}"#).unwrap();
        assert!(ExperimentConfig::load(&j).is_err());
        std::fs::write(&j, r#"{"adaptation": {"method": "madi", "beta": 0}}"#).unwrap();
        assert!(ExperimentConfig::load(&j).is_err());
    }

    #[test]
    fn saved_config_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let c = ExperimentConfig::default().with_seed(9);
        c.save(&p).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap(), c);
    }
}
