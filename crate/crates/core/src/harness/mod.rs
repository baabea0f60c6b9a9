//! Experiment orchestration: source pretraining, adaptation by method,
//! evaluation, centroid dumps and the method-by-task matrix.

mod adapt;
mod centroids;
mod config;
mod data;
mod eval;
mod matrix;
mod metrics;
mod train;

pub use adapt::{adapt, adapt_with, grl_ramp, AdaptOutcome};
pub use centroids::{dump_centroids, CentroidDump, CentroidRow};
pub use config::{AdaptConfig, ExperimentConfig, MatrixConfig, PretrainConfig, PseudoLabelMode, TaskConfig, SEED_ENV};
pub use data::{extractor, load_corpus, prepare_labeled, prepare_unlabeled, BatchSampler, LabeledExample, UnlabeledExample};
pub use eval::{evaluate, levenshtein, transcribe, word_error_rate, DomainSummary, EvalReport, UtteranceResult};
pub use matrix::{run_matrix, MatrixCell, MatrixReport};
pub use metrics::{read_metrics, MetricsHeader, MetricsWriter};
pub use train::{pretrain, pretrain_with, PretrainOutcome, PretrainRecord};
