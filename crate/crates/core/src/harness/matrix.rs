use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adapt::adapt;
use super::centroids::dump_centroids;
use super::config::ExperimentConfig;
use super::data::{extractor, prepare_labeled, prepare_unlabeled, LabeledExample};
use super::eval::evaluate;
use super::train::pretrain;
use crate::adaptation::Method;
use crate::asr::AsrModel;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::synth::{generate_corpus, Domain};

/// Target-test result of one method on one task and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub seed: u64,
    pub task: String,
    pub method: Method,
    pub wer: Option<f64>,
    pub cer: Option<f64>,
    /// Mean pairwise cosine distance of target character centroids.
    pub target_spread: Option<f64>,
    /// Set when the cell failed; the other cells still run.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub seeds: Vec<u64>,
    pub tasks: Vec<String>,
    pub methods: Vec<Method>,
    pub cells: Vec<MatrixCell>,
}

impl MatrixReport {
    pub fn cell(&self, seed: u64, task: &str, method: Method) -> Option<&MatrixCell> {
        self.cells
            .iter()
            .find(|c| c.seed == seed && c.task == task && c.method == method)
    }

    /// Seed-averaged WER; `None` if any seed failed.
    pub fn task_wer(&self, task: &str, method: Method) -> Option<f64> {
        mean(self.seeds.iter().map(|&s| self.cell(s, task, method).and_then(|c| c.wer)))
    }

    /// Task average of the seed-averaged WERs.
    pub fn average_wer(&self, method: Method) -> Option<f64> {
        mean(self.tasks.iter().map(|t| self.task_wer(t, method)))
    }

    /// Task rows, method columns and an `Average` row; WER as a fraction,
    /// empty where a cell failed.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["task".to_string()];
        header.extend(self.methods.iter().map(|m| m.label().to_string()));
        w.write_record(&header)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in &self.tasks {
            let mut row = vec![t.clone()];
            row.extend(self.methods.iter().map(|&m| fmt(self.task_wer(t, m))));
            w.write_record(&row)?;
        }
        let mut row = vec!["Average".to_string()];
        row.extend(self.methods.iter().map(|&m| fmt(self.average_wer(m))));
        w.write_record(&row)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Every cell, one per line.
    pub fn write_cells(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for c in &self.cells {
            w.serialize(CellRow::from(c))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// WER table in percent.
    pub fn pretty(&self) -> String {
        let width = self.tasks.iter().map(|t| t.len()).max().unwrap_or(0).max(7) + 2;
        let mut s = format!("{:<width$}", "WER %");
        for m in &self.methods {
            let _ = write!(s, "{:>9}", m.label());
        }
        s.push('\n');
        let fmt = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| format!("{:.2}", 100.0 * x));
        for t in &self.tasks {
            let _ = write!(s, "{t:<width$}");
            for &m in &self.methods {
                let _ = write!(s, "{:>9}", fmt(self.task_wer(t, m)));
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<width$}", "Average");
        for &m in &self.methods {
            let _ = write!(s, "{:>9}", fmt(self.average_wer(m)));
        }
        s.push('\n');
        s
    }
}

#[derive(Serialize)]
struct CellRow<'a> {
    seed: u64,
    task: &'a str,
    method: &'static str,
    wer: Option<f64>,
    cer: Option<f64>,
    target_spread: Option<f64>,
    error: Option<&'a str>,
}

impl<'a> From<&'a MatrixCell> for CellRow<'a> {
    fn from(c: &'a MatrixCell) -> Self {
        Self {
            seed: c.seed,
            task: &c.task,
            method: c.method.label(),
            wer: c.wer,
            cer: c.cer,
            target_spread: c.target_spread,
            error: c.error.as_deref(),
        }
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    let v = v?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every method on every task and seed. The source domain does not
/// depend on the task, so each seed pretrains once and the SO cells score
/// that model directly. Corpora are always generated; `corpus_dir` is
/// ignored.
pub fn run_matrix(cfg: &ExperimentConfig, mut on_cell: impl FnMut(&MatrixCell)) -> Result<MatrixReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &seed in &cfg.matrix.seeds {
        let base = cfg.clone().with_seed(seed);
        let mut pretrained: Option<std::result::Result<AsrModel, String>> = None;
        for task in &cfg.matrix.tasks {
            let mut tc = base.clone();
            tc.corpus_dir = None;
            tc.corpus.target = task.shift.clone();
            let prepared = prepare_task(&tc);
            let model = match (&prepared, &pretrained) {
                (_, Some(m)) => m.clone(),
                (Ok(p), None) => {
                    let m = pretrain(&p.source, &tc.corpus.symbols()?, &tc)
                        .map(|o| o.model)
                        .map_err(|e| e.to_string());
                    pretrained = Some(m.clone());
                    m
                }
                (Err(e), None) => Err(e.to_string()),
            };
            for method in Method::ALL {
                let mut cell = MatrixCell {
                    seed,
                    task: task.name.clone(),
                    method,
                    wer: None,
                    cer: None,
                    target_spread: None,
                    error: None,
                };
                let outcome = match (&prepared, &model) {
                    (Ok(p), Ok(m)) => run_cell(m, p, &tc, method),
                    (Err(e), _) => Err(Error::InvalidArgument(e.to_string())),
                    (_, Err(e)) => Err(Error::InvalidArgument(format!("pretraining failed: {e}"))),
                };
                match outcome {
                    Ok((wer, cer, spread)) => {
                        cell.wer = Some(wer);
                        cell.cer = Some(cer);
                        cell.target_spread = spread;
                    }
                    Err(e) => cell.error = Some(e.to_string()),
                }
                on_cell(&cell);
                cells.push(cell);
            }
        }
    }
    Ok(MatrixReport {
        seeds: cfg.matrix.seeds.clone(),
        tasks: cfg.matrix.tasks.iter().map(|t| t.name.clone()).collect(),
        methods: Method::ALL.to_vec(),
        cells,
    })
}

struct PreparedTask {
    source: Vec<LabeledExample>,
    target_train: Vec<super::data::UnlabeledExample>,
    target_test: Vec<LabeledExample>,
}

fn prepare_task(cfg: &ExperimentConfig) -> Result<PreparedTask> {
    let corpus = generate_corpus(&cfg.corpus)?;
    let fx = extractor(cfg)?;
    let symbols = cfg.corpus.symbols()?;
    Ok(PreparedTask {
        source: prepare_labeled(&corpus.source_train, &symbols, &fx)?,
        target_train: prepare_unlabeled(&corpus.target_train_unlabeled(), &fx)?,
        target_test: prepare_labeled(&corpus.target_test, &symbols, &fx)?,
    })
}

fn run_cell(
    model: &AsrModel,
    task: &PreparedTask,
    cfg: &ExperimentConfig,
    method: Method,
) -> Result<(f64, f64, Option<f64>)> {
    let mut c = cfg.clone();
    c.adaptation.method = method;
    let adapted = adapt(model, &task.source, &task.target_train, &c)?.model;
    let report = evaluate(&adapted, &task.target_test, "target_test")?;
    let feats: Vec<Tensor> = task.target_test.iter().map(|e| e.feats.clone()).collect();
    let spread = dump_centroids(&adapted, &[(Domain::Target, &feats)])?.spread(Domain::Target);
    Ok((report.wer, report.cer, spread))
}
