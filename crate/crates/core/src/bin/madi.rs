use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use madi::adaptation::Method;
use madi::asr::{load_checkpoint, save_checkpoint};
use madi::harness::{
    adapt_with, dump_centroids, evaluate, extractor, load_corpus, prepare_labeled, prepare_unlabeled, pretrain_with,
    run_matrix, ExperimentConfig, MetricsHeader, MetricsWriter,
};
use madi::synth::{write_corpus, Domain, Split};

/// Character-level domain adaptation for small CTC recognizers.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-domain corpus and write manifests and WAV files.
    GenCorpus {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on labelled source audio.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-step metrics; defaults to `<out>.metrics.jsonl`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Adapt a checkpoint to unlabeled target audio.
    Adapt {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Greedy-decode a split and score it.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `test` (target test), or a split name such as `source_test`.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-domain character centroids as CSV.
    DumpCentroids {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `test` dumps both test splits; otherwise a split name.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every method on every task and seed of the config's matrix.
    RunMatrix {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<madi::Error>() {
                Some(madi::Error::Diverged { .. }) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(cfg.with_env_seed()?)
}

fn metrics_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".metrics.jsonl");
        PathBuf::from(s)
    })
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    match s {
        "test" => Ok(Split::TargetTest),
        _ => Split::parse(s).with_context(|| format!("unknown split {s:?}")),
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::GenCorpus { config: c, out } => {
            let cfg = config(c.as_deref())?;
            let corpus = load_corpus(&cfg)?;
            write_corpus(&corpus, &out)?;
            println!("wrote {} utterances to {}", corpus.len(), out.display());
        }
        Command::Pretrain { config: c, out, metrics } => {
            let cfg = config(c.as_deref())?;
            let corpus = load_corpus(&cfg)?;
            let symbols = cfg.corpus.symbols()?;
            let src = prepare_labeled(&corpus.source_train, &symbols, &extractor(&cfg)?)?;
            let mut log = MetricsWriter::create(&metrics_path(metrics, &out), &MetricsHeader::pretrain(&cfg))?;
            let mut io = Ok(());
            let outcome = pretrain_with(&src, &symbols, &cfg, |r| {
                if io.is_ok() {
                    io = log.write(r);
                }
            })?;
            io?;
            log.finish()?;
            save_checkpoint(&out, &outcome.model)?;
            let means = outcome.epoch_means();
            println!(
                "pretrained {} steps, epoch loss {:.4} -> {:.4}",
                cfg.pretrain.steps,
                means.first().copied().unwrap_or(f64::NAN),
                means.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Adapt {
            method,
            ckpt,
            config: c,
            out,
            metrics,
        } => {
            let mut cfg = config(c.as_deref())?;
            cfg.adaptation.method = method;
            cfg.adaptation.validate()?;
            let model = load_checkpoint(&ckpt)?;
            let corpus = load_corpus(&cfg)?;
            let fx = extractor(&cfg)?;
            let src = prepare_labeled(&corpus.source_train, &model.symbols, &fx)?;
            let tgt = prepare_unlabeled(&corpus.target_train_unlabeled(), &fx)?;
            let mut log = MetricsWriter::create(&metrics_path(metrics, &out), &MetricsHeader::adapt(&cfg))?;
            let mut io = Ok(());
            let outcome = adapt_with(&model, &src, &tgt, &cfg, |r| {
                if io.is_ok() {
                    io = log.write(r);
                }
            })?;
            io?;
            log.finish()?;
            save_checkpoint(&out, &outcome.model)?;
            println!(
                "{}: {} steps, {} skipped without shared characters",
                method.label(),
                outcome.records.len(),
                outcome.skipped_steps()
            );
        }
        Command::Evaluate {
            ckpt,
            config: c,
            split,
            out,
        } => {
            let cfg = config(c.as_deref())?;
            let split = parse_split(&split)?;
            let model = load_checkpoint(&ckpt)?;
            let corpus = load_corpus(&cfg)?;
            let ex = prepare_labeled(corpus.split(split), &model.symbols, &extractor(&cfg)?)?;
            let report = evaluate(&model, &ex, split.as_str())?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("{}: WER {:.2}%  CER {:.2}%", split.as_str(), 100.0 * report.wer, 100.0 * report.cer);
        }
        Command::DumpCentroids {
            ckpt,
            config: c,
            split,
            out,
        } => {
            let cfg = config(c.as_deref())?;
            let splits = match split.as_str() {
                "test" => vec![Split::SourceTest, Split::TargetTest],
                s => vec![parse_split(s)?],
            };
            let model = load_checkpoint(&ckpt)?;
            let corpus = load_corpus(&cfg)?;
            let fx = extractor(&cfg)?;
            let feats: Vec<(Domain, Vec<_>)> = splits
                .iter()
                .map(|&s| {
                    let f = corpus
                        .split(s)
                        .iter()
                        .map(|u| Ok(fx.compute(&u.waveform)?.frames))
                        .collect::<madi::Result<Vec<_>>>()?;
                    Ok((s.domain(), f))
                })
                .collect::<madi::Result<_>>()?;
            let inputs: Vec<(Domain, &[_])> = feats.iter().map(|(d, f)| (*d, f.as_slice())).collect();
            let dump = dump_centroids(&model, &inputs)?;
            dump.write_csv(&out)?;
            for (d, _) in &feats {
                if let Some(s) = dump.spread(*d) {
                    println!("{} centroid spread {:.4}", d.as_str(), s);
                }
            }
        }
        Command::RunMatrix { config: c, out } => {
            let cfg = config(c.as_deref())?;
            let report = run_matrix(&cfg, |cell| match (&cell.wer, &cell.error) {
                (Some(w), _) => eprintln!("seed {} {} {}: WER {:.2}%", cell.seed, cell.task, cell.method.label(), 100.0 * w),
                (_, Some(e)) => eprintln!("seed {} {} {}: failed: {e}", cell.seed, cell.task, cell.method.label()),
                _ => {}
            })?;
            report.write_csv(&out)?;
            report.write_cells(&out.with_extension("cells.csv"))?;
            print!("{}", report.pretty());
            let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
            if failed > 0 {
                bail!("{failed} matrix cells failed");
            }
        }
    }
    Ok(())
}
