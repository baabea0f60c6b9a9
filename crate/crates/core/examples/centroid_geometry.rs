//! Target character centroids after CMatch and after MADI: MADI's added
//! contrastive term should push distinct characters further apart.
//!
//!     cargo run --release --example centroid_geometry [-- OUT_DIR]

use std::path::PathBuf;

use madi::adaptation::Method;
use madi::harness::{adapt, dump_centroids, extractor, load_corpus, prepare_labeled, prepare_unlabeled, pretrain, ExperimentConfig};
use madi::synth::Domain;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default().with_env_seed()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let corpus = load_corpus(&cfg)?;
    let fx = extractor(&cfg)?;
    let symbols = cfg.corpus.symbols()?;
    let source = prepare_labeled(&corpus.source_train, &symbols, &fx)?;
    let target = prepare_unlabeled(&corpus.target_train_unlabeled(), &fx)?;
    let test: Vec<_> = prepare_labeled(&corpus.target_test, &symbols, &fx)?.into_iter().map(|e| e.feats).collect();
    let src_test: Vec<_> = prepare_labeled(&corpus.source_test, &symbols, &fx)?.into_iter().map(|e| e.feats).collect();

    let model = pretrain(&source, &symbols, &cfg)?.model;
    for method in [Method::So, Method::CMatch, Method::Madi] {
        let mut c = cfg.clone();
        c.adaptation.method = method;
        let adapted = adapt(&model, &source, &target, &c)?.model;
        let dump = dump_centroids(&adapted, &[(Domain::Source, &src_test), (Domain::Target, &test)])?;
        let path = out.join(format!("centroids-{}.csv", method.as_str()));
        dump.write_csv(&path)?;
        println!(
            "{:<7} target spread {:.4}, source spread {:.4}, {} rows -> {}",
            method.label(),
            dump.spread(Domain::Target).unwrap_or(f64::NAN),
            dump.spread(Domain::Source).unwrap_or(f64::NAN),
            dump.rows.len(),
            path.display()
        );
    }
    Ok(())
}
