//! Source pretraining followed by one adaptation method.
//!
//!     cargo run --release --example pretrain_and_adapt [-- METHOD]

use madi::adaptation::Method;
use madi::harness::{adapt_with, evaluate, extractor, load_corpus, prepare_labeled, prepare_unlabeled, pretrain_with, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let method: Method = std::env::args().nth(1).as_deref().unwrap_or("madi").parse()?;
    let mut cfg = ExperimentConfig::default().with_env_seed()?;
    cfg.adaptation.method = method;

    let corpus = load_corpus(&cfg)?;
    let fx = extractor(&cfg)?;
    let symbols = cfg.corpus.symbols()?;
    let source = prepare_labeled(&corpus.source_train, &symbols, &fx)?;
    let source_test = prepare_labeled(&corpus.source_test, &symbols, &fx)?;
    let target = prepare_unlabeled(&corpus.target_train_unlabeled(), &fx)?;
    let target_test = prepare_labeled(&corpus.target_test, &symbols, &fx)?;

    let pre = pretrain_with(&source, &symbols, &cfg, |r| {
        if r.step % 200 == 0 {
            println!("pretrain {:>4}: loss {:.3} (ctc {:.3}, att {:.3})", r.step, r.loss, r.l_ctc, r.l_att);
        }
    })?;
    let so_src = evaluate(&pre.model, &source_test, "source_test")?;
    let so_tgt = evaluate(&pre.model, &target_test, "target_test")?;
    println!("source only: source WER {:.2}%, target WER {:.2}%", 100.0 * so_src.wer, 100.0 * so_tgt.wer);

    let out = adapt_with(&pre.model, &source, &target, &cfg, |r| {
        if r.step % 50 == 0 {
            println!(
                "adapt {:>4}: asr {:.3} ma {:.4} di {:.4} shared {}",
                r.step, r.l_asr, r.l_ma, r.l_di, r.shared_char_count
            );
        }
    })?;
    let tgt = evaluate(&out.model, &target_test, "target_test")?;
    println!("{}: target WER {:.2}% (CER {:.2}%)", method.label(), 100.0 * tgt.wer, 100.0 * tgt.cer);
    for u in tgt.utterances.iter().take(3) {
        println!("  ref {:?}\n  hyp {:?}", u.reference, u.hypothesis);
    }
    Ok(())
}
