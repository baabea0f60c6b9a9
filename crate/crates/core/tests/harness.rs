use madi::adaptation::{LossBreakdown, Method};
use madi::asr::{load_checkpoint, save_checkpoint, AsrModel, Cmvn};
use madi::harness::{
    adapt, dump_centroids, evaluate, extractor, load_corpus, prepare_labeled, prepare_unlabeled, read_metrics,
    ExperimentConfig, LabeledExample, MetricsHeader, MetricsWriter, UnlabeledExample,
};
use madi::synth::{Domain, SplitSizes};

struct Fixture {
    cfg: ExperimentConfig,
    model: AsrModel,
    source: Vec<LabeledExample>,
    target: Vec<UnlabeledExample>,
    target_test: Vec<LabeledExample>,
}

/// An untrained model: its argmax labels are spread over many characters,
/// which is all the wiring checks need.
fn fixture() -> Fixture {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.splits = SplitSizes {
        source_train: 12,
        target_train: 8,
        target_test: 4,
        source_test: 2,
    };
    cfg.adapt.steps = 4;
    cfg.adapt.batch_size = 4;
    let corpus = load_corpus(&cfg).unwrap();
    let fx = extractor(&cfg).unwrap();
    let symbols = cfg.corpus.symbols().unwrap();
    let source = prepare_labeled(&corpus.source_train, &symbols, &fx).unwrap();
    let mut model = AsrModel::new(cfg.model.clone(), symbols.clone(), 3).unwrap();
    model.cmvn = Cmvn::estimate(source.iter().map(|e| &e.feats)).unwrap();
    Fixture {
        target: prepare_unlabeled(&corpus.target_train_unlabeled(), &fx).unwrap(),
        target_test: prepare_labeled(&corpus.target_test, &symbols, &fx).unwrap(),
        source,
        model,
        cfg,
    }
}

fn with_method(cfg: &ExperimentConfig, m: Method) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.adaptation.method = m;
    c
}

#[test]
fn source_only_returns_the_input_checkpoint() {
    let f = fixture();
    let out = adapt(&f.model, &f.source, &f.target, &with_method(&f.cfg, Method::So)).unwrap();
    assert_eq!(out.model, f.model);
    assert!(out.records.is_empty());
}

#[test]
fn method_wiring_shows_in_the_loss_columns() {
    let f = fixture();
    let cm = adapt(&f.model, &f.source, &f.target, &with_method(&f.cfg, Method::CMatch)).unwrap();
    assert!(cm.records.iter().all(|r| r.l_di == 0.0));
    assert!(cm.records.iter().any(|r| r.l_ma > 0.0));

    let madi = adapt(&f.model, &f.source, &f.target, &with_method(&f.cfg, Method::Madi)).unwrap();
    let shared: Vec<&LossBreakdown> = madi.records.iter().filter(|r| r.shared_char_count > 0).collect();
    assert!(!shared.is_empty());
    assert!(shared.iter().all(|r| r.l_ma != 0.0 && r.l_di != 0.0));
    assert_ne!(madi.model, f.model);

    let dat = adapt(&f.model, &f.source, &f.target, &with_method(&f.cfg, Method::Dat)).unwrap();
    assert!(dat.records.iter().all(|r| r.l_ma > 0.0 && r.l_di == 0.0));
    assert!(dat.model.params.names().all(|n| !n.starts_with("dat.")));

    let cdcl = adapt(&f.model, &f.source, &f.target, &with_method(&f.cfg, Method::Cdcl)).unwrap();
    assert!(cdcl.records.iter().all(|r| r.l_ma == 0.0));
    assert!(cdcl.records.iter().any(|r| r.l_di > 0.0));
}

#[test]
fn adaptation_is_deterministic() {
    let f = fixture();
    let c = with_method(&f.cfg, Method::Madi);
    let a = adapt(&f.model, &f.source, &f.target, &c).unwrap();
    let b = adapt(&f.model, &f.source, &f.target, &c).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.records, b.records);
}

#[test]
fn metrics_carry_every_breakdown_field() {
    let f = fixture();
    let c = with_method(&f.cfg, Method::Madi);
    let out = adapt(&f.model, &f.source, &f.target, &c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.jsonl");
    let mut w = MetricsWriter::create(&p, &MetricsHeader::adapt(&c)).unwrap();
    for r in &out.records {
        w.write(r).unwrap();
    }
    w.finish().unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    for line in text.lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["step", "l_asr", "l_ctc", "l_att", "l_ma", "l_di", "total", "shared_char_count", "skipped", "lr"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
    let (h, rows): (_, Vec<LossBreakdown>) = read_metrics(&p).unwrap();
    assert_eq!(h.lambda, 0.3);
    assert_eq!(rows, out.records);
}

#[test]
fn checkpoint_roundtrip_keeps_evaluation_identical() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    save_checkpoint(&p, &f.model).unwrap();
    let back = load_checkpoint(&p).unwrap();
    assert_eq!(
        evaluate(&f.model, &f.target_test, "t").unwrap(),
        evaluate(&back, &f.target_test, "t").unwrap()
    );
}

#[test]
fn centroid_dump_counts_non_blank_frames() {
    let f = fixture();
    let feats: Vec<_> = f.target_test.iter().map(|e| e.feats.clone()).collect();
    let src: Vec<_> = f.source.iter().take(3).map(|e| e.feats.clone()).collect();
    let dump = dump_centroids(&f.model, &[(Domain::Source, &src), (Domain::Target, &feats)]).unwrap();
    let blank = f.model.symbols.blank();
    let non_blank: usize = feats
        .iter()
        .map(|x| {
            let out = f.model.encode_eval(x).unwrap();
            madi::adaptation::assign_frame_labels(&out.log_probs)
                .0
                .iter()
                .filter(|&&c| c != blank)
                .count()
        })
        .sum();
    assert_eq!(dump.total_count(Domain::Target), non_blank);
    let observed = |d: Domain| dump.rows.iter().filter(|r| r.domain == d).count();
    assert_eq!(dump.rows.len(), observed(Domain::Source) + observed(Domain::Target));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    dump.write_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("domain,char,count,v1,"));
    assert_eq!(header.split(',').count(), 3 + f.cfg.model.encoder.hidden);
    assert_eq!(lines.count(), dump.rows.len());
}

#[test]
fn empty_inputs_are_rejected() {
    let f = fixture();
    let c = with_method(&f.cfg, Method::Madi);
    assert!(adapt(&f.model, &f.source, &[], &c).is_err());
    assert!(adapt(&f.model, &[], &f.target, &c).is_err());
}
