//! All five methods on both shift tasks, averaged over seeds.
//!
//!     cargo run --release --example method_matrix [-- CONFIG]

use std::path::Path;

use madi::harness::{run_matrix, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(Path::new(&p))?,
        None => ExperimentConfig::default(),
    };
    let report = run_matrix(&cfg, |c| {
        let wer = c.wer.map_or_else(|| "failed".into(), |w| format!("{:.2}%", 100.0 * w));
        eprintln!("seed {} {:<18} {:<7} {wer}", c.seed, c.task, c.method.label());
    })?;
    print!("{}", report.pretty());
    Ok(())
}
