//! CTC on a hand-sized example: loss, per-frame occupation, greedy decode.

use madi::asr::{ctc_greedy_decode, ctc_loss, SymbolTable};
use madi::autodiff::{Graph, Tensor};

fn main() -> madi::Result<()> {
    let symbols = SymbolTable::letters_with_space(2)?; // a, b, space, blank
    let blank = symbols.blank();
    let logits = Tensor::matrix(
        6,
        symbols.ctc_width(),
        vec![
            3.0, 0.0, 0.0, 1.0, //
            2.0, 0.0, 0.0, 2.0, //
            0.0, 0.0, 0.0, 3.0, //
            0.0, 0.0, 3.0, 0.0, //
            0.0, 3.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, 3.0,
        ],
    )?;
    let g = Graph::new();
    let log_probs = g.constant(logits).log_softmax().value();
    let labels = symbols.encode("a b")?;
    let out = ctc_loss(&log_probs, &labels, blank)?;
    println!("labels {labels:?}, -log p = {:.4}", out.loss);
    println!("frame occupation (minus the gradient):");
    for t in 0..out.grad.rows() {
        let occ: Vec<String> = out.grad.row(t).iter().map(|g| format!("{:5.2}", (-g).max(0.0))).collect();
        println!("  t={t}: {}", occ.join(" "));
    }
    let hyp = ctc_greedy_decode(&log_probs, blank);
    println!("greedy: {:?} -> {:?}", hyp, symbols.decode(&hyp));
    Ok(())
}
