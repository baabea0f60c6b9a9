//! Central finite-difference gradient checking.

use super::{Graph, Tensor, Var};

/// Result of comparing analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest elementwise relative error over all inputs.
    pub max_rel_error: f64,
    /// Input index and flat offset where it occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Elementwise `|a - n| / max(|a|, |n|, floor)`. The floor keeps entries
/// that are numerically zero from dominating through cancellation noise.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks `f`'s gradient with respect to every input by central differences
/// with step `h`.
///
/// `f` receives one gradient-receiving leaf per input and must return a
/// scalar.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> GradCheck
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    const FLOOR: f64 = 1e-4;

    let graph = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let out = f(&graph, &vars);
    let grads = out.backward().expect("loss must depend on inputs");
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|v| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape())))
        .collect();

    let eval = |ins: &[Tensor]| {
        let g = Graph::new();
        let vs: Vec<_> = ins.iter().map(|t| g.constant(t.clone())).collect();
        f(&g, &vs).item()
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for k in 0..a.len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + h;
            let up = eval(&work);
            work[i].data_mut()[k] = orig - h;
            let down = eval(&work);
            work[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_error(a.data()[k], numeric, FLOOR);
            report.checked += 1;
            if e > report.max_rel_error || e.is_nan() {
                report.max_rel_error = if e.is_nan() { f64::INFINITY } else { e };
                report.worst = (i, k);
            }
        }
    }
    report
}
