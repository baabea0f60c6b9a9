use std::collections::BTreeMap;

use proptest::prelude::*;

use madi::adaptation::{
    compute_centroids, discrimination_loss, gather_character_features, matching_loss, mmd_squared,
    FrameAssignment, KernelBank, View,
};
use madi::asr::{collapse_path, ctc_loss, min_frames};
use madi::autodiff::{Graph, Tensor};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn log_softmax_rows(t: &Tensor) -> Tensor {
    let g = Graph::new();
    g.constant(t.clone()).log_softmax().value()
}

fn enumerate_ctc(lp: &Tensor, labels: &[usize], blank: usize) -> f64 {
    let (t, v) = (lp.rows(), lp.cols());
    let mut p = 0.0;
    for code in 0..v.pow(t as u32) {
        let path: Vec<usize> = (0..t).map(|i| code / v.pow(i as u32) % v).collect();
        if collapse_path(&path, blank) == labels {
            p += path.iter().enumerate().map(|(i, &k)| lp.at(i, k)).sum::<f64>().exp();
        }
    }
    -p.ln()
}

fn ctc_case() -> impl Strategy<Value = (Tensor, Vec<usize>, usize)> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(t, n)| {
        let labels = prop::collection::vec(0..n, 1..=3).prop_filter("feasible", move |l| min_frames(l) <= t);
        (matrix(t, n + 1), labels, Just(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ctc_matches_path_enumeration((logits, labels, blank) in ctc_case()) {
        let lp = log_softmax_rows(&logits);
        let dp = ctc_loss(&lp, &labels, blank).unwrap().loss;
        prop_assert!((dp - enumerate_ctc(&lp, &labels, blank)).abs() < 1e-10);
    }

    #[test]
    fn ctc_gradient_rows_sum_to_minus_one_over_posteriors((logits, labels, blank) in ctc_case()) {
        // With normalized inputs, each row of dL/dlogp is minus the
        // frame's occupation probabilities, which sum to one.
        let lp = log_softmax_rows(&logits);
        let out = ctc_loss(&lp, &labels, blank).unwrap();
        for r in 0..out.grad.rows() {
            let s: f64 = out.grad.row(r).iter().sum();
            prop_assert!((s + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mmd_is_nonnegative_symmetric_and_zero_on_itself(a in matrix(4, 3), b in matrix(3, 3), s2 in 0.1f64..5.0) {
        let g = Graph::new();
        let (va, vb) = (g.constant(a), g.constant(b));
        let bank = KernelBank::new(vec![s2, 2.0 * s2]).unwrap();
        let ab = mmd_squared(va, vb, &bank).unwrap().item();
        prop_assert!(ab >= -1e-12);
        prop_assert!((ab - mmd_squared(vb, va, &bank).unwrap().item()).abs() < 1e-12);
        prop_assert!(mmd_squared(va, va, &bank).unwrap().item().abs() < 1e-12);
    }

    #[test]
    fn matching_ignores_frame_order(x in matrix(6, 2), y in matrix(6, 2), perm in Just((0..6).rev().collect::<Vec<usize>>())) {
        let a = FrameAssignment(vec![0, 1, 2, 0, 1, 3]);
        let b = FrameAssignment(vec![1, 0, 3, 2, 0, 1]);
        let bank = KernelBank::single(1.0).unwrap();
        let g = Graph::new();
        let base = matching_loss(
            &gather_character_features(g.constant(x.clone()), &a, 3),
            &gather_character_features(g.constant(y.clone()), &b, 3),
            &bank,
        ).unwrap();
        let xp = g.constant(x).select_rows(&perm);
        let ap = FrameAssignment(perm.iter().map(|&i| a.0[i]).collect());
        let shuffled = matching_loss(
            &gather_character_features(xp, &ap, 3),
            &gather_character_features(g.constant(y), &b, 3),
            &bank,
        ).unwrap();
        prop_assert_eq!(base.shared, 3);
        prop_assert!((base.loss.item() - shuffled.loss.item()).abs() < 1e-12);
    }

    #[test]
    fn nt_xent_is_symmetric_in_its_views(x in matrix(5, 3), y in matrix(5, 3), tau in 0.05f64..1.0) {
        let a = FrameAssignment(vec![0, 1, 2, 0, 1]);
        let b = FrameAssignment(vec![2, 1, 0, 1, 0]);
        let g = Graph::new();
        let sa = gather_character_features(g.constant(x), &a, 9);
        let sb = gather_character_features(g.constant(y), &b, 9);
        let ab = discrimination_loss(&compute_centroids(&sa, View::Target), &compute_centroids(&sb, View::Augmented), tau).unwrap();
        let ba = discrimination_loss(&compute_centroids(&sb, View::Target), &compute_centroids(&sa, View::Augmented), tau).unwrap();
        prop_assert!((ab.loss.item() - ba.loss.item()).abs() < 1e-12);
        prop_assert!(ab.loss.item() > 0.0);
    }
}

#[test]
fn centroid_loss_prefers_aligned_views() {
    let g = Graph::new();
    let rows = |v: &[[f64; 2]]| g.constant(Tensor::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap());
    let asg = FrameAssignment(vec![0, 1]);
    let a = gather_character_features(rows(&[[1.0, 0.0], [0.0, 1.0]]), &asg, 9);
    let aligned = gather_character_features(rows(&[[1.0, 0.1], [0.1, 1.0]]), &asg, 9);
    let swapped = gather_character_features(rows(&[[0.1, 1.0], [1.0, 0.1]]), &asg, 9);
    let loss = |b| {
        discrimination_loss(&compute_centroids(&a, View::Target), &compute_centroids(b, View::Augmented), 0.1)
            .unwrap()
            .loss
            .item()
    };
    assert!(loss(&aligned) < loss(&swapped));
    let sets: BTreeMap<_, _> = a.sets.iter().map(|(k, v)| (*k, v.rows())).collect();
    assert_eq!(sets, BTreeMap::from([(0, 1), (1, 1)]));
}
