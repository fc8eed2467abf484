//! Rank-statistic AUC against independent ROC integration.

use becaptcha::eval::{auc, compute_metrics};
use becaptcha_oracles::{pairwise_auc, trapezoid_auc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_random_score_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for case in 0..1000 {
        let n = rng.random_range(2..120);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse rounding on half the sets forces ties.
        let coarse = case % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if coarse {
                    (s * 10.0).round() / 10.0
                } else {
                    s
                }
            })
            .collect();
        let got = auc(&scores, &labels).unwrap();
        let trap = trapezoid_auc(&scores, &labels);
        assert!((got - trap).abs() <= 1e-9, "case {case}: {got} vs {trap}");
        assert!((got - pairwise_auc(&scores, &labels)).abs() <= 1e-9);
    }
}

#[test]
fn worked_example_is_exactly_75() {
    let m = compute_metrics(&[0.8, 0.4, 0.6, 0.2], &[true, true, false, false], 0.5).unwrap();
    assert_eq!(m.auc, Some(75.0));
    // Threshold 0.5: bots {0.8 hit, 0.4 miss}, humans {0.6 false alarm, 0.2 ok}.
    assert_eq!((m.confusion.tp, m.confusion.fn_, m.confusion.fp, m.confusion.tn), (1, 1, 1, 1));
    assert_eq!((m.acc, m.precision, m.recall, m.f1), (50.0, 50.0, 50.0, 50.0));
}
