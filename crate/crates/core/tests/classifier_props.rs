//! Property checks for the classifiers.

use becaptcha::classify::{train_classifier, ClassifierKind, ClassifierSpec, KnnModel};
use becaptcha::features::{FeatureMode, FeatureVector};
use becaptcha::trace::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let label = if v[0] + 0.5 * v[1] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 {
                Label::HandcraftedBot
            } else {
                Label::Human
            };
            FeatureVector::new(FeatureMode::TouchOnly, v, label).unwrap()
        })
        .collect()
}

fn swapped(set: &[FeatureVector]) -> Vec<FeatureVector> {
    set.iter()
        .map(|v| FeatureVector {
            label: if v.label.is_bot() { Label::Human } else { Label::HandcraftedBot },
            ..v.clone()
        })
        .collect()
}

#[test]
fn label_swap_mirrors_vote_scores() {
    let train = dataset(150, 3);
    let queries = dataset(100, 4);
    for kind in [ClassifierKind::Knn, ClassifierKind::RandomForest] {
        let spec = ClassifierSpec {
            n_trees: 30,
            seed: 9,
            ..ClassifierSpec::of(kind)
        };
        let a = train_classifier(&spec, &train).unwrap();
        let b = train_classifier(&spec, &swapped(&train)).unwrap();
        for q in &queries {
            let (s, s2) = (a.bot_score(q).unwrap(), b.bot_score(q).unwrap());
            assert!((s2 - (1.0 - s)).abs() < 1e-12, "{kind}: {s} vs {s2}");
        }
    }
}

#[test]
fn forest_is_reproducible_and_pure() {
    let train = dataset(120, 5);
    let spec = ClassifierSpec {
        n_trees: 40,
        seed: 1,
        ..ClassifierSpec::default()
    };
    let a = train_classifier(&spec, &train).unwrap();
    let b = train_classifier(&spec, &train).unwrap();
    assert_eq!(a, b);
    let q = &dataset(1, 6)[0];
    let scores: Vec<u64> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..8).map(|_| s.spawn(|| a.bot_score(q).unwrap().to_bits())).collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(scores.windows(2).all(|w| w[0] == w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn knn_bot_duplicate_never_lowers_score(
        pts in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 3), any::<bool>()), 1..30),
        query in prop::collection::vec(-2.0f64..2.0, 3),
        k in 1usize..10,
    ) {
        let k = k.min(pts.len());
        let (points, labels): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
        let before = KnnModel::fit(k, points.clone(), labels.clone()).score(&query).unwrap();
        let mut points2 = points;
        let mut labels2 = labels;
        points2.push(query.clone());
        labels2.push(true);
        let after = KnnModel::fit(k, points2, labels2).score(&query).unwrap();
        prop_assert!(after >= before);
    }
}
