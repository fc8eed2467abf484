//! Split integrity and standardizer isolation.

use std::collections::HashSet;

use becaptcha::classify::{train_classifier, ClassifierSpec};
use becaptcha::eval::{make_splits, BotSource, EvalConfig, FeaturePools, ItemRef, PoolSizes, Source};
use becaptcha::exec::Exec;
use becaptcha::features::{FeatureMode, FeatureVector, Standardizer};
use becaptcha::trace::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn humans(refs: &[ItemRef]) -> usize {
    refs.iter().filter(|r| r.source == Source::Human).count()
}

#[test]
fn hundred_repetitions_disjoint_balanced_sized() {
    let sizes = PoolSizes {
        human: 1000,
        handcrafted: 1000,
        gan: 1000,
    };
    for (cfg_i, sources) in [vec![BotSource::Handcrafted], vec![BotSource::Handcrafted, BotSource::Gan]].into_iter().enumerate() {
        let cfg = EvalConfig {
            m: 1400,
            seed: cfg_i as u64,
            ..EvalConfig::multiclass(sources)
        };
        for rep in 0..100 {
            let s = make_splits(sizes, &cfg, rep).unwrap();
            // 70/30 with the train half fixed at M.
            assert_eq!(s.train.len(), 1400);
            assert_eq!(s.test.len(), 600);
            assert!((s.train.len() as f64 / (s.train.len() + s.test.len()) as f64 - 0.7).abs() < 1e-12);
            assert_eq!((s.dev.len(), s.val.len()), (1260, 140));
            for part in [&s.train, &s.test, &s.dev, &s.val] {
                assert_eq!(2 * humans(part), part.len(), "unbalanced at rep {rep}");
            }
            let train: HashSet<_> = s.train.iter().collect();
            let test: HashSet<_> = s.test.iter().collect();
            let dev: HashSet<_> = s.dev.iter().collect();
            let val: HashSet<_> = s.val.iter().collect();
            assert_eq!(train.len(), s.train.len());
            assert!(train.is_disjoint(&test));
            assert!(dev.is_disjoint(&val));
            assert_eq!(dev.union(&val).count(), train.len());
            assert_eq!(make_splits(sizes, &cfg, rep).unwrap(), s);
        }
    }
}

fn random_vectors(n: usize, label: Label, shift: f64, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = (0..6).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
            FeatureVector::new(FeatureMode::TouchOnly, v, label).unwrap()
        })
        .collect()
}

#[test]
fn standardizer_ignores_test_split() {
    let pools = FeaturePools {
        human: random_vectors(200, Label::Human, 0.0, 1),
        handcrafted: random_vectors(200, Label::HandcraftedBot, 0.5, 2),
        gan: Vec::new(),
    };
    let cfg = EvalConfig {
        m: 200,
        ..EvalConfig::default()
    };
    let splits = make_splits(pools.sizes(), &cfg, 0).unwrap();
    let train: Vec<FeatureVector> = splits.train.iter().map(|&r| pools.get(r).clone()).collect();
    let model = train_classifier(&ClassifierSpec::default(), &train).unwrap();
    assert_eq!(model.standardizer, Standardizer::fit(&train).unwrap());

    // Perturbing every test vector leaves the fitted statistics untouched.
    let mut perturbed = pools.clone();
    for r in &splits.test {
        let v = match r.source {
            Source::Human => &mut perturbed.human[r.index],
            _ => &mut perturbed.handcrafted[r.index],
        };
        v.values.iter_mut().for_each(|x| *x += 1e3);
    }
    let train2: Vec<FeatureVector> = splits.train.iter().map(|&r| perturbed.get(r).clone()).collect();
    let model2 = becaptcha::classify::train_classifier_with(&ClassifierSpec::default(), &train2, Exec::Sequential).unwrap();
    assert_eq!(model.standardizer, model2.standardizer);
}
