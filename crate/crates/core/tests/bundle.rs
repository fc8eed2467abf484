//! Bundle persistence and request verification.

use becaptcha::bundle::{load_bundle, save_bundle, verify, Decision, ModelBundle, VerifyRequest};
use becaptcha::classify::{train_classifier, ClassifierKind, ClassifierModel, ClassifierSpec};
use becaptcha::error::Error;
use becaptcha::features::{FeatureMode, FeatureVector};
use becaptcha::trace::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(mode: FeatureMode, kind: ClassifierKind, seed: u64) -> ClassifierModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train: Vec<FeatureVector> = (0..80)
        .map(|i| {
            let bot = i % 2 == 0;
            let v = (0..mode.dim()).map(|_| rng.random_range(0.0..1.0) + if bot { 0.7 } else { 0.0 }).collect();
            FeatureVector::new(mode, v, if bot { Label::HandcraftedBot } else { Label::Human }).unwrap()
        })
        .collect();
    train_classifier(&ClassifierSpec { n_trees: 15, ..ClassifierSpec::of(kind) }, &train).unwrap()
}

#[test]
fn round_trip_scores_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [ClassifierKind::Knn, ClassifierKind::RandomForest, ClassifierKind::SvmRbf] {
        let b = ModelBundle::feature_concat(model(FeatureMode::TouchAccel, kind, 1), "test-1");
        save_bundle(&b, &path).unwrap();
        let back = load_bundle(&path).unwrap();
        let (m1, m2) = (b.fused.as_ref().unwrap(), back.fused.as_ref().unwrap());
        for _ in 0..100 {
            let v: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..2.0)).collect();
            let v = FeatureVector::new(FeatureMode::TouchAccel, v, Label::Human).unwrap();
            assert_eq!(m1.bot_score(&v).unwrap().to_bits(), m2.bot_score(&v).unwrap().to_bits());
        }
    }
}

#[test]
fn truncation_and_future_versions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let b = ModelBundle::feature_concat(model(FeatureMode::TouchOnly, ClassifierKind::Knn, 2), "v");
    save_bundle(&b, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(load_bundle(&path), Err(Error::CorruptBundle(_))), "cut {cut}");
    }
    let text = String::from_utf8(bytes).unwrap().replacen("\"format_version\":1", "\"format_version\":99", 1);
    std::fs::write(&path, text).unwrap();
    assert!(matches!(load_bundle(&path), Err(Error::VersionMismatch { found: 99, expected: 1 })));
}

fn request(with_accel: bool) -> VerifyRequest {
    VerifyRequest {
        touch: vec![[100.0, 900.0, 0.0], [180.0, 880.0, 40.0], [300.0, 820.0, 90.0], [420.0, 700.0, 160.0]],
        screen: [1080, 1920],
        accel: with_accel.then(|| (0..40).map(|i| [0.1, 4.0, 8.9, i as f64 * 5.0]).collect()),
    }
}

#[test]
fn score_mean_requires_accelerometer() {
    let b = ModelBundle::score_mean(
        model(FeatureMode::TouchOnly, ClassifierKind::RandomForest, 4),
        model(FeatureMode::TouchAccel, ClassifierKind::RandomForest, 5),
        "sm",
    );
    assert!(matches!(verify(&b, &request(false)), Err(Error::MalformedRequest(_))));
    let r = verify(&b, &request(true)).unwrap();
    assert!((0.0..=1.0).contains(&r.bot_score));
    assert_eq!(r.decision == Decision::Bot, r.bot_score >= r.tau);
    assert_eq!(r.model_version, "sm");
}

#[test]
fn tau_extremes() {
    let mut b = ModelBundle::feature_concat(model(FeatureMode::TouchOnly, ClassifierKind::Knn, 6), "x");
    b.tau = 0.0;
    assert_eq!(verify(&b, &request(false)).unwrap().decision, Decision::Bot);
    b.tau = 1.0;
    let r = verify(&b, &request(false)).unwrap();
    assert_eq!(r.decision == Decision::Bot, r.bot_score == 1.0);
}

#[test]
fn single_point_touch_is_malformed() {
    let b = ModelBundle::feature_concat(model(FeatureMode::TouchOnly, ClassifierKind::Knn, 7), "x");
    let mut req = request(false);
    req.touch.truncate(1);
    assert!(matches!(verify(&b, &req), Err(Error::MalformedRequest(_))));
}
