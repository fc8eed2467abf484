//! Human-vs-bot classifiers over standardized feature vectors.
//!
//! Bot is the positive class throughout: every model emits a bot score in
//! `[0, 1]` and the hard decision is `score >= 0.5`.

pub mod forest;
pub mod knn;
pub mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{FeatureVector, Standardizer};

pub use forest::{DecisionTree, RandomForest, TreeNode};
pub use knn::KnnModel;
pub use svm::KernelExpansion;

pub const CLASSIFIER_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn,
    #[default]
    RandomForest,
    SvmRbf,
    OneClassSvm,
    /// Scored through the GAN discriminator; trained by the GAN module.
    GanDiscriminator,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::SvmRbf => "svm_rbf",
            ClassifierKind::OneClassSvm => "one_class_svm",
            ClassifierKind::GanDiscriminator => "gan_discriminator",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub k: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub svm_c: f64,
    /// `None` resolves to `1 / dim` at training time.
    pub rbf_gamma: Option<f64>,
    pub ocsvm_nu: f64,
    pub smo_tolerance: f64,
    pub smo_max_iterations: usize,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::default(),
            k: 10,
            n_trees: 100,
            max_depth: None,
            svm_c: 1.0,
            rbf_gamma: None,
            ocsvm_nu: 0.1,
            smo_tolerance: 1e-3,
            smo_max_iterations: 100_000,
            seed: 0,
        }
    }
}

impl ClassifierSpec {
    pub fn of(kind: ClassifierKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if !(self.svm_c > 0.0) {
            return bad("svm_c must be positive");
        }
        if self.rbf_gamma.is_some_and(|g| !(g > 0.0)) {
            return bad("rbf_gamma must be positive");
        }
        if !(self.ocsvm_nu > 0.0 && self.ocsvm_nu <= 1.0) {
            return bad("ocsvm_nu must lie in (0, 1]");
        }
        if !(self.smo_tolerance > 0.0) {
            return bad("smo_tolerance must be positive");
        }
        Ok(())
    }

    pub fn gamma_for(&self, dim: usize) -> f64 {
        self.rbf_gamma.unwrap_or(1.0 / dim.max(1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Payload {
    Knn(KnnModel),
    RandomForest(RandomForest),
    SvmRbf(KernelExpansion),
    OneClassSvm(KernelExpansion),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub spec: ClassifierSpec,
    pub standardizer: Standardizer,
    pub payload: Payload,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ClassifierModel {
    /// Unsquashed score, higher = more bot-like. For the SVMs this is the
    /// signed decision value (one-class: `rho - sum alpha K`); for the
    /// voting models it equals the bot score.
    pub fn raw_score(&self, v: &FeatureVector) -> Result<f64> {
        let x = self.standardizer.transform(v)?;
        self.raw_score_standardized(&x)
    }

    pub fn raw_score_standardized(&self, x: &[f64]) -> Result<f64> {
        Ok(match &self.payload {
            Payload::Knn(m) => m.score(x)?,
            Payload::RandomForest(m) => m.score(x),
            Payload::SvmRbf(m) => m.decision(x),
            Payload::OneClassSvm(m) => -m.decision(x),
        })
    }

    /// Bot score in `[0, 1]`.
    pub fn bot_score(&self, v: &FeatureVector) -> Result<f64> {
        let raw = self.raw_score(v)?;
        Ok(match self.payload {
            Payload::SvmRbf(_) | Payload::OneClassSvm(_) => logistic(raw),
            _ => raw,
        })
    }

    pub fn is_bot(&self, v: &FeatureVector) -> Result<bool> {
        Ok(self.bot_score(v)? >= 0.5)
    }

    /// Maximal KKT violation for SVM payloads.
    pub fn kkt_gap(&self) -> Option<f64> {
        match &self.payload {
            Payload::SvmRbf(m) | Payload::OneClassSvm(m) => Some(m.kkt_gap),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CLASSIFIER_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: CLASSIFIER_FORMAT_VERSION,
            });
        }
        let matches = matches!(
            (self.spec.kind, &self.payload),
            (ClassifierKind::Knn, Payload::Knn(_))
                | (ClassifierKind::RandomForest, Payload::RandomForest(_))
                | (ClassifierKind::SvmRbf, Payload::SvmRbf(_))
                | (ClassifierKind::OneClassSvm, Payload::OneClassSvm(_))
        );
        if !matches {
            return Err(Error::InvalidConfig(format!("payload does not match kind {}", self.spec.kind)));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = finite(&self.standardizer.mean)
            && finite(&self.standardizer.std)
            && match &self.payload {
                Payload::Knn(m) => m.points.iter().all(|p| finite(p)),
                Payload::RandomForest(f) => f.trees.iter().flat_map(|t| &t.nodes).all(|n| match n {
                    TreeNode::Split { threshold, .. } => threshold.is_finite(),
                    TreeNode::Leaf { .. } => true,
                }),
                Payload::SvmRbf(m) | Payload::OneClassSvm(m) => {
                    finite(&m.coefficients) && m.rho.is_finite() && m.support_vectors.iter().all(|p| finite(p))
                }
            };
        if !ok {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

fn standardized(train: &[FeatureVector]) -> Result<(Standardizer, Vec<Vec<f64>>)> {
    let s = Standardizer::fit(train)?;
    let xs = train.iter().map(|v| s.transform(v)).collect::<Result<_>>()?;
    Ok((s, xs))
}

pub fn train_classifier(spec: &ClassifierSpec, train: &[FeatureVector]) -> Result<ClassifierModel> {
    train_classifier_with(spec, train, Exec::default())
}

/// Fits a binary classifier; the standardizer is fitted on `train` only.
pub fn train_classifier_with(spec: &ClassifierSpec, train: &[FeatureVector], exec: Exec) -> Result<ClassifierModel> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let labels: Vec<bool> = train.iter().map(|v| v.label.is_bot()).collect();
    if labels.iter().all(|&b| b) || labels.iter().all(|&b| !b) {
        return Err(Error::SingleClassTrainingSet);
    }
    let (standardizer, xs) = standardized(train)?;
    let dim = standardizer.mode.dim();
    let mut spec = spec.clone();
    let payload = match spec.kind {
        ClassifierKind::Knn => Payload::Knn(KnnModel::fit(spec.k, xs, labels)),
        ClassifierKind::RandomForest => {
            Payload::RandomForest(RandomForest::fit(&xs, &labels, spec.n_trees, spec.max_depth, spec.seed, exec))
        }
        ClassifierKind::SvmRbf => {
            let gamma = spec.gamma_for(dim);
            spec.rbf_gamma = Some(gamma);
            Payload::SvmRbf(svm::fit_svc(&xs, &labels, spec.svm_c, gamma, &smo_settings(&spec, exec))?)
        }
        ClassifierKind::OneClassSvm => return train_one_class_with(&spec, train, exec),
        ClassifierKind::GanDiscriminator => {
            return Err(Error::InvalidConfig(
                "the GAN discriminator is trained through the GAN module".into(),
            ))
        }
    };
    Ok(ClassifierModel {
        format_version: CLASSIFIER_FORMAT_VERSION,
        spec,
        standardizer,
        payload,
    })
}

fn smo_settings(spec: &ClassifierSpec, exec: Exec) -> svm::SmoSettings {
    svm::SmoSettings {
        tolerance: spec.smo_tolerance,
        max_iterations: spec.smo_max_iterations,
        exec,
    }
}

pub fn train_one_class(human_train: &[FeatureVector], spec: &ClassifierSpec) -> Result<ClassifierModel> {
    train_one_class_with(spec, human_train, Exec::default())
}

/// ν one-class SVM fitted on human vectors only. Labels are ignored.
pub fn train_one_class_with(spec: &ClassifierSpec, human_train: &[FeatureVector], exec: Exec) -> Result<ClassifierModel> {
    spec.validate()?;
    if human_train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let (standardizer, xs) = standardized(human_train)?;
    let gamma = spec.gamma_for(standardizer.mode.dim());
    let mut spec = spec.clone();
    spec.kind = ClassifierKind::OneClassSvm;
    spec.rbf_gamma = Some(gamma);
    let payload = Payload::OneClassSvm(svm::fit_one_class(&xs, spec.ocsvm_nu, gamma, &smo_settings(&spec, exec))?);
    Ok(ClassifierModel {
        format_version: CLASSIFIER_FORMAT_VERSION,
        spec,
        standardizer,
        payload,
    })
}

/// Convenience wrapper matching the free-function interface.
pub fn predict_bot_score(model: &ClassifierModel, v: &FeatureVector) -> Result<f64> {
    model.bot_score(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{derive_seed, rng_from_seed};
    use crate::features::FeatureMode;
    use crate::trace::Label;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn vec6(values: [f64; 6], label: Label) -> FeatureVector {
        FeatureVector::new(FeatureMode::TouchOnly, values.to_vec(), label).unwrap()
    }

    fn xor_set(n: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                let bot = (x > 0.0) != (y > 0.0);
                let label = if bot { Label::HandcraftedBot } else { Label::Human };
                vec6([x, y, 0.0, 0.0, 0.0, 0.0], label)
            })
            .collect()
    }

    fn accuracy(model: &ClassifierModel, set: &[FeatureVector]) -> f64 {
        let hits = set.iter().filter(|v| model.is_bot(v).unwrap() == v.label.is_bot()).count();
        hits as f64 / set.len() as f64
    }

    #[test]
    fn forest_learns_xor() {
        let set = xor_set(200, 5);
        let spec = ClassifierSpec {
            seed: 17,
            ..ClassifierSpec::of(ClassifierKind::RandomForest)
        };
        let m = train_classifier(&spec, &set).unwrap();
        assert_eq!(accuracy(&m, &set), 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let set: Vec<_> = (0..10).map(|i| vec6([i as f64, 0.0, 0.0, 0.0, 0.0, 1.0], Label::Human)).collect();
        for kind in [ClassifierKind::RandomForest, ClassifierKind::Knn, ClassifierKind::SvmRbf] {
            assert!(matches!(
                train_classifier(&ClassifierSpec::of(kind), &set),
                Err(Error::SingleClassTrainingSet)
            ));
        }
        assert!(matches!(
            train_classifier(&ClassifierSpec::default(), &[]),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn all_human_leaves_score_zero() {
        let set = xor_set(20, 1);
        let mut m = train_classifier(&ClassifierSpec::default(), &set).unwrap();
        m.payload = Payload::RandomForest(RandomForest {
            trees: vec![DecisionTree { nodes: vec![TreeNode::Leaf { bot: false }] }; 7],
        });
        assert_eq!(m.bot_score(&set[0]).unwrap(), 0.0);
    }

    #[test]
    fn mode_mismatch_on_predict() {
        let m = train_classifier(&ClassifierSpec::of(ClassifierKind::Knn), &xor_set(30, 2)).unwrap();
        let v = FeatureVector::new(FeatureMode::TouchAccel, vec![0.0; 18], Label::Human).unwrap();
        assert!(matches!(m.bot_score(&v), Err(Error::ModeMismatch { .. })));
    }

    #[test]
    fn svm_separates_xor_reasonably() {
        let set = xor_set(200, 9);
        let spec = ClassifierSpec {
            svm_c: 10.0,
            rbf_gamma: Some(2.0),
            ..ClassifierSpec::of(ClassifierKind::SvmRbf)
        };
        let m = train_classifier(&spec, &set).unwrap();
        assert!(accuracy(&m, &set) > 0.9);
        assert!(m.kkt_gap().unwrap() <= 1e-3);
    }

    fn gaussian_cloud(n: usize, radius: f64, seed: u64) -> Vec<FeatureVector> {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, radius).unwrap();
        (0..n)
            .map(|_| {
                let mut v = [0.0; 6];
                v.iter_mut().for_each(|x| *x = 3.0 + normal.sample(&mut rng));
                vec6(v, Label::Human)
            })
            .collect()
    }

    #[test]
    fn one_class_nu_property() {
        let set = gaussian_cloud(500, 1.0, derive_seed(4, 4));
        let spec = ClassifierSpec {
            ocsvm_nu: 0.1,
            ..ClassifierSpec::of(ClassifierKind::OneClassSvm)
        };
        let m = train_one_class(&set, &spec).unwrap();
        let outliers = set.iter().filter(|v| m.raw_score(v).unwrap() > 0.0).count();
        assert!((outliers as f64 / 500.0) <= 0.1 + 0.05, "{outliers}");
    }

    #[test]
    fn one_class_geometry() {
        let radius = 0.01;
        let set = gaussian_cloud(200, radius, 8);
        let m = train_one_class(&set, &ClassifierSpec::of(ClassifierKind::OneClassSvm)).unwrap();
        let centroid = vec6([3.0; 6], Label::Human);
        assert!(m.raw_score(&centroid).unwrap() < 0.0);
        let far = vec6([3.0 + 100.0 * radius; 6], Label::Human);
        assert!(m.raw_score(&far).unwrap() > 0.0);
        assert!(m.is_bot(&far).unwrap());
    }

    #[test]
    fn json_round_trip_scores_identically() {
        let set = xor_set(60, 3);
        for kind in [ClassifierKind::Knn, ClassifierKind::RandomForest, ClassifierKind::SvmRbf] {
            let m = train_classifier(&ClassifierSpec::of(kind), &set).unwrap();
            let back = ClassifierModel::from_json(&m.to_json().unwrap()).unwrap();
            for v in &set {
                assert_eq!(m.bot_score(v).unwrap().to_bits(), back.bot_score(v).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn forest_is_deterministic_across_exec_modes() {
        let set = xor_set(80, 4);
        let spec = ClassifierSpec {
            n_trees: 20,
            ..ClassifierSpec::default()
        };
        let a = train_classifier_with(&spec, &set, Exec::Sequential).unwrap();
        let b = train_classifier_with(&spec, &set, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
