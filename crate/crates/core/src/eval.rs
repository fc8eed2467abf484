//! Experimental protocol: balanced splits, scenarios, metrics, the training
//! size ablation and per-source feature histograms.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::{
    train_classifier_with, train_one_class_with, ClassifierKind, ClassifierModel, ClassifierSpec,
};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng_from_seed, Exec};
use crate::features::{sample_features, touch_features, FeatureMode, FeatureVector, TOUCH_COLUMNS};
use crate::gan::{discriminator_score, train_gan_with, GanConfig, GanModel, Modality};
use crate::trace::{Corpus, Label, Resample, Sequence, SwipeSample};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Multiclass,
    Agnostic,
    OneClass,
    GanDiscriminatorEval,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Multiclass => "multiclass",
            Scenario::Agnostic => "agnostic",
            Scenario::OneClass => "one_class",
            Scenario::GanDiscriminatorEval => "gan_discriminator",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotSource {
    Handcrafted,
    Gan,
}

/// Where a split entry comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Bot(BotSource),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemRef {
    pub source: Source,
    pub index: usize,
}

/// Hyperparameter candidates swept on the development/validation split.
/// `gamma_scale` multiplies `1 / dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningGrid {
    pub k: Vec<usize>,
    pub svm_c: Vec<f64>,
    pub gamma_scale: Vec<f64>,
    pub n_trees: Vec<usize>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            k: vec![5, 10, 20],
            svm_c: vec![0.1, 1.0, 10.0],
            gamma_scale: vec![0.1, 1.0, 10.0],
            n_trees: vec![50, 100, 200],
        }
    }
}

impl TuningGrid {
    pub fn candidates(&self, base: &ClassifierSpec, dim: usize) -> Vec<ClassifierSpec> {
        match base.kind {
            ClassifierKind::Knn => self.k.iter().map(|&k| ClassifierSpec { k, ..base.clone() }).collect(),
            ClassifierKind::RandomForest => self
                .n_trees
                .iter()
                .map(|&n_trees| ClassifierSpec { n_trees, ..base.clone() })
                .collect(),
            ClassifierKind::SvmRbf => self
                .svm_c
                .iter()
                .flat_map(|&c| {
                    self.gamma_scale.iter().map(move |&g| ClassifierSpec {
                        svm_c: c,
                        rbf_gamma: Some(g / dim as f64),
                        ..base.clone()
                    })
                })
                .collect(),
            ClassifierKind::OneClassSvm | ClassifierKind::GanDiscriminator => vec![base.clone()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub scenario: Scenario,
    pub modality: FeatureMode,
    pub bot_sources_train: Vec<BotSource>,
    pub bot_sources_test: Vec<BotSource>,
    /// Total training samples, split evenly between humans and bots.
    pub m: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Sweep `grid` on dev/val before the final fit.
    pub tune: bool,
    pub grid: TuningGrid,
    /// Used by the discriminator scenario.
    pub gan: GanConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Multiclass,
            modality: FeatureMode::TouchOnly,
            bot_sources_train: vec![BotSource::Handcrafted],
            bot_sources_test: vec![BotSource::Handcrafted],
            m: 1000,
            train_fraction: 0.7,
            dev_fraction: 0.9,
            repetitions: 5,
            seed: 0,
            threshold: 0.5,
            tune: true,
            grid: TuningGrid::default(),
            gan: GanConfig::default(),
        }
    }
}

fn normalized(sources: &[BotSource]) -> Vec<BotSource> {
    sources.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

impl EvalConfig {
    pub fn multiclass(sources: Vec<BotSource>) -> Self {
        Self {
            bot_sources_train: sources.clone(),
            bot_sources_test: sources,
            ..Self::default()
        }
    }

    pub fn agnostic(train: Vec<BotSource>, test: Vec<BotSource>) -> Self {
        Self {
            scenario: Scenario::Agnostic,
            bot_sources_train: train,
            bot_sources_test: test,
            ..Self::default()
        }
    }

    pub fn one_class(test: Vec<BotSource>) -> Self {
        Self {
            scenario: Scenario::OneClass,
            bot_sources_train: Vec::new(),
            bot_sources_test: test,
            ..Self::default()
        }
    }

    pub fn discriminator(test: Vec<BotSource>) -> Self {
        Self {
            scenario: Scenario::GanDiscriminatorEval,
            bot_sources_train: Vec::new(),
            bot_sources_test: test,
            ..Self::default()
        }
    }

    pub fn per_class(&self) -> usize {
        self.m / 2
    }

    pub fn dev_per_class(&self) -> usize {
        (self.dev_fraction * self.per_class() as f64).round() as usize
    }

    pub fn test_per_class(&self) -> usize {
        (self.per_class() as f64 * (1.0 - self.train_fraction) / self.train_fraction).round() as usize
    }

    fn trains_on_bots(&self) -> bool {
        matches!(self.scenario, Scenario::Multiclass | Scenario::Agnostic)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.m < 2 || !self.m.is_multiple_of(2) {
            return bad(format!("M must be even and at least 2, got {}", self.m));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)".into());
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return bad("dev_fraction must lie in (0, 1)".into());
        }
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]".into());
        }
        if self.test_per_class() < 1 {
            return bad(format!("M = {} leaves an empty test split", self.m));
        }
        if self.bot_sources_test.is_empty() {
            return Err(Error::ConfigContradiction("no bot sources for testing".into()));
        }
        let train = normalized(&self.bot_sources_train);
        let test = normalized(&self.bot_sources_test);
        match self.scenario {
            Scenario::Multiclass if train != test => Err(Error::ConfigContradiction(
                "multiclass trains and tests on the same bot sources".into(),
            )),
            Scenario::Multiclass | Scenario::Agnostic if train.is_empty() => {
                Err(Error::ConfigContradiction("no bot sources for training".into()))
            }
            Scenario::Agnostic if train == test => Err(Error::ConfigContradiction(
                "agnostic evaluation needs different train and test bot sources".into(),
            )),
            Scenario::OneClass | Scenario::GanDiscriminatorEval if !train.is_empty() => Err(
                Error::ConfigContradiction(format!("{} trains without bot samples", self.scenario.as_str())),
            ),
            _ => Ok(()),
        }
    }
}

/// Number of usable items per source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoolSizes {
    pub human: usize,
    pub handcrafted: usize,
    pub gan: usize,
}

impl PoolSizes {
    fn bot(&self, s: BotSource) -> usize {
        match s {
            BotSource::Handcrafted => self.handcrafted,
            BotSource::Gan => self.gan,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<ItemRef>,
    pub dev: Vec<ItemRef>,
    pub val: Vec<ItemRef>,
    pub test: Vec<ItemRef>,
}

/// `n` split as evenly as possible over `k` parts, remainder to the first.
fn even_shares(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Balanced, disjoint train/dev/val/test index sets for one repetition.
pub fn make_splits(sizes: PoolSizes, config: &EvalConfig, repetition: usize) -> Result<Splits> {
    config.validate()?;
    let per_class = config.per_class();
    let test_per_class = config.test_per_class();
    let mut rng = rng_from_seed(derive_seed(derive_seed(config.seed, repetition as u64), 0));

    let human_train = per_class;
    if sizes.human < human_train + test_per_class {
        return Err(Error::InsufficientSamples(format!(
            "need {} human samples, have {}",
            human_train + test_per_class,
            sizes.human
        )));
    }
    let mut humans: Vec<usize> = (0..sizes.human).collect();
    humans.shuffle(&mut rng);
    let human_ref = |index| ItemRef {
        source: Source::Human,
        index,
    };

    let train_sources = if config.trains_on_bots() {
        normalized(&config.bot_sources_train)
    } else {
        Vec::new()
    };
    let test_sources = normalized(&config.bot_sources_test);
    let mut need: Vec<(BotSource, usize, usize)> = Vec::new();
    for (s, n) in train_sources.iter().zip(even_shares(per_class, train_sources.len())) {
        need.push((*s, n, 0));
    }
    for (s, n) in test_sources.iter().zip(even_shares(test_per_class, test_sources.len())) {
        match need.iter_mut().find(|(x, _, _)| x == s) {
            Some(e) => e.2 = n,
            None => need.push((*s, 0, n)),
        }
    }
    let mut bot_train = Vec::new();
    let mut bot_test = Vec::new();
    for (s, n_train, n_test) in need {
        let have = sizes.bot(s);
        if have < n_train + n_test {
            return Err(Error::InsufficientSamples(format!(
                "need {} {s:?} samples, have {have}",
                n_train + n_test
            )));
        }
        let mut idx: Vec<usize> = (0..have).collect();
        idx.shuffle(&mut rng);
        let r = |index| ItemRef {
            source: Source::Bot(s),
            index,
        };
        bot_train.extend(idx[..n_train].iter().map(|&i| r(i)));
        bot_test.extend(idx[n_train..n_train + n_test].iter().map(|&i| r(i)));
    }

    let mut h_train: Vec<ItemRef> = humans[..human_train].iter().map(|&i| human_ref(i)).collect();
    let h_test = humans[human_train..human_train + test_per_class].iter().map(|&i| human_ref(i));

    // Dev/val are balanced per class; both halves are already shuffled.
    let dev_n = config.dev_per_class().min(per_class);
    let (mut dev, mut val) = (Vec::new(), Vec::new());
    if !bot_train.is_empty() {
        bot_train.shuffle(&mut rng);
        dev.extend_from_slice(&h_train[..dev_n]);
        dev.extend_from_slice(&bot_train[..dev_n]);
        val.extend_from_slice(&h_train[dev_n..]);
        val.extend_from_slice(&bot_train[dev_n..]);
    }
    h_train.extend(bot_train);
    let mut test: Vec<ItemRef> = h_test.collect();
    test.extend(bot_test);
    Ok(Splits {
        train: h_train,
        dev,
        val,
        test,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// Percentages, Bot positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the evaluation set holds a single class.
    pub auc: Option<f64>,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Mann-Whitney AUC in percent; tied pairs count one half.
pub fn auc(scores: &[f64], is_bot: &[bool]) -> Result<f64> {
    if scores.len() != is_bot.len() {
        return Err(Error::ShapeMismatch(format!("{} scores for {} labels", scores.len(), is_bot.len())));
    }
    let pos = is_bot.iter().filter(|&&b| b).count();
    let neg = is_bot.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassEvalSet);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| is_bot[k]).count() as f64 * mid;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(100.0 * (rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn compute_metrics(scores: &[f64], is_bot: &[bool], threshold: f64) -> Result<Metrics> {
    if scores.is_empty() || scores.len() != is_bot.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            is_bot.len()
        )));
    }
    let mut c = Confusion::default();
    for (&s, &b) in scores.iter().zip(is_bot) {
        match (s >= threshold, b) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        auc: match auc(scores, is_bot) {
            Ok(a) => Some(a),
            Err(Error::SingleClassEvalSet) => None,
            Err(e) => return Err(e),
        },
        acc: 100.0 * ratio(c.tp + c.tn, scores.len()),
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        f1: 100.0 * f1,
        confusion: c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub index: usize,
    pub metrics: Metrics,
    /// Hyperparameters used for the final fit.
    pub spec: ClassifierSpec,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub auc: Option<f64>,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub classifier: ClassifierKind,
    pub repetitions: Vec<RepetitionResult>,
    pub mean: Summary,
    /// Population standard deviation across repetitions.
    pub std: Summary,
    /// Confusion matrix summed over repetitions.
    pub confusion: Confusion,
    /// Samples skipped because features or sequences could not be built.
    pub dropped: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

impl EvalReport {
    fn assemble(config: EvalConfig, classifier: ClassifierKind, repetitions: Vec<RepetitionResult>, dropped: usize) -> Self {
        let col = |f: fn(&Metrics) -> f64| mean_std(&repetitions.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        let aucs: Option<Vec<f64>> = repetitions.iter().map(|r| r.metrics.auc).collect();
        let auc = aucs.map(|a| mean_std(&a));
        let (acc, pre, re, f1) = (
            col(|m| m.acc),
            col(|m| m.precision),
            col(|m| m.recall),
            col(|m| m.f1),
        );
        let mut confusion = Confusion::default();
        repetitions.iter().for_each(|r| confusion.add(&r.metrics.confusion));
        Self {
            config,
            classifier,
            mean: Summary {
                auc: auc.map(|a| a.0),
                acc: acc.0,
                precision: pre.0,
                recall: re.0,
                f1: f1.0,
            },
            std: Summary {
                auc: auc.map(|a| a.1),
                acc: acc.1,
                precision: pre.1,
                recall: re.1,
                f1: f1.1,
            },
            repetitions,
            confusion,
            dropped,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn table_header() -> String {
        format!(
            "{:<18} {:<12} {:<18} {:<15} {:>14} {:>14} {:>14} {:>14} {:>14}",
            "scenario", "modality", "classifier", "bots (tr/te)", "AUC", "Acc", "Pre", "Re", "F1"
        )
    }

    /// One aligned table row, `mean ± std` per metric.
    pub fn table_row(&self) -> String {
        let cell = |m: f64, s: f64| format!("{m:.1} ± {s:.1}");
        let srcs = |v: &[BotSource]| {
            v.iter()
                .map(|s| match s {
                    BotSource::Handcrafted => "hc",
                    BotSource::Gan => "gan",
                })
                .collect::<Vec<_>>()
                .join("+")
        };
        let bots = format!(
            "{}/{}",
            if self.config.bot_sources_train.is_empty() {
                "-".to_string()
            } else {
                srcs(&self.config.bot_sources_train)
            },
            srcs(&self.config.bot_sources_test)
        );
        let auc = match (self.mean.auc, self.std.auc) {
            (Some(m), Some(s)) => cell(m, s),
            _ => "n/a".into(),
        };
        format!(
            "{:<18} {:<12} {:<18} {:<15} {:>14} {:>14} {:>14} {:>14} {:>14}",
            self.config.scenario.as_str(),
            self.config.modality.to_string(),
            self.classifier.as_str(),
            bots,
            auc,
            cell(self.mean.acc, self.std.acc),
            cell(self.mean.precision, self.std.precision),
            cell(self.mean.recall, self.std.recall),
            cell(self.mean.f1, self.std.f1),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::table_header());
        let _ = writeln!(s, "{}", self.table_row());
        let c = &self.confusion;
        let _ = writeln!(
            s,
            "confusion over {} repetitions (bot positive): TP {} FP {} TN {} FN {}",
            self.repetitions.len(),
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        );
        if self.dropped > 0 {
            let _ = writeln!(s, "{} samples skipped (features unavailable)", self.dropped);
        }
        s
    }
}

/// Feature pools by role. Labels are taken from the role, not the vector.
#[derive(Clone, Debug, Default)]
pub struct FeaturePools {
    pub human: Vec<FeatureVector>,
    pub handcrafted: Vec<FeatureVector>,
    pub gan: Vec<FeatureVector>,
}

impl FeaturePools {
    /// Extracts features in parallel, skipping samples that cannot be
    /// featurized. Returns the pools and the number skipped.
    pub fn extract(human: &Corpus, handcrafted: &Corpus, gan: &Corpus, mode: FeatureMode, exec: Exec) -> (Self, usize) {
        let mut dropped = 0;
        let mut pool = |c: &Corpus, label: Label| {
            let out: Vec<FeatureVector> = exec
                .map(&c.samples, |s| sample_features(s, mode).ok())
                .into_iter()
                .flatten()
                .map(|mut v| {
                    v.label = label;
                    v
                })
                .collect();
            dropped += c.len() - out.len();
            out
        };
        let pools = Self {
            human: pool(human, Label::Human),
            handcrafted: pool(handcrafted, Label::HandcraftedBot),
            gan: pool(gan, Label::GanBot),
        };
        (pools, dropped)
    }

    pub fn sizes(&self) -> PoolSizes {
        PoolSizes {
            human: self.human.len(),
            handcrafted: self.handcrafted.len(),
            gan: self.gan.len(),
        }
    }

    pub fn get(&self, r: ItemRef) -> &FeatureVector {
        match r.source {
            Source::Human => &self.human[r.index],
            Source::Bot(BotSource::Handcrafted) => &self.handcrafted[r.index],
            Source::Bot(BotSource::Gan) => &self.gan[r.index],
        }
    }

    fn collect(&self, refs: &[ItemRef]) -> Vec<FeatureVector> {
        refs.iter().map(|&r| self.get(r).clone()).collect()
    }
}

fn score_all(model: &ClassifierModel, set: &[FeatureVector]) -> Result<(Vec<f64>, Vec<bool>)> {
    let scores = set.iter().map(|v| model.bot_score(v)).collect::<Result<Vec<_>>>()?;
    Ok((scores, set.iter().map(|v| v.label.is_bot()).collect()))
}

/// Picks the grid candidate with the best validation accuracy (first wins
/// ties). Candidates that fail to train are skipped.
pub fn tune_on_validation(
    base: &ClassifierSpec,
    grid: &TuningGrid,
    dev: &[FeatureVector],
    val: &[FeatureVector],
    threshold: f64,
    exec: Exec,
) -> Result<ClassifierSpec> {
    let dim = dev.first().map_or(1, |v| v.mode.dim());
    let mut best: Option<(f64, ClassifierSpec)> = None;
    for cand in grid.candidates(base, dim) {
        if cand.kind == ClassifierKind::Knn && cand.k > dev.len() {
            continue;
        }
        let Ok(model) = train_classifier_with(&cand, dev, exec) else {
            continue;
        };
        let (scores, labels) = score_all(&model, val)?;
        let acc = compute_metrics(&scores, &labels, threshold)?.acc;
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, cand));
        }
    }
    Ok(best.map_or_else(|| base.clone(), |(_, s)| s))
}

/// Runs a feature-based scenario on precomputed pools.
pub fn run_scenario_on_features(
    pools: &FeaturePools,
    spec: &ClassifierSpec,
    config: &EvalConfig,
    exec: Exec,
) -> Result<EvalReport> {
    config.validate()?;
    if config.scenario == Scenario::GanDiscriminatorEval {
        return Err(Error::ConfigContradiction(
            "the discriminator scenario scores raw sequences, not features".into(),
        ));
    }
    if let Some(v) = pools.human.iter().chain(&pools.handcrafted).chain(&pools.gan).find(|v| v.mode != config.modality) {
        return Err(Error::ModeMismatch {
            expected: config.modality.to_string(),
            actual: v.mode.to_string(),
        });
    }
    let one_class = config.scenario == Scenario::OneClass;
    let kind = if one_class {
        ClassifierKind::OneClassSvm
    } else {
        spec.kind
    };
    let reps = exec.map_range(config.repetitions, |rep| -> Result<RepetitionResult> {
        let splits = make_splits(pools.sizes(), config, rep)?;
        let mut spec = spec.clone();
        spec.seed = derive_seed(derive_seed(config.seed, rep as u64), 1);
        let train = pools.collect(&splits.train);
        let model = if one_class {
            spec.kind = ClassifierKind::OneClassSvm;
            train_one_class_with(&spec, &train, exec)?
        } else {
            if config.tune && !splits.val.is_empty() {
                let dev = pools.collect(&splits.dev);
                let val = pools.collect(&splits.val);
                spec = tune_on_validation(&spec, &config.grid, &dev, &val, config.threshold, exec)?;
            }
            train_classifier_with(&spec, &train, exec)?
        };
        let test = pools.collect(&splits.test);
        let (scores, labels) = score_all(&model, &test)?;
        Ok(RepetitionResult {
            index: rep,
            metrics: compute_metrics(&scores, &labels, config.threshold)?,
            spec: model.spec.clone(),
            train_size: train.len(),
            test_size: test.len(),
        })
    });
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::assemble(config.clone(), kind, reps, 0))
}

/// Resampled sequences for the discriminator scenario.
struct SeqItem {
    touch: Sequence,
    accel: Option<Sequence>,
}

fn seq_item(s: &SwipeSample, config: &EvalConfig) -> Option<SeqItem> {
    let touch = s.touch.resample_to_length(config.gan.seq_len).ok()?;
    let accel = match config.modality {
        FeatureMode::TouchAccel => Some(s.accel.resample_to_length(config.gan.seq_len).ok()?),
        FeatureMode::TouchOnly => None,
    };
    Some(SeqItem { touch, accel })
}

fn run_discriminator_scenario(
    human: &Corpus,
    handcrafted: &Corpus,
    gan: &Corpus,
    config: &EvalConfig,
    exec: Exec,
) -> Result<EvalReport> {
    let mut dropped = 0;
    let mut pool = |c: &Corpus| {
        let out: Vec<SeqItem> = exec.map(&c.samples, |s| seq_item(s, config)).into_iter().flatten().collect();
        dropped += c.len() - out.len();
        out
    };
    let pools = [pool(human), pool(handcrafted), pool(gan)];
    let get = |r: ItemRef| match r.source {
        Source::Human => &pools[0][r.index],
        Source::Bot(BotSource::Handcrafted) => &pools[1][r.index],
        Source::Bot(BotSource::Gan) => &pools[2][r.index],
    };
    let sizes = PoolSizes {
        human: pools[0].len(),
        handcrafted: pools[1].len(),
        gan: pools[2].len(),
    };
    // GAN training already parallelizes over the batch; repetitions run in order.
    let mut reps = Vec::with_capacity(config.repetitions);
    for rep in 0..config.repetitions {
        let splits = make_splits(sizes, config, rep)?;
        let mut gan_cfg = config.gan.clone();
        gan_cfg.seed = derive_seed(derive_seed(config.seed, rep as u64), 2);
        let fit = |modality: Modality| -> Result<GanModel> {
            let seqs: Vec<Sequence> = splits
                .train
                .iter()
                .map(|&r| {
                    let it = get(r);
                    match modality {
                        Modality::Touch => it.touch.clone(),
                        Modality::Accel => it.accel.clone().unwrap_or_default(),
                    }
                })
                .collect();
            train_gan_with(GanModel::new(modality, gan_cfg.clone())?, &seqs, exec)
        };
        let touch_model = fit(Modality::Touch)?;
        let accel_model = match config.modality {
            FeatureMode::TouchAccel => Some(fit(Modality::Accel)?),
            FeatureMode::TouchOnly => None,
        };
        let scores = splits
            .test
            .iter()
            .map(|&r| {
                let it = get(r);
                let t = 1.0 - discriminator_score(&touch_model, &it.touch)?;
                Ok(match (&accel_model, &it.accel) {
                    (Some(m), Some(a)) => 0.5 * (t + 1.0 - discriminator_score(m, a)?),
                    _ => t,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let labels: Vec<bool> = splits.test.iter().map(|r| r.source != Source::Human).collect();
        reps.push(RepetitionResult {
            index: rep,
            metrics: compute_metrics(&scores, &labels, config.threshold)?,
            spec: ClassifierSpec::of(ClassifierKind::GanDiscriminator),
            train_size: splits.train.len(),
            test_size: splits.test.len(),
        });
    }
    Ok(EvalReport::assemble(config.clone(), ClassifierKind::GanDiscriminator, reps, dropped))
}

/// Full scenario from corpora: featurize (or resample), split, train,
/// score and aggregate over repetitions.
pub fn run_scenario(
    human: &Corpus,
    handcrafted: &Corpus,
    gan: &Corpus,
    spec: &ClassifierSpec,
    config: &EvalConfig,
    exec: Exec,
) -> Result<EvalReport> {
    config.validate()?;
    human.ensure_non_empty()?;
    if config.scenario == Scenario::GanDiscriminatorEval {
        return run_discriminator_scenario(human, handcrafted, gan, config, exec);
    }
    let (pools, dropped) = FeaturePools::extract(human, handcrafted, gan, config.modality, exec);
    let mut report = run_scenario_on_features(&pools, spec, config, exec)?;
    report.dropped = dropped;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub m: usize,
    pub mean_acc: Option<f64>,
    pub std_acc: Option<f64>,
    /// Why the point is missing, if it is.
    pub missing: Option<String>,
}

/// Eight evenly spaced even training sizes from 70 to 1400.
pub fn default_ablation_grid() -> Vec<usize> {
    (0..8)
        .map(|i| {
            let v = 70.0 + (1400.0 - 70.0) * i as f64 / 7.0;
            2 * (v / 2.0).round() as usize
        })
        .collect()
}

/// Mean accuracy per training size, in increasing `M`. Points without
/// enough data are reported as missing.
pub fn ablation_curve(
    pools: &FeaturePools,
    spec: &ClassifierSpec,
    config: &EvalConfig,
    m_values: &[usize],
    exec: Exec,
) -> Result<Vec<AblationPoint>> {
    if let Some(m) = m_values.iter().find(|&&m| m < 2 || !m.is_multiple_of(2)) {
        return Err(Error::InvalidConfig(format!("training size M = {m} must be even and at least 2")));
    }
    let mut ms = m_values.to_vec();
    ms.sort_unstable();
    ms.into_iter()
        .map(|m| {
            let cfg = EvalConfig { m, ..config.clone() };
            match run_scenario_on_features(pools, spec, &cfg, exec) {
                Ok(r) => Ok(AblationPoint {
                    m,
                    mean_acc: Some(r.mean.acc),
                    std_acc: Some(r.std.acc),
                    missing: None,
                }),
                Err(e @ Error::InsufficientSamples(_)) => Ok(AblationPoint {
                    m,
                    mean_acc: None,
                    std_acc: None,
                    missing: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn write_ablation_csv<W: Write>(out: W, points: &[AblationPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "mean_acc", "std_acc"])?;
    for p in points {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        w.write_record([p.m.to_string(), f(p.mean_acc), f(p.std_acc)])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Normalized histogram of one touch feature for every source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub feature: String,
    /// `bins + 1` edges over the pooled range.
    pub edges: Vec<f64>,
    /// `(source name, bin masses summing to 1)`.
    pub sources: Vec<(String, Vec<f64>)>,
}

pub const DEFAULT_BINS: usize = 50;

/// Histograms of the six touch features per source over the pooled
/// min-max range. Samples without touch features are skipped.
pub fn feature_distribution_report(sources: &[(&str, &Corpus)], bins: usize) -> Result<Vec<FeatureHistogram>> {
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be positive".into()));
    }
    let mut values: Vec<Vec<[f64; 6]>> = Vec::with_capacity(sources.len());
    for (name, c) in sources {
        let v: Vec<[f64; 6]> = c
            .samples
            .iter()
            .filter_map(|s| touch_features(&s.touch).ok())
            .map(|f| f.to_array())
            .collect();
        if v.is_empty() {
            return Err(Error::EmptyCorpus((*name).to_string()));
        }
        values.push(v);
    }
    Ok((0..TOUCH_COLUMNS.len())
        .map(|f| {
            let all = values.iter().flatten().map(|v| v[f]);
            let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if hi <= lo {
                lo -= 0.5;
                hi += 0.5;
            }
            let width = (hi - lo) / bins as f64;
            let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
            let hists = sources
                .iter()
                .zip(&values)
                .map(|((name, _), vs)| {
                    let mut h = vec![0.0; bins];
                    for v in vs {
                        let b = (((v[f] - lo) / width) as usize).min(bins - 1);
                        h[b] += 1.0;
                    }
                    h.iter_mut().for_each(|x| *x /= vs.len() as f64);
                    ((*name).to_string(), h)
                })
                .collect();
            FeatureHistogram {
                feature: TOUCH_COLUMNS[f].to_string(),
                edges,
                sources: hists,
            }
        })
        .collect())
}

/// Long-format CSV: `feature,bin_lo,bin_hi,source,mass`.
pub fn write_histograms_csv<W: Write>(out: W, hists: &[FeatureHistogram]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "bin_lo", "bin_hi", "source", "mass"])?;
    for h in hists {
        for (name, masses) in &h.sources {
            for (i, m) in masses.iter().enumerate() {
                w.write_record([
                    h.feature.clone(),
                    h.edges[i].to_string(),
                    h.edges[i + 1].to_string(),
                    name.clone(),
                    m.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
