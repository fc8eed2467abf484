//! Command-line front end and verification service.

pub mod config;
pub mod server;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use becaptcha::bundle::{load_bundle, save_bundle, verify, FusionMode, ModelBundle, VerifyRequest};
use becaptcha::classify::{train_classifier_with, train_one_class_with, ClassifierKind, ClassifierSpec};
use becaptcha::eval::{
    ablation_curve, default_ablation_grid, feature_distribution_report, run_scenario, write_ablation_csv,
    write_histograms_csv, BotSource, EvalConfig, EvalReport, FeaturePools, Scenario, DEFAULT_BINS,
};
use becaptcha::features::{sample_features, write_features_csv, FeatureMode};
use becaptcha::gan::{generate_gan, train_gan_on_corpus, GanModel, Modality};
use becaptcha::surrogate::surrogate_corpus;
use becaptcha::synth::{fit_prior_with, generate_handcrafted, HumanSwipePrior, VelocityProfile};
use becaptcha::trace::{ingest_corpus, Corpus, IngestFormat, IngestOptions};
use becaptcha::{Error, ErrorClass, Exec};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{AppConfig, ConfigError};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "becaptcha", version, about = "Behavioral bot detection from swipes and accelerometer traces")]
pub struct Cli {
    /// Root seed for every random choice (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw recordings into a canonical JSONL corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Canonical)]
        format: FormatArg,
        /// Seconds of accelerometer data kept around each swipe.
        #[arg(long, default_value_t = 0.0)]
        accel_pad: f64,
        /// Also write the feature matrix as CSV.
        #[arg(long)]
        features_csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::TouchAccel)]
        mode: ModeArg,
    },
    /// Fit the handcrafted generator's prior on a human corpus.
    FitPrior {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate synthetic samples.
    Synth {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        count: usize,
        /// Prior JSON (handcrafted).
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Trained GAN models, one touch and one accelerometer (gan).
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        /// Human corpus that seeds the generator (gan).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ProfileArg::FastStart)]
        profile: ProfileArg,
    },
    /// Train a GAN on one modality of a human corpus.
    TrainGan {
        #[arg(long, value_enum)]
        modality: ModalityArg,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train a classifier and package it as a model bundle.
    TrainClf {
        #[command(flatten)]
        data: CorpusArgs,
        #[arg(long, value_enum)]
        classifier: Option<ClassifierArg>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        fusion: Option<FusionArg>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        model_version: Option<String>,
    },
    /// Run an evaluation scenario.
    Eval {
        #[command(flatten)]
        data: CorpusArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Accuracy as a function of the training size M.
    Ablate {
        #[command(flatten)]
        data: CorpusArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated M values.
        #[arg(long, value_delimiter = ',')]
        m_values: Vec<usize>,
    },
    /// Feature histograms per corpus and tables of saved evaluation reports.
    Report {
        /// `name=path` of a corpus to histogram.
        #[arg(long = "corpus")]
        corpora: Vec<String>,
        /// Saved evaluation report JSON.
        #[arg(long = "eval")]
        evals: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Score one request file (`-` for stdin) against a bundle.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        request: PathBuf,
    },
    /// Serve `POST /verify` and `GET /healthz`.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub human: PathBuf,
    #[arg(long)]
    pub handcrafted: Option<PathBuf>,
    #[arg(long)]
    pub gan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub train_sources: Option<Vec<SourceArg>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub test_sources: Option<Vec<SourceArg>>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Skip the hyperparameter sweep.
    #[arg(long)]
    pub no_tune: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Canonical,
    Humidb,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Touch,
    TouchAccel,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Touch => FeatureMode::TouchOnly,
            ModeArg::TouchAccel => FeatureMode::TouchAccel,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Handcrafted,
    Gan,
    /// Curved stand-in human swipes.
    Surrogate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileArg {
    FastStart,
    SlowStart,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModalityArg {
    Touch,
    Accel,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClassifierArg {
    Knn,
    Rf,
    Svm,
    Ocsvm,
    Discriminator,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Knn => ClassifierKind::Knn,
            ClassifierArg::Rf => ClassifierKind::RandomForest,
            ClassifierArg::Svm => ClassifierKind::SvmRbf,
            ClassifierArg::Ocsvm => ClassifierKind::OneClassSvm,
            ClassifierArg::Discriminator => ClassifierKind::GanDiscriminator,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionArg {
    FeatureConcat,
    ScoreMean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScenarioArg {
    Multiclass,
    Agnostic,
    OneClass,
    Discriminator,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SourceArg {
    Handcrafted,
    Gan,
}

impl From<SourceArg> for BotSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Handcrafted => BotSource::Handcrafted,
            SourceArg::Gan => BotSource::Gan,
        }
    }
}

/// Exit code for an error: the library's error class, 2 for configuration
/// problems, 3 for anything else (I/O and the like).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Convergence => EXIT_CONVERGENCE,
            };
        }
        if cause.is::<ConfigError>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_DATA
}

struct Ctx {
    seed: u64,
    config: AppConfig,
    out: Option<PathBuf>,
    exec: Exec,
}

impl Ctx {
    fn out(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().ok_or_else(|| ConfigError("--out is required".into()).into())
    }

    /// Writes to `--out` when given, otherwise to stdout.
    fn emit(&self, bytes: &[u8]) -> anyhow::Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p, e).into()),
            None => Ok(std::io::stdout().write_all(bytes)?),
        }
    }
}

fn load_corpus(path: &Path, exec: Exec) -> anyhow::Result<Corpus> {
    let ingested = ingest_corpus(path, IngestFormat::Canonical, IngestOptions { exec, ..Default::default() })?;
    for w in &ingested.warnings {
        log::warn!("skipped {w}");
    }
    Ok(ingested.corpus)
}

fn load_optional(path: Option<&Path>, exec: Exec) -> anyhow::Result<Corpus> {
    match path {
        Some(p) => load_corpus(p, exec),
        None => Ok(Corpus::new(Vec::new(), "none")),
    }
}

fn read_json_file(path: &Path) -> anyhow::Result<String> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()).into());
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = AppConfig::load(cli.config.as_deref())?;
    let ctx = Ctx {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        config,
        out: cli.out,
        exec: if cli.sequential { Exec::Sequential } else { Exec::Parallel },
    };
    match cli.command {
        Command::Ingest {
            input,
            format,
            accel_pad,
            features_csv,
            mode,
        } => ingest(&ctx, &input, format, accel_pad, features_csv.as_deref(), mode.into()),
        Command::FitPrior { corpus } => {
            let corpus = load_corpus(&corpus, ctx.exec)?;
            let (prior, warnings) = fit_prior_with(&corpus, ctx.config.prior)?;
            for w in warnings {
                log::warn!("{w:?}");
            }
            let out = ctx.out()?;
            std::fs::write(out, prior.to_json()?).map_err(|e| Error::io(out, e))?;
            Ok(())
        }
        Command::Synth {
            method,
            count,
            prior,
            models,
            corpus,
            profile,
        } => synth(&ctx, method, count, prior.as_deref(), &models, corpus.as_deref(), profile),
        Command::TrainGan { modality, corpus } => {
            let corpus = load_corpus(&corpus, ctx.exec)?;
            let modality = match modality {
                ModalityArg::Touch => Modality::Touch,
                ModalityArg::Accel => Modality::Accel,
            };
            let cfg = becaptcha::gan::GanConfig {
                seed: ctx.seed,
                ..ctx.config.gan.clone()
            };
            let model = train_gan_on_corpus(&corpus, modality, cfg, ctx.exec)?;
            if let Some(last) = model.training_log.last() {
                log::info!("final losses: D {:.5} G {:.5}", last.discriminator, last.generator);
            }
            let out = ctx.out()?;
            std::fs::write(out, model.to_json()?).map_err(|e| Error::io(out, e))?;
            Ok(())
        }
        Command::TrainClf {
            data,
            classifier,
            mode,
            fusion,
            tau,
            model_version,
        } => train_clf(&ctx, &data, classifier, mode, fusion, tau, model_version),
        Command::Eval { data, scenario } => {
            let (spec, config) = scenario_setup(&ctx, &scenario)?;
            let human = load_corpus(&data.human, ctx.exec)?;
            let hc = load_optional(data.handcrafted.as_deref(), ctx.exec)?;
            let gan = load_optional(data.gan.as_deref(), ctx.exec)?;
            let report = run_scenario(&human, &hc, &gan, &spec, &config, ctx.exec)?;
            print!("{}", report.to_text());
            if let Some(out) = &ctx.out {
                std::fs::write(out, report.to_json()?).map_err(|e| Error::io(out, e))?;
            }
            Ok(())
        }
        Command::Ablate {
            data,
            scenario,
            m_values,
        } => {
            let (spec, config) = scenario_setup(&ctx, &scenario)?;
            let human = load_corpus(&data.human, ctx.exec)?;
            let hc = load_optional(data.handcrafted.as_deref(), ctx.exec)?;
            let gan = load_optional(data.gan.as_deref(), ctx.exec)?;
            let (pools, dropped) = FeaturePools::extract(&human, &hc, &gan, config.modality, ctx.exec);
            if dropped > 0 {
                log::warn!("{dropped} samples could not be featurized");
            }
            let grid = if m_values.is_empty() { default_ablation_grid() } else { m_values };
            let points = ablation_curve(&pools, &spec, &config, &grid, ctx.exec)?;
            let mut buf = Vec::new();
            write_ablation_csv(&mut buf, &points)?;
            ctx.emit(&buf)
        }
        Command::Report { corpora, evals, bins } => report(&ctx, &corpora, &evals, bins),
        Command::Verify { bundle, request } => {
            let bundle = load_bundle(&bundle)?;
            let body = if request == Path::new("-") {
                std::io::read_to_string(std::io::stdin())?
            } else {
                read_json_file(&request)?
            };
            let req: VerifyRequest =
                serde_json::from_str(&body).map_err(|e| Error::MalformedRequest(format!("invalid request: {e}")))?;
            let resp = verify(&bundle, &req)?;
            let mut text = serde_json::to_string(&resp)?;
            text.push('\n');
            ctx.emit(text.as_bytes())
        }
        Command::Serve { bundle, addr } => {
            let bundle = Arc::new(load_bundle(&bundle)?);
            let addr = addr.unwrap_or_else(|| ctx.config.service.addr.clone());
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                server::serve(listener, bundle).await?;
                Ok(())
            })
        }
    }
}

fn ingest(
    ctx: &Ctx,
    input: &Path,
    format: FormatArg,
    accel_pad: f64,
    features_csv: Option<&Path>,
    mode: FeatureMode,
) -> anyhow::Result<()> {
    if accel_pad.is_nan() || accel_pad < 0.0 {
        return Err(ConfigError("--accel-pad must be non-negative".into()).into());
    }
    let format = match format {
        FormatArg::Canonical => IngestFormat::Canonical,
        FormatArg::Humidb => IngestFormat::HumidbAdapter,
    };
    let ingested = ingest_corpus(input, format, IngestOptions { accel_pad_s: accel_pad, exec: ctx.exec })?;
    for w in &ingested.warnings {
        log::warn!("skipped {w}");
    }
    log::info!("{} samples, {} skipped", ingested.corpus.len(), ingested.warnings.len());
    ingested.corpus.write_jsonl(ctx.out()?)?;
    if let Some(path) = features_csv {
        let vectors: Vec<_> = ctx
            .exec
            .map(&ingested.corpus.samples, |s| sample_features(s, mode).ok())
            .into_iter()
            .flatten()
            .collect();
        let skipped = ingested.corpus.len() - vectors.len();
        if skipped > 0 {
            log::warn!("{skipped} samples could not be featurized and are left out of the CSV");
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_features_csv(std::io::BufWriter::new(file), &vectors)?;
    }
    Ok(())
}

fn synth(
    ctx: &Ctx,
    method: MethodArg,
    count: usize,
    prior: Option<&Path>,
    models: &[PathBuf],
    corpus: Option<&Path>,
    profile: ProfileArg,
) -> anyhow::Result<()> {
    let out = ctx.out()?;
    let corpus = match method {
        MethodArg::Surrogate => surrogate_corpus(&ctx.config.surrogate, count, ctx.seed, ctx.exec)?,
        MethodArg::Handcrafted => {
            let path = prior.ok_or_else(|| ConfigError("handcrafted synthesis needs --prior".into()))?;
            let prior = HumanSwipePrior::from_json(&read_json_file(path)?)?;
            let profile = match profile {
                ProfileArg::FastStart => VelocityProfile::FastStart,
                ProfileArg::SlowStart => VelocityProfile::SlowStart,
            };
            generate_handcrafted(&prior, count, ctx.seed, profile, ctx.exec)?
        }
        MethodArg::Gan => {
            if models.len() != 2 {
                return Err(ConfigError("gan synthesis needs --model twice: one touch, one accel".into()).into());
            }
            let loaded = models
                .iter()
                .map(|p| Ok(GanModel::from_json(&read_json_file(p)?)?))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let (touch, accel) = match (loaded[0].modality, loaded[1].modality) {
                (Modality::Touch, Modality::Accel) => (&loaded[0], &loaded[1]),
                (Modality::Accel, Modality::Touch) => (&loaded[1], &loaded[0]),
                _ => return Err(ConfigError("need one touch and one accel model".into()).into()),
            };
            let path = corpus.ok_or_else(|| ConfigError("gan synthesis needs --corpus".into()))?;
            let humans = load_corpus(path, ctx.exec)?;
            generate_gan(touch, accel, &humans, count, ctx.seed, ctx.exec)?
        }
    };
    corpus.write_jsonl(out)?;
    Ok(())
}

fn train_clf(
    ctx: &Ctx,
    data: &CorpusArgs,
    classifier: Option<ClassifierArg>,
    mode: Option<ModeArg>,
    fusion: Option<FusionArg>,
    tau: Option<f64>,
    model_version: Option<String>,
) -> anyhow::Result<()> {
    let out = ctx.out()?;
    let mut spec = ctx.config.classifier.clone();
    if let Some(c) = classifier {
        spec.kind = c.into();
    }
    spec.seed = ctx.seed;
    let service = &ctx.config.service;
    let fusion = match fusion {
        Some(FusionArg::FeatureConcat) => FusionMode::FeatureConcat,
        Some(FusionArg::ScoreMean) => FusionMode::ScoreMean,
        None => service.fusion,
    };
    let mode: FeatureMode = mode.map_or(ctx.config.eval.modality, Into::into);
    let human = load_corpus(&data.human, ctx.exec)?;
    let hc = load_optional(data.handcrafted.as_deref(), ctx.exec)?;
    let gan = load_optional(data.gan.as_deref(), ctx.exec)?;
    let train = |mode: FeatureMode| -> anyhow::Result<_> {
        let (pools, dropped) = FeaturePools::extract(&human, &hc, &gan, mode, ctx.exec);
        if dropped > 0 {
            log::warn!("{dropped} samples could not be featurized");
        }
        let model = if spec.kind == ClassifierKind::OneClassSvm {
            train_one_class_with(&spec, &pools.human, ctx.exec)?
        } else {
            let all: Vec<_> = pools.human.into_iter().chain(pools.handcrafted).chain(pools.gan).collect();
            train_classifier_with(&spec, &all, ctx.exec)?
        };
        if let Some(gap) = model.kkt_gap() {
            log::info!("{mode} model converged with KKT gap {gap:.3e}");
        }
        Ok(model)
    };
    let version = model_version.unwrap_or_else(|| format!("{}-{}-seed{}", spec.kind, mode, ctx.seed));
    let mut bundle = match fusion {
        FusionMode::FeatureConcat => ModelBundle::feature_concat(train(mode)?, version),
        FusionMode::ScoreMean => {
            ModelBundle::score_mean(train(FeatureMode::TouchOnly)?, train(FeatureMode::TouchAccel)?, version)
        }
    };
    bundle.tau = tau.unwrap_or(service.tau);
    bundle.weights = service.weights;
    save_bundle(&bundle, out)?;
    Ok(())
}

fn scenario_setup(ctx: &Ctx, args: &ScenarioArgs) -> anyhow::Result<(ClassifierSpec, EvalConfig)> {
    let mut config = ctx.config.eval.clone();
    config.seed = ctx.seed;
    if let Some(s) = args.scenario {
        config.scenario = match s {
            ScenarioArg::Multiclass => Scenario::Multiclass,
            ScenarioArg::Agnostic => Scenario::Agnostic,
            ScenarioArg::OneClass => Scenario::OneClass,
            ScenarioArg::Discriminator => Scenario::GanDiscriminatorEval,
        };
    }
    let sources = |v: &Option<Vec<SourceArg>>| v.as_ref().map(|v| v.iter().map(|&s| s.into()).collect::<Vec<_>>());
    if let Some(test) = sources(&args.test_sources) {
        config.bot_sources_test = test;
    }
    config.bot_sources_train = match sources(&args.train_sources) {
        Some(train) => train,
        None => match config.scenario {
            Scenario::Multiclass => config.bot_sources_test.clone(),
            Scenario::Agnostic => config.bot_sources_train.clone(),
            Scenario::OneClass | Scenario::GanDiscriminatorEval => Vec::new(),
        },
    };
    if let Some(m) = args.mode {
        config.modality = m.into();
    }
    if let Some(m) = args.m {
        config.m = m;
    }
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
    if args.no_tune {
        config.tune = false;
    }
    config.gan.seed = ctx.seed;
    let mut spec = ctx.config.classifier.clone();
    spec.seed = ctx.seed;
    spec.kind = match (args.classifier, config.scenario) {
        (Some(c), _) => c.into(),
        (None, Scenario::OneClass) => ClassifierKind::OneClassSvm,
        (None, Scenario::GanDiscriminatorEval) => ClassifierKind::GanDiscriminator,
        (None, _) => spec.kind,
    };
    config.validate()?;
    Ok((spec, config))
}

fn report(ctx: &Ctx, corpora: &[String], evals: &[PathBuf], bins: usize) -> anyhow::Result<()> {
    if corpora.is_empty() && evals.is_empty() {
        return Err(ConfigError("report needs --corpus name=path or --eval report.json".into()).into());
    }
    if !evals.is_empty() {
        let mut table = EvalReport::table_header();
        for path in evals {
            let report: EvalReport = serde_json::from_str(&read_json_file(path)?)?;
            table.push('\n');
            table.push_str(&report.table_row());
        }
        println!("{table}");
    }
    if !corpora.is_empty() {
        let loaded = corpora
            .iter()
            .map(|spec| {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow!(ConfigError(format!("expected name=path, got {spec}"))))?;
                Ok((name.to_string(), load_corpus(Path::new(path), ctx.exec)?))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let refs: Vec<(&str, &Corpus)> = loaded.iter().map(|(n, c)| (n.as_str(), c)).collect();
        let hists = feature_distribution_report(&refs, bins)?;
        let mut buf = Vec::new();
        write_histograms_csv(&mut buf, &hists)?;
        ctx.emit(&buf)?;
    }
    Ok(())
}
