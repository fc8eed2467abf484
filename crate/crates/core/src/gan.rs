//! Recurrent GAN for touch (x, y) and accelerometer (x, y, z) sequences.
//!
//! The generator maps a human sequence corrupted with Gaussian noise to a
//! synthetic sequence of the same shape (linear head per timestep). The
//! discriminator reads a whole sequence and emits one probability of it
//! being human (sigmoid head). The discriminator minimizes BCE on real
//! (target 1) versus generated (target 0) sequences; the generator
//! minimizes the squared error between the frozen discriminator's output on
//! its samples and 1.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng_from_seed, Exec};
use crate::nn::{
    compute_loss, AdamConfig, AdamState, Gradients, LossKind, NetArch, OutputActivation, SequenceNet,
};
use crate::synth::Gaussian;
use crate::trace::{AccelTrace, Corpus, Label, Resample, SampleMeta, Sequence, SwipeSample, TouchTrace};

pub const GAN_FORMAT_VERSION: u32 = 1;
const MIN_GAN_DURATION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Touch,
    Accel,
}

impl Modality {
    pub fn channels(self) -> usize {
        match self {
            Modality::Touch => 2,
            Modality::Accel => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorObjective {
    /// Squared error between the discriminator's output on generated
    /// sequences and the "human" target 1.
    #[default]
    Adversarial,
    /// Squared error between generated and input human sequences.
    Reconstruction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub seq_len: usize,
    pub lstm_sizes: Vec<usize>,
    pub noise_std: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: GeneratorObjective,
    /// Optional global gradient-norm clip applied to both networks.
    pub clip_norm: Option<f64>,
    pub init_scale: f64,
    pub forget_bias: f64,
    /// Train only the discriminator against the generator as initialized.
    pub freeze_generator: bool,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            seq_len: 32,
            lstm_sizes: vec![32, 16],
            noise_std: 0.1,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            batch_size: 128,
            seed: 0,
            objective: GeneratorObjective::Adversarial,
            clip_norm: None,
            init_scale: 0.08,
            forget_bias: 1.0,
            freeze_generator: false,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.seq_len < 2 {
            return bad("seq_len must be at least 2");
        }
        if self.lstm_sizes.is_empty() || self.lstm_sizes.len() > 2 || self.lstm_sizes.contains(&0) {
            return bad("lstm_sizes must hold one or two positive sizes");
        }
        if !(self.noise_std >= 0.0) || !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("noise_std, learning_rate and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Per-channel affine scaling applied before the networks see a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelScaling {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Z-scoring fitted over every row of every sequence.
    pub fn fit(seqs: &[Sequence], channels: usize) -> Self {
        let mut out = Self::identity(channels);
        for c in 0..channels {
            let vals: Vec<f64> = seqs.iter().flatten().map(|r| r[c]).collect();
            let g = Gaussian::fit(&vals);
            out.mean[c] = g.mean;
            out.std[c] = g.std.max(1e-9);
        }
        out
    }

    pub fn apply(&self, seq: &[Vec<f64>]) -> Sequence {
        seq.iter()
            .map(|r| r.iter().enumerate().map(|(c, v)| (v - self.mean[c]) / self.std[c]).collect())
            .collect()
    }

    pub fn invert(&self, seq: &[Vec<f64>]) -> Sequence {
        seq.iter()
            .map(|r| r.iter().enumerate().map(|(c, v)| v * self.std[c] + self.mean[c]).collect())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub discriminator: f64,
    pub generator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub format_version: u32,
    pub modality: Modality,
    pub channels: usize,
    pub config: GanConfig,
    pub generator: SequenceNet,
    pub discriminator: SequenceNet,
    pub scaling: ChannelScaling,
    /// Duration distribution of the human swipes seen in training; used to
    /// re-attach timestamps to generated sequences.
    pub duration: Option<Gaussian>,
    pub training_log: Vec<EpochLoss>,
    pub trained: bool,
}

impl GanModel {
    /// Freshly initialized, untrained networks.
    pub fn new(modality: Modality, config: GanConfig) -> Result<Self> {
        config.validate()?;
        let ch = modality.channels();
        let arch = |out, act| NetArch {
            init_scale: config.init_scale,
            forget_bias: config.forget_bias,
            ..NetArch::new(ch, config.lstm_sizes.clone(), out, act)
        };
        let generator = SequenceNet::new(&arch(ch, OutputActivation::Linear), derive_seed(config.seed, 1))?;
        let discriminator = SequenceNet::new(&arch(1, OutputActivation::Sigmoid), derive_seed(config.seed, 2))?;
        Ok(Self {
            format_version: GAN_FORMAT_VERSION,
            modality,
            channels: ch,
            config,
            generator,
            discriminator,
            scaling: ChannelScaling::identity(ch),
            duration: None,
            training_log: Vec::new(),
            trained: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != GAN_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: GAN_FORMAT_VERSION,
            });
        }
        self.config.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        let ch = self.modality.channels();
        if self.channels != ch
            || self.generator.input_dim() != ch
            || self.generator.output_dim() != ch
            || self.generator.activation != OutputActivation::Linear
            || self.discriminator.input_dim() != ch
            || self.discriminator.activation != OutputActivation::Sigmoid
            || self.scaling.mean.len() != ch
            || self.scaling.std.len() != ch
        {
            return Err(Error::ShapeMismatch(format!(
                "{:?} model expects {ch} channels throughout",
                self.modality
            )));
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

    fn check_sequence(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.len() != self.config.seq_len || seq.iter().any(|r| r.len() != self.channels) {
            return Err(Error::ShapeMismatch(format!(
                "expected a {}x{} sequence",
                self.config.seq_len, self.channels
            )));
        }
        Ok(())
    }
}

fn to_rows(flat: &[f64], channels: usize) -> Sequence {
    flat.chunks_exact(channels).map(|c| c.to_vec()).collect()
}

fn add_into(acc: &mut [Vec<f64>], g: Vec<Vec<f64>>) {
    for (a, b) in acc.iter_mut().zip(g) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Sums per-sample gradients in sample order, independent of `exec`.
fn sum_gradients(net: &SequenceNet, per_sample: Vec<(f64, Vec<Vec<f64>>)>) -> (f64, Vec<Vec<f64>>) {
    let mut acc = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for (l, g) in per_sample {
        loss += l;
        add_into(&mut acc, g);
    }
    (loss, acc)
}

/// Alternating-update GAN trainer over a fixed set of (scaled) sequences.
pub struct GanTrainer {
    model: GanModel,
    data: Vec<Sequence>,
    d_adam: AdamState,
    g_adam: AdamState,
    rng: rand_chacha::ChaCha8Rng,
    noise: Normal<f64>,
    exec: Exec,
}

impl GanTrainer {
    /// `human_seqs` are raw sequences already resampled to `seq_len`.
    /// Accelerometer sequences are z-scored per channel; the scaling is
    /// stored in the model.
    pub fn new(mut model: GanModel, human_seqs: &[Sequence], exec: Exec) -> Result<Self> {
        model.validate()?;
        let cfg = model.config.clone();
        if human_seqs.len() < cfg.batch_size {
            return Err(Error::InsufficientData(format!(
                "{} sequences for batch size {}",
                human_seqs.len(),
                cfg.batch_size
            )));
        }
        for s in human_seqs {
            model.check_sequence(s)?;
            if s.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        model.scaling = match model.modality {
            Modality::Touch => ChannelScaling::identity(model.channels),
            Modality::Accel => ChannelScaling::fit(human_seqs, model.channels),
        };
        let data = human_seqs.iter().map(|s| model.scaling.apply(s)).collect();
        let d_adam = AdamState::for_net(cfg.adam(), &model.discriminator);
        let g_adam = AdamState::for_net(cfg.adam(), &model.generator);
        Ok(Self {
            data,
            d_adam,
            g_adam,
            rng: rng_from_seed(derive_seed(cfg.seed, 3)),
            noise: Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            exec,
            model,
        })
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    fn noisy_inputs(&mut self, batch: &[usize]) -> Vec<Sequence> {
        batch
            .iter()
            .map(|&i| {
                self.data[i]
                    .iter()
                    .map(|r| r.iter().map(|v| v + self.noise.sample(&mut self.rng)).collect())
                    .collect()
            })
            .collect()
    }

    /// One discriminator update on `batch` (indices into the training set).
    /// The generator is only read. Returns the mean BCE.
    pub fn discriminator_step(&mut self, batch: &[usize]) -> Result<f64> {
        let inputs = self.noisy_inputs(batch);
        let gen = &self.model.generator;
        let ch = self.model.channels;
        let fakes = self
            .exec
            .map(&inputs, |x| gen.predict(x).map(|o| to_rows(&o, ch)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let disc = &self.model.discriminator;
        let scale = 1.0 / (2 * batch.len()) as f64;
        let reals: Vec<&Sequence> = batch.iter().map(|&i| &self.data[i]).collect();
        let items: Vec<(&Sequence, f64)> = reals
            .into_iter()
            .map(|s| (s, 1.0))
            .chain(fakes.iter().map(|s| (s, 0.0)))
            .collect();
        let per = self
            .exec
            .map(&items, |&(seq, target)| -> Result<(f64, Vec<Vec<f64>>)> {
                let (out, cache) = disc.forward(seq)?;
                let (loss, g) = compute_loss(LossKind::Bce, &out, &[target])?;
                let mut grads = disc.backward(&cache, &[g[0] * scale])?.params;
                grads.shrink_to_fit();
                Ok((loss * scale, grads))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let (loss, mut grads) = sum_gradients(disc, per);
        if let Some(c) = self.model.config.clip_norm {
            Gradients::clip_norm(&mut grads, c);
        }
        if loss.is_finite() {
            self.d_adam.step(self.model.discriminator.params_mut(), &grads)?;
        }
        Ok(loss)
    }

    /// One generator update on `batch` through the frozen discriminator.
    /// Returns the mean generator loss.
    pub fn generator_step(&mut self, batch: &[usize]) -> Result<f64> {
        let (loss, grads) = self.generator_loss(batch)?;
        if loss.is_finite() {
            let mut grads = grads;
            if let Some(c) = self.model.config.clip_norm {
                Gradients::clip_norm(&mut grads, c);
            }
            self.g_adam.step(self.model.generator.params_mut(), &grads)?;
        }
        Ok(loss)
    }

    fn generator_loss(&mut self, batch: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
        let inputs = self.noisy_inputs(batch);
        let clean: Vec<&Sequence> = batch.iter().map(|&i| &self.data[i]).collect();
        let items: Vec<(&Sequence, &Sequence)> = inputs.iter().zip(clean).collect();
        let gen = &self.model.generator;
        let disc = &self.model.discriminator;
        let ch = self.model.channels;
        let objective = self.model.config.objective;
        let scale = 1.0 / batch.len() as f64;
        let per = self
            .exec
            .map(&items, |&(x, clean)| -> Result<(f64, Vec<Vec<f64>>)> {
                let (flat, g_cache) = gen.forward(x)?;
                let (loss, d_fake) = match objective {
                    GeneratorObjective::Adversarial => {
                        let fake = to_rows(&flat, ch);
                        let (p, d_cache) = disc.forward(&fake)?;
                        let (loss, g) = compute_loss(LossKind::Mse, &p, &[1.0])?;
                        let dg = disc.backward(&d_cache, &g)?;
                        (loss, dg.input.concat())
                    }
                    GeneratorObjective::Reconstruction => {
                        compute_loss(LossKind::Mse, &flat, &clean.concat())?
                    }
                };
                let d_fake: Vec<f64> = d_fake.iter().map(|g| g * scale).collect();
                Ok((loss * scale, gen.backward(&g_cache, &d_fake)?.params))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(sum_gradients(gen, per))
    }

    /// One pass over the shuffled training set.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochLoss> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        let bs = self.model.config.batch_size;
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(bs).enumerate() {
            let d_loss = self.discriminator_step(batch)?;
            if !d_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    which: "discriminator",
                    epoch,
                    batch: b,
                });
            }
            let g_loss = if self.model.config.freeze_generator {
                self.generator_loss(batch)?.0
            } else {
                self.generator_step(batch)?
            };
            if !g_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    which: "generator",
                    epoch,
                    batch: b,
                });
            }
            d_sum += d_loss;
            g_sum += g_loss;
            batches += 1;
        }
        let loss = EpochLoss {
            discriminator: d_sum / batches as f64,
            generator: g_sum / batches as f64,
        };
        log::debug!("epoch {epoch}: D {:.5} G {:.5}", loss.discriminator, loss.generator);
        self.model.training_log.push(loss);
        Ok(loss)
    }

    pub fn run(mut self) -> Result<GanModel> {
        for epoch in 0..self.model.config.epochs {
            self.run_epoch(epoch)?;
        }
        self.model.trained = true;
        Ok(self.model)
    }
}

pub fn train_gan(human_seqs: &[Sequence], modality: Modality, config: GanConfig) -> Result<GanModel> {
    train_gan_with(GanModel::new(modality, config)?, human_seqs, Exec::Parallel)
}

/// Trains starting from `model` (e.g. one with a hand-set generator).
pub fn train_gan_with(model: GanModel, human_seqs: &[Sequence], exec: Exec) -> Result<GanModel> {
    GanTrainer::new(model, human_seqs, exec)?.run()
}

/// Resampled human sequences for one modality plus the fitted human swipe
/// duration distribution.
pub fn prepare_sequences(corpus: &Corpus, modality: Modality, seq_len: usize) -> Result<(Vec<Sequence>, Gaussian)> {
    let humans: Vec<&SwipeSample> = corpus.samples.iter().filter(|s| s.label == Label::Human).collect();
    if humans.is_empty() {
        return Err(Error::EmptyCorpus(corpus.provenance.clone()));
    }
    let seqs = humans
        .iter()
        .map(|s| match modality {
            Modality::Touch => s.touch.resample_to_length(seq_len),
            Modality::Accel => s.accel.resample_to_length(seq_len),
        })
        .collect::<Result<Vec<_>>>()?;
    let durations: Vec<f64> = humans.iter().map(|s| s.touch.duration()).collect();
    Ok((seqs, Gaussian::fit(&durations)))
}

/// Resamples the corpus and trains one GAN for `modality`.
pub fn train_gan_on_corpus(corpus: &Corpus, modality: Modality, config: GanConfig, exec: Exec) -> Result<GanModel> {
    let (seqs, duration) = prepare_sequences(corpus, modality, config.seq_len)?;
    let mut model = train_gan_with(GanModel::new(modality, config)?, &seqs, exec)?;
    model.duration = Some(duration);
    Ok(model)
}

/// Generator output for a human sequence of shape `seq_len x channels`, in
/// the original units. Touch coordinates are clamped to the unit square.
pub fn gan_generate(model: &GanModel, human_seq: &[Vec<f64>], seed: u64) -> Result<Sequence> {
    if !model.trained {
        return Err(Error::UntrainedModel);
    }
    model.check_sequence(human_seq)?;
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, model.config.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let input: Sequence = model
        .scaling
        .apply(human_seq)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v + noise.sample(&mut rng)).collect())
        .collect();
    let out = to_rows(&model.generator.predict(&input)?, model.channels);
    let mut out = model.scaling.invert(&out);
    if model.modality == Modality::Touch {
        out.iter_mut().flatten().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(out)
}

/// Probability that `seq` is human according to the discriminator. Bot
/// decision is `score < 0.5`.
pub fn discriminator_score(model: &GanModel, seq: &[Vec<f64>]) -> Result<f64> {
    if !model.trained {
        return Err(Error::UntrainedModel);
    }
    model.check_sequence(seq)?;
    Ok(model.discriminator.predict(&model.scaling.apply(seq))?[0])
}

/// A complete GAN bot sample derived from one human sample.
pub fn gan_generate_sample(
    touch_model: &GanModel,
    accel_model: &GanModel,
    human: &SwipeSample,
    seed: u64,
) -> Result<SwipeSample> {
    if touch_model.modality != Modality::Touch || accel_model.modality != Modality::Accel {
        return Err(Error::ConfigContradiction(
            "expected one touch model and one accelerometer model".into(),
        ));
    }
    let duration_prior = touch_model.duration.ok_or(Error::UntrainedModel)?;
    let touch_in = human.touch.resample_to_length(touch_model.config.seq_len)?;
    let accel_in = human.accel.resample_to_length(accel_model.config.seq_len)?;
    let touch_out = gan_generate(touch_model, &touch_in, derive_seed(seed, 0))?;
    let accel_out = gan_generate(accel_model, &accel_in, derive_seed(seed, 1))?;

    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let mut duration = duration_prior.sample(&mut rng);
    for _ in 0..1000 {
        if duration >= MIN_GAN_DURATION {
            break;
        }
        duration = duration_prior.sample(&mut rng);
    }
    let duration = duration.max(MIN_GAN_DURATION);
    Ok(SwipeSample {
        touch: TouchTrace::from_uniform(&touch_out, duration)?,
        accel: AccelTrace::from_uniform(&accel_out, duration)?,
        label: Label::GanBot,
        meta: SampleMeta::synthetic(format!("gan-{seed:016x}")),
    })
}

/// `count` GAN samples, each seeded from a randomly chosen human sample.
pub fn generate_gan(
    touch_model: &GanModel,
    accel_model: &GanModel,
    humans: &Corpus,
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<Corpus> {
    let pool: Vec<&SwipeSample> = humans.samples.iter().filter(|s| s.label == Label::Human).collect();
    if pool.is_empty() {
        return Err(Error::EmptyCorpus(humans.provenance.clone()));
    }
    let samples = exec
        .map_range(count, |i| {
            let s = derive_seed(seed, i as u64);
            let pick = rng_from_seed(s).random_range(0..pool.len());
            gan_generate_sample(touch_model, accel_model, pool[pick], derive_seed(s, 1))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(samples, format!("gan(seed={seed})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> GanConfig {
        GanConfig {
            seq_len: 8,
            lstm_sizes: vec![6, 4],
            epochs: 2,
            batch_size: 16,
            seed: 5,
            ..Default::default()
        }
    }

    fn seqs(n: usize, ch: usize, seed: u64) -> Vec<Sequence> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.1..0.5);
                (0..8)
                    .map(|t| (0..ch).map(|c| (a + 0.05 * t as f64 + 0.1 * c as f64).min(1.0)).collect())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn insufficient_data() {
        let r = train_gan(&seqs(10, 2, 0), Modality::Touch, tiny_config());
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let data = seqs(40, 2, 1);
        let a = train_gan_with(GanModel::new(Modality::Touch, tiny_config()).unwrap(), &data, Exec::Sequential).unwrap();
        let b = train_gan_with(GanModel::new(Modality::Touch, tiny_config()).unwrap(), &data, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.training_log.len(), 2);
        assert!(a.trained);
    }

    #[test]
    fn steps_leave_the_other_network_alone() {
        let data = seqs(32, 3, 2);
        let mut tr = GanTrainer::new(GanModel::new(Modality::Accel, tiny_config()).unwrap(), &data, Exec::Parallel).unwrap();
        let batch: Vec<usize> = (0..16).collect();
        let (g0, d0) = (tr.model().generator.fingerprint(), tr.model().discriminator.fingerprint());
        tr.discriminator_step(&batch).unwrap();
        assert_eq!(tr.model().generator.fingerprint(), g0);
        let d1 = tr.model().discriminator.fingerprint();
        assert_ne!(d1, d0);
        tr.generator_step(&batch).unwrap();
        assert_eq!(tr.model().discriminator.fingerprint(), d1);
        assert_ne!(tr.model().generator.fingerprint(), g0);
    }

    #[test]
    fn models_read_only_their_channels() {
        let t = GanModel::new(Modality::Touch, tiny_config()).unwrap();
        let a = GanModel::new(Modality::Accel, tiny_config()).unwrap();
        assert_eq!((t.generator.input_dim(), t.discriminator.input_dim()), (2, 2));
        assert_eq!((a.generator.input_dim(), a.discriminator.input_dim()), (3, 3));
        assert_eq!(a.generator.output_dim(), 3);
    }

    #[test]
    fn untrained_model_is_rejected() {
        let m = GanModel::new(Modality::Touch, tiny_config()).unwrap();
        let s = &seqs(1, 2, 0)[0];
        assert!(matches!(discriminator_score(&m, s), Err(Error::UntrainedModel)));
        assert!(matches!(gan_generate(&m, s, 0), Err(Error::UntrainedModel)));
    }

    #[test]
    fn zero_discriminator_scores_half() {
        let mut m = GanModel::new(Modality::Touch, tiny_config()).unwrap();
        for p in m.discriminator.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        m.trained = true;
        for s in seqs(5, 2, 3) {
            assert_eq!(discriminator_score(&m, &s).unwrap(), 0.5);
        }
        assert!(matches!(discriminator_score(&m, &seqs(1, 3, 0)[0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn generate_shape_and_determinism() {
        let data = seqs(40, 2, 4);
        let m = train_gan(&data, Modality::Touch, tiny_config()).unwrap();
        let a = gan_generate(&m, &data[0], 17).unwrap();
        let b = gan_generate(&m, &data[0], 17).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), a[0].len()), (8, 2));
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        for s in &data {
            let p = discriminator_score(&m, s).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let data = seqs(40, 3, 6);
        let m = train_gan(&data, Modality::Accel, tiny_config()).unwrap();
        let back = GanModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        assert_eq!(discriminator_score(&m, &data[0]).unwrap(), discriminator_score(&back, &data[0]).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.lstm_sizes = vec![4, 4, 4];
        assert!(GanModel::new(Modality::Touch, c).is_err());
        let c = GanConfig { batch_size: 0, ..tiny_config() };
        assert!(c.validate().is_err());
    }
}
