//! Handcrafted bot swipes: straight lines with log-spaced points and
//! i.i.d. Gaussian accelerometer noise, driven by priors fitted on humans.

use std::f64::consts::E;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng_from_seed, Exec};
use crate::features::touch_features;
use crate::trace::{
    AccelSample, AccelTrace, Corpus, Label, SampleMeta, SwipeSample, TouchPoint, TouchTrace, ACCEL_RATE_HZ,
};

pub const PRIOR_FORMAT_VERSION: u32 = 1;
/// Floor applied to a degenerate duration spread, in seconds.
pub const DURATION_STD_FLOOR: f64 = 1e-6;
const MIN_SYNTH_LENGTH: f64 = 1e-3;
const MIN_SYNTH_DURATION: f64 = 1e-3;
const MAX_REDRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    /// Population moments of `values`.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(self.mean, self.std)
            .expect("gaussian parameters validated on construction")
            .sample(rng)
    }

    fn is_valid(&self) -> bool {
        self.mean.is_finite() && self.std.is_finite() && self.std >= 0.0
    }
}

/// Empirical inverse CDF stored at evenly spaced probability levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub quantiles: Vec<f64>,
}

impl QuantileTable {
    pub fn fit(values: &[f64], levels: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let quantiles = (0..levels)
            .map(|k| {
                let pos = k as f64 / (levels - 1) as f64 * (n - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
            })
            .collect();
        Self { quantiles }
    }

    /// Inverse CDF at probability `u` in [0, 1].
    pub fn at(&self, u: f64) -> f64 {
        let q = &self.quantiles;
        let pos = u.clamp(0.0, 1.0) * (q.len() - 1) as f64;
        let lo = (pos.floor() as usize).min(q.len() - 1);
        let hi = (lo + 1).min(q.len() - 1);
        q[lo] + (pos - lo as f64) * (q[hi] - q[lo])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.at(rng.random::<f64>())
    }

    fn is_valid(&self) -> bool {
        self.quantiles.len() >= 2
            && self.quantiles.iter().all(|v| v.is_finite())
            && self.quantiles.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Start-point histogram over the unit square, row-major by y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartHistogram {
    pub nx: usize,
    pub ny: usize,
    pub masses: Vec<f64>,
}

impl StartHistogram {
    pub fn fit(points: &[(f64, f64)], nx: usize, ny: usize) -> Self {
        let mut counts = vec![0.0; nx * ny];
        let bin = |v: f64, n: usize| ((v * n as f64) as usize).min(n - 1);
        for &(x, y) in points {
            counts[bin(y, ny) * nx + bin(x, nx)] += 1.0;
        }
        let total = points.len() as f64;
        counts.iter_mut().for_each(|c| *c /= total);
        Self { nx, ny, masses: counts }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.masses.len() - 1;
        for (i, m) in self.masses.iter().enumerate() {
            acc += m;
            if u < acc {
                idx = i;
                break;
            }
        }
        // Skip trailing empty bins that rounding could land on.
        while self.masses[idx] == 0.0 && idx > 0 {
            idx -= 1;
        }
        let (ix, iy) = (idx % self.nx, idx / self.nx);
        let x = (ix as f64 + rng.random::<f64>()) / self.nx as f64;
        let y = (iy as f64 + rng.random::<f64>()) / self.ny as f64;
        (x.min(1.0), y.min(1.0))
    }

    fn is_valid(&self) -> bool {
        self.nx > 0
            && self.ny > 0
            && self.masses.len() == self.nx * self.ny
            && self.masses.iter().all(|m| *m >= 0.0)
            && (self.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCountBin {
    pub points: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanSwipePrior {
    pub format_version: u32,
    pub duration: Gaussian,
    pub length: QuantileTable,
    pub angle: QuantileTable,
    pub start: StartHistogram,
    pub accel: [Gaussian; 3],
    pub point_count: Vec<PointCountBin>,
    pub accel_rate_hz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorOptions {
    pub grid_x: usize,
    pub grid_y: usize,
    pub quantile_levels: usize,
    pub accel_rate_hz: f64,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self {
            grid_x: 20,
            grid_y: 20,
            quantile_levels: 101,
            accel_rate_hz: ACCEL_RATE_HZ,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PriorWarning {
    /// Every human duration was identical; the spread was floored.
    DegenerateDuration { value: f64 },
}

impl HumanSwipePrior {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::PriorUnfit(what.to_string()));
        if self.format_version != PRIOR_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: PRIOR_FORMAT_VERSION,
            });
        }
        if !self.duration.is_valid() || !self.accel.iter().all(Gaussian::is_valid) {
            return fail("gaussian parameters invalid");
        }
        if !self.length.is_valid() || !self.angle.is_valid() {
            return fail("quantile tables missing or not monotone");
        }
        if !self.start.is_valid() {
            return fail("start histogram does not sum to one");
        }
        if self.point_count.is_empty()
            || self.point_count.iter().any(|b| b.points < 2 || !(b.weight >= 0.0))
            || self.point_count.iter().map(|b| b.weight).sum::<f64>() <= 0.0
        {
            return fail("point-count distribution invalid");
        }
        if !(self.accel_rate_hz > 0.0) {
            return fail("accelerometer rate must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let prior: Self = serde_json::from_str(s)?;
        prior.validate()?;
        Ok(prior)
    }

    fn sample_point_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: f64 = self.point_count.iter().map(|b| b.weight).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for b in &self.point_count {
            acc += b.weight;
            if u < acc {
                return b.points;
            }
        }
        self.point_count[self.point_count.len() - 1].points
    }
}

pub fn fit_prior(corpus: &Corpus) -> Result<(HumanSwipePrior, Vec<PriorWarning>)> {
    fit_prior_with(corpus, PriorOptions::default())
}

/// Fits the generator prior on the human samples of `corpus` whose swipe
/// actually moves.
pub fn fit_prior_with(corpus: &Corpus, opts: PriorOptions) -> Result<(HumanSwipePrior, Vec<PriorWarning>)> {
    if opts.grid_x == 0 || opts.grid_y == 0 || opts.quantile_levels < 2 || !(opts.accel_rate_hz > 0.0) {
        return Err(Error::InvalidConfig("prior options out of range".into()));
    }
    let humans: Vec<(&SwipeSample, _)> = corpus
        .samples
        .iter()
        .filter(|s| s.label == Label::Human)
        .filter_map(|s| touch_features(&s.touch).ok().map(|f| (s, f)))
        .collect();
    if humans.len() < 2 {
        return Err(Error::EmptyCorpus(format!(
            "{}: need at least 2 moving human swipes, found {}",
            corpus.provenance,
            humans.len()
        )));
    }

    let mut warnings = Vec::new();
    let durations: Vec<f64> = humans.iter().map(|(_, f)| f.duration).collect();
    let mut duration = Gaussian::fit(&durations);
    if duration.std < DURATION_STD_FLOOR {
        log::warn!("all human durations equal {:.6} s; flooring spread", duration.mean);
        warnings.push(PriorWarning::DegenerateDuration { value: duration.mean });
        duration.std = DURATION_STD_FLOOR;
    }
    let lengths: Vec<f64> = humans.iter().map(|(_, f)| f.distance).collect();
    let angles: Vec<f64> = humans.iter().map(|(_, f)| f.angle).collect();
    let starts: Vec<(f64, f64)> = humans
        .iter()
        .map(|(s, _)| (s.touch.points()[0].x, s.touch.points()[0].y))
        .collect();

    let mut accel = [Gaussian { mean: 0.0, std: 0.0 }; 3];
    for (axis, g) in accel.iter_mut().enumerate() {
        let vals: Vec<f64> = humans
            .iter()
            .flat_map(|(s, _)| s.accel.samples().iter().map(move |a| a.axis(axis)))
            .collect();
        *g = Gaussian::fit(&vals);
    }

    let mut counts = std::collections::BTreeMap::<usize, f64>::new();
    for (s, _) in &humans {
        *counts.entry(s.touch.len()).or_default() += 1.0;
    }
    let n = humans.len() as f64;
    let point_count = counts
        .into_iter()
        .map(|(points, c)| PointCountBin { points, weight: c / n })
        .collect();

    let prior = HumanSwipePrior {
        format_version: PRIOR_FORMAT_VERSION,
        duration,
        length: QuantileTable::fit(&lengths, opts.quantile_levels),
        angle: QuantileTable::fit(&angles, opts.quantile_levels),
        start: StartHistogram::fit(&starts, opts.grid_x, opts.grid_y),
        accel,
        point_count,
        accel_rate_hz: opts.accel_rate_hz,
    };
    prior.validate()?;
    Ok((prior, warnings))
}

/// Arc-length profile of the synthetic line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityProfile {
    /// Log-spaced fractions: fast start, decaying speed.
    #[default]
    FastStart,
    /// Mirror image of `FastStart`: slow start, accelerating.
    SlowStart,
}

/// Cumulative arc-length fractions `ln(1 + i (e - 1) / (n - 1))`, with exact
/// endpoints 0 and 1.
pub fn log_fractions(n: usize, profile: VelocityProfile) -> Vec<f64> {
    assert!(n >= 2, "need at least two points");
    let fast: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 0.0,
            i if i == n - 1 => 1.0,
            i => (1.0 + i as f64 * (E - 1.0) / (n - 1) as f64).ln(),
        })
        .collect();
    match profile {
        VelocityProfile::FastStart => fast,
        VelocityProfile::SlowStart => (0..n).map(|i| 1.0 - fast[n - 1 - i]).collect(),
    }
}

/// Longest step from `start` along `dir` that stays inside the unit square.
fn max_length_inside(start: (f64, f64), dir: (f64, f64)) -> f64 {
    let bound = |p: f64, d: f64| {
        if d > 0.0 {
            (1.0 - p) / d
        } else if d < 0.0 {
            -p / d
        } else {
            f64::INFINITY
        }
    };
    bound(start.0, dir.0).min(bound(start.1, dir.1))
}

pub fn synth_handcrafted_touch(prior: &HumanSwipePrior, seed: u64) -> Result<TouchTrace> {
    synth_handcrafted_touch_with(prior, VelocityProfile::FastStart, seed)
}

pub fn synth_handcrafted_touch_with(
    prior: &HumanSwipePrior,
    profile: VelocityProfile,
    seed: u64,
) -> Result<TouchTrace> {
    prior.validate()?;
    let mut rng = rng_from_seed(seed);

    let mut geometry = None;
    for _ in 0..MAX_REDRAWS {
        let start = prior.start.sample(&mut rng);
        let angle = prior.angle.sample(&mut rng);
        let dir = (angle.cos(), angle.sin());
        let length = prior.length.sample(&mut rng).min(max_length_inside(start, dir));
        if length >= MIN_SYNTH_LENGTH {
            geometry = Some((start, dir, length));
            break;
        }
    }
    let (start, dir, length) =
        geometry.ok_or_else(|| Error::PriorUnfit("could not draw a swipe that fits on screen".into()))?;

    let mut duration = prior.duration.sample(&mut rng);
    let mut redraws = 0;
    while duration < MIN_SYNTH_DURATION && redraws < MAX_REDRAWS {
        duration = prior.duration.sample(&mut rng);
        redraws += 1;
    }
    let duration = duration.max(MIN_SYNTH_DURATION);
    let n = prior.sample_point_count(&mut rng);

    let points = log_fractions(n, profile)
        .into_iter()
        .enumerate()
        .map(|(i, f)| TouchPoint {
            x: (start.0 + f * length * dir.0).clamp(0.0, 1.0),
            y: (start.1 + f * length * dir.1).clamp(0.0, 1.0),
            t: i as f64 * duration / (n - 1) as f64,
        })
        .collect();
    TouchTrace::new(points)
}

pub fn synth_handcrafted_accel(prior: &HumanSwipePrior, duration_s: f64, seed: u64) -> Result<AccelTrace> {
    prior.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::NonPositiveDuration(duration_s));
    }
    let mut rng = rng_from_seed(seed);
    let count = (duration_s * prior.accel_rate_hz).floor() as usize + 1;
    let samples = (0..count)
        .map(|k| AccelSample {
            ax: prior.accel[0].sample(&mut rng),
            ay: prior.accel[1].sample(&mut rng),
            az: prior.accel[2].sample(&mut rng),
            t: k as f64 / prior.accel_rate_hz,
        })
        .collect();
    AccelTrace::new(samples)
}

/// One complete handcrafted bot sample; the accelerometer trace spans the
/// swipe duration.
pub fn synth_handcrafted_sample(
    prior: &HumanSwipePrior,
    profile: VelocityProfile,
    seed: u64,
) -> Result<SwipeSample> {
    let touch = synth_handcrafted_touch_with(prior, profile, derive_seed(seed, 0))?;
    let accel = synth_handcrafted_accel(prior, touch.duration(), derive_seed(seed, 1))?;
    Ok(SwipeSample {
        touch,
        accel,
        label: Label::HandcraftedBot,
        meta: SampleMeta::synthetic(format!("handcrafted-{seed:016x}")),
    })
}

/// Generates `count` handcrafted samples; sample `i` uses
/// `derive_seed(seed, i)`, so the result does not depend on `exec`.
pub fn generate_handcrafted(
    prior: &HumanSwipePrior,
    count: usize,
    seed: u64,
    profile: VelocityProfile,
    exec: Exec,
) -> Result<Corpus> {
    let samples = exec
        .map_range(count, |i| synth_handcrafted_sample(prior, profile, derive_seed(seed, i as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(samples, format!("handcrafted(seed={seed})")))
}
