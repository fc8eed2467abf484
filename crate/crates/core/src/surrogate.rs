//! Stand-in human corpus for running the pipeline without recorded data.
//!
//! Swipes follow a bent quadratic path with a minimum-jerk speed profile and
//! small positional jitter, so move efficiency stays strictly above one.
//! Accelerometer traces are AR(1) fluctuations around a tilted gravity
//! vector, which gives them temporal correlation that i.i.d. draws lack.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, rng_from_seed, Exec};
use crate::features::touch_features;
use crate::trace::{AccelSample, AccelTrace, Corpus, Label, SampleMeta, SwipeSample, TouchPoint, TouchTrace, ACCEL_RATE_HZ};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub length: (f64, f64),
    pub duration_s: (f64, f64),
    pub points: (usize, usize),
    /// Control-point offset relative to the chord, sign drawn at random.
    pub bend: (f64, f64),
    pub jitter: f64,
    /// Samples must reach at least this move efficiency.
    pub min_efficiency: f64,
    pub accel_ar: f64,
    pub accel_noise: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            length: (0.15, 0.6),
            duration_s: (0.15, 0.7),
            points: (8, 40),
            bend: (0.08, 0.3),
            jitter: 0.002,
            min_efficiency: 1.001,
            accel_ar: 0.95,
            accel_noise: 0.08,
        }
    }
}

const GRAVITY: f64 = 9.81;

fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

fn surrogate_touch<R: Rng>(cfg: &SurrogateConfig, rng: &mut R) -> Result<TouchTrace> {
    let jitter = Normal::new(0.0, cfg.jitter).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for _ in 0..1000 {
        let len = rng.random_range(cfg.length.0..=cfg.length.1);
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (dx, dy) = (len * angle.cos(), len * angle.sin());
        let x0 = rng.random_range(0.05..0.95);
        let y0 = rng.random_range(0.05..0.95);
        let (x2, y2) = (x0 + dx, y0 + dy);
        if !(0.05..=0.95).contains(&x2) || !(0.05..=0.95).contains(&y2) {
            continue;
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let h = sign * len * rng.random_range(cfg.bend.0..=cfg.bend.1);
        let (cx, cy) = (x0 + dx / 2.0 - h * angle.sin(), y0 + dy / 2.0 + h * angle.cos());
        let n = rng.random_range(cfg.points.0..=cfg.points.1);
        let duration = rng.random_range(cfg.duration_s.0..=cfg.duration_s.1);
        let pts: Vec<TouchPoint> = (0..n)
            .map(|i| {
                let tau = i as f64 / (n - 1) as f64;
                let s = min_jerk(tau);
                let b = |p0: f64, p1: f64, p2: f64| (1.0 - s) * (1.0 - s) * p0 + 2.0 * s * (1.0 - s) * p1 + s * s * p2;
                TouchPoint {
                    x: (b(x0, cx, x2) + jitter.sample(rng)).clamp(0.0, 1.0),
                    y: (b(y0, cy, y2) + jitter.sample(rng)).clamp(0.0, 1.0),
                    t: tau * duration,
                }
            })
            .collect();
        let trace = TouchTrace::new(pts)?;
        if touch_features(&trace).is_ok_and(|f| f.efficiency >= cfg.min_efficiency) {
            return Ok(trace);
        }
    }
    Err(Error::InvalidConfig("surrogate swipe parameters never reach the efficiency floor".into()))
}

fn surrogate_accel<R: Rng>(cfg: &SurrogateConfig, duration: f64, rng: &mut R) -> Result<AccelTrace> {
    let noise = Normal::new(0.0, cfg.accel_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let pitch: f64 = rng.random_range(0.2..1.2);
    let roll: f64 = rng.random_range(-0.3..0.3);
    let base = [
        GRAVITY * roll.sin(),
        GRAVITY * pitch.sin() * roll.cos(),
        GRAVITY * pitch.cos() * roll.cos(),
    ];
    let count = (duration * ACCEL_RATE_HZ).floor() as usize + 1;
    let mut state = [0.0; 3];
    let samples = (0..count)
        .map(|i| {
            for s in state.iter_mut() {
                *s = cfg.accel_ar * *s + noise.sample(rng);
            }
            AccelSample {
                ax: base[0] + state[0],
                ay: base[1] + state[1],
                az: base[2] + state[2],
                t: i as f64 / ACCEL_RATE_HZ,
            }
        })
        .collect();
    AccelTrace::new(samples)
}

pub fn surrogate_sample(cfg: &SurrogateConfig, seed: u64) -> Result<SwipeSample> {
    let mut rng = rng_from_seed(seed);
    let touch = surrogate_touch(cfg, &mut rng)?;
    let accel = surrogate_accel(cfg, touch.duration(), &mut rng)?;
    Ok(SwipeSample {
        touch,
        accel,
        label: Label::Human,
        meta: SampleMeta {
            device_id: "surrogate".into(),
            ..SampleMeta::synthetic(format!("surrogate-{seed:016x}"))
        },
    })
}

/// `count` human-labeled samples; sample `i` uses `derive_seed(seed, i)`.
pub fn surrogate_corpus(cfg: &SurrogateConfig, count: usize, seed: u64, exec: Exec) -> Result<Corpus> {
    let samples = exec
        .map_range(count, |i| surrogate_sample(cfg, derive_seed(seed, i as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(samples, format!("surrogate(seed={seed})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_floor_and_determinism() {
        let cfg = SurrogateConfig::default();
        let a = surrogate_corpus(&cfg, 200, 7, Exec::Parallel).unwrap();
        let b = surrogate_corpus(&cfg, 200, 7, Exec::Sequential).unwrap();
        assert_eq!(a.samples, b.samples);
        for s in &a.samples {
            assert!(touch_features(&s.touch).unwrap().efficiency >= 1.001);
            assert_eq!(s.label, Label::Human);
        }
    }
}
