//! Global swipe features, accelerometer statistics, fusion and
//! standardization.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{AccelTrace, Label, SwipeSample, TouchTrace};

pub const TOUCH_DIM: usize = 6;
pub const ACCEL_DIM: usize = 12;
pub const STD_FLOOR: f64 = 1e-9;

pub const TOUCH_COLUMNS: [&str; TOUCH_DIM] = ["D", "L", "P", "alpha", "V", "E"];
pub const ACCEL_COLUMNS: [&str; ACCEL_DIM] = [
    "mean_x", "median_x", "rms_x", "std_x", "mean_y", "median_y", "rms_y", "std_y", "mean_z",
    "median_z", "rms_z", "std_z",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchFeatures {
    /// Seconds from first to last point.
    pub duration: f64,
    /// Straight-line distance from first to last point.
    pub distance: f64,
    /// Path length, the sum of segment lengths.
    pub displacement: f64,
    /// Direction of the first-to-last vector, in (-pi, pi].
    pub angle: f64,
    /// Mean of the per-segment speeds.
    pub mean_velocity: f64,
    /// `displacement / distance`.
    pub efficiency: f64,
}

impl TouchFeatures {
    pub fn to_array(&self) -> [f64; TOUCH_DIM] {
        [
            self.duration,
            self.distance,
            self.displacement,
            self.angle,
            self.mean_velocity,
            self.efficiency,
        ]
    }
}

/// What to do when a swipe ends where it started.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDistancePolicy {
    #[default]
    Reject,
    Sentinel(f64),
}

pub fn touch_features(trace: &TouchTrace) -> Result<TouchFeatures> {
    touch_features_with(trace, ZeroDistancePolicy::Reject)
}

pub fn touch_features_with(trace: &TouchTrace, policy: ZeroDistancePolicy) -> Result<TouchFeatures> {
    let pts = trace.points();
    if pts.len() < 2 {
        return Err(Error::DegenerateTrace("fewer than 2 points".into()));
    }
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    let (mut path, mut speed_sum) = (0.0, 0.0);
    for w in pts.windows(2) {
        let seg = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            return Err(Error::DegenerateTrace("non-increasing timestamps".into()));
        }
        path += seg;
        speed_sum += seg / dt;
    }
    let (dx, dy) = (last.x - first.x, last.y - first.y);
    let distance = dx.hypot(dy);
    let efficiency = if distance > 0.0 {
        path / distance
    } else {
        match policy {
            ZeroDistancePolicy::Reject => return Err(Error::ZeroDistance),
            ZeroDistancePolicy::Sentinel(v) => v,
        }
    };
    Ok(TouchFeatures {
        duration: last.t - first.t,
        distance,
        displacement: path,
        angle: dy.atan2(dx),
        mean_velocity: speed_sum / (pts.len() - 1) as f64,
        efficiency,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: f64,
    pub median: f64,
    pub rms: f64,
    pub std: f64,
}

impl AxisStats {
    /// Population statistics of a non-empty slice.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Ok(Self {
            mean,
            median,
            rms: mean_sq.sqrt(),
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelFeatures {
    pub axes: [AxisStats; 3],
}

impl AccelFeatures {
    /// Values in column order: mean, median, rms, std for x, then y, then z.
    pub fn to_array(&self) -> [f64; ACCEL_DIM] {
        let mut out = [0.0; ACCEL_DIM];
        for (a, s) in self.axes.iter().enumerate() {
            out[4 * a..4 * a + 4].copy_from_slice(&[s.mean, s.median, s.rms, s.std]);
        }
        out
    }
}

pub fn accel_features(trace: &AccelTrace) -> Result<AccelFeatures> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let axis = |i: usize| -> Result<AxisStats> {
        let vals: Vec<f64> = trace.samples().iter().map(|s| s.axis(i)).collect();
        AxisStats::of(&vals)
    };
    Ok(AccelFeatures {
        axes: [axis(0)?, axis(1)?, axis(2)?],
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    TouchOnly,
    TouchAccel,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::TouchOnly => TOUCH_DIM,
            FeatureMode::TouchAccel => TOUCH_DIM + ACCEL_DIM,
        }
    }

    pub fn columns(self) -> Vec<&'static str> {
        let mut cols = TOUCH_COLUMNS.to_vec();
        if self == FeatureMode::TouchAccel {
            cols.extend(ACCEL_COLUMNS);
        }
        cols
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::TouchOnly => "touch",
            FeatureMode::TouchAccel => "touch+accel",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub values: Vec<f64>,
    pub label: Label,
}

impl FeatureVector {
    pub fn new(mode: FeatureMode, values: Vec<f64>, label: Label) -> Result<Self> {
        if values.len() != mode.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{mode} vector needs {} values, got {}",
                mode.dim(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(i));
        }
        Ok(Self { mode, values, label })
    }
}

pub fn fuse_features(tf: &TouchFeatures, af: Option<&AccelFeatures>, label: Label) -> Result<FeatureVector> {
    let mut values = tf.to_array().to_vec();
    let mode = match af {
        Some(af) => {
            values.extend(af.to_array());
            FeatureMode::TouchAccel
        }
        None => FeatureMode::TouchOnly,
    };
    FeatureVector::new(mode, values, label)
}

/// Full extraction for one sample.
pub fn sample_features(sample: &SwipeSample, mode: FeatureMode) -> Result<FeatureVector> {
    let tf = touch_features(&sample.touch)?;
    match mode {
        FeatureMode::TouchOnly => fuse_features(&tf, None, sample.label),
        FeatureMode::TouchAccel => {
            let af = accel_features(&sample.accel)?;
            fuse_features(&tf, Some(&af), sample.label)
        }
    }
}

/// Per-dimension z-scoring fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mode: FeatureMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &[FeatureVector]) -> Result<Self> {
        let first = train.first().ok_or(Error::EmptyTrainingSet)?;
        let mode = first.mode;
        let dim = mode.dim();
        if let Some(v) = train.iter().find(|v| v.mode != mode) {
            return Err(Error::ModeMismatch {
                expected: mode.to_string(),
                actual: v.mode.to_string(),
            });
        }
        let n = train.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in train {
            for (m, x) in mean.iter_mut().zip(&v.values) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for v in train {
            for ((s, x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mode, mean, std })
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        Ok(FeatureVector {
            mode: v.mode,
            values: self.transform(v)?,
            label: v.label,
        })
    }

    /// Standardized values of `v`.
    pub fn transform(&self, v: &FeatureVector) -> Result<Vec<f64>> {
        if v.mode != self.mode {
            return Err(Error::ModeMismatch {
                expected: self.mode.to_string(),
                actual: v.mode.to_string(),
            });
        }
        Ok(v.values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

pub fn fit_standardizer(train: &[FeatureVector]) -> Result<Standardizer> {
    Standardizer::fit(train)
}

pub fn apply_standardizer(s: &Standardizer, v: &FeatureVector) -> Result<FeatureVector> {
    s.apply(v)
}

/// Writes vectors as CSV: feature columns in fixed order, then `label`.
pub fn write_features_csv<W: Write>(out: W, vectors: &[FeatureVector]) -> Result<()> {
    let mode = vectors.first().map(|v| v.mode).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    let mut header = mode.columns();
    header.push("label");
    w.write_record(&header)?;
    for v in vectors {
        if v.mode != mode {
            return Err(Error::ModeMismatch {
                expected: mode.to_string(),
                actual: v.mode.to_string(),
            });
        }
        let mut rec: Vec<String> = v.values.iter().map(|x| x.to_string()).collect();
        rec.push(v.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
