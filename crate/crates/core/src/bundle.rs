//! Deployable model bundle and the request-level verification path.
//!
//! On disk a bundle is a one-line JSON header carrying the format version,
//! payload length and SHA-256, followed by the JSON payload.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::ClassifierModel;
use crate::error::{Error, Result};
use crate::features::{accel_features, fuse_features, touch_features, FeatureMode, FeatureVector};
use crate::trace::{crop_accel, normalize_touch, Label};

pub const BUNDLE_FORMAT: &str = "becaptcha-bundle";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// One model over the concatenated feature vector.
    #[default]
    FeatureConcat,
    /// Weighted mean of the touch-only and the accelerometer-fused model.
    ScoreMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model_version: String,
    pub fusion: FusionMode,
    pub tau: f64,
    /// Touch-only model, used by `ScoreMean`.
    pub touch: Option<ClassifierModel>,
    /// Model over touch + accelerometer features. `FeatureConcat` may also
    /// hold a touch-only model here.
    pub fused: Option<ClassifierModel>,
    /// `[touch, fused]` weights for `ScoreMean`.
    pub weights: [f64; 2],
}

impl ModelBundle {
    pub fn feature_concat(model: ClassifierModel, model_version: impl Into<String>) -> Self {
        Self {
            format_version: BUNDLE_FORMAT_VERSION,
            model_version: model_version.into(),
            fusion: FusionMode::FeatureConcat,
            tau: 0.5,
            touch: None,
            fused: Some(model),
            weights: [0.5, 0.5],
        }
    }

    pub fn score_mean(touch: ClassifierModel, fused: ClassifierModel, model_version: impl Into<String>) -> Self {
        Self {
            format_version: BUNDLE_FORMAT_VERSION,
            model_version: model_version.into(),
            fusion: FusionMode::ScoreMean,
            tau: 0.5,
            touch: Some(touch),
            fused: Some(fused),
            weights: [0.5, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!("tau {} outside [0, 1]", self.tau)));
        }
        for m in self.touch.iter().chain(&self.fused) {
            m.validate()?;
        }
        match self.fusion {
            FusionMode::FeatureConcat if self.fused.is_none() => {
                Err(Error::InvalidConfig("feature-concat bundle needs a model".into()))
            }
            FusionMode::ScoreMean => {
                let (Some(t), Some(f)) = (&self.touch, &self.fused) else {
                    return Err(Error::InvalidConfig("score-mean bundle needs a touch and a fused model".into()));
                };
                if t.standardizer.mode != FeatureMode::TouchOnly || f.standardizer.mode != FeatureMode::TouchAccel {
                    return Err(Error::InvalidConfig(
                        "score-mean expects a touch-only and a touch+accel model".into(),
                    ));
                }
                if self.weights.iter().any(|w| !(*w >= 0.0)) || self.weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidConfig("fusion weights must be non-negative, not all zero".into()));
                }
                Ok(())
            }
            FusionMode::FeatureConcat => Ok(()),
        }
    }

    fn needs_accel(&self) -> bool {
        match self.fusion {
            FusionMode::ScoreMean => true,
            FusionMode::FeatureConcat => self
                .fused
                .as_ref()
                .is_some_and(|m| m.standardizer.mode == FeatureMode::TouchAccel),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    sha256: String,
    length: usize,
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    bundle.validate()?;
    let payload = serde_json::to_string(bundle)?;
    let header = Header {
        format: BUNDLE_FORMAT.into(),
        format_version: bundle.format_version,
        sha256: hex::encode(Sha256::digest(payload.as_bytes())),
        length: payload.len(),
    };
    let text = format!("{}\n{payload}", serde_json::to_string(&header)?);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_bundle(&bytes)
}

pub fn parse_bundle(bytes: &[u8]) -> Result<ModelBundle> {
    let corrupt = |m: &str| Error::CorruptBundle(m.to_string());
    let split = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| corrupt("missing header"))?;
    let header: Header = serde_json::from_slice(&bytes[..split]).map_err(|_| corrupt("unreadable header"))?;
    if header.format != BUNDLE_FORMAT {
        return Err(corrupt("not a model bundle"));
    }
    if header.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.format_version,
            expected: BUNDLE_FORMAT_VERSION,
        });
    }
    let payload = &bytes[split + 1..];
    if payload.len() != header.length || hex::encode(Sha256::digest(payload)) != header.sha256 {
        return Err(corrupt("checksum mismatch"));
    }
    let bundle: ModelBundle = serde_json::from_slice(payload).map_err(|e| corrupt(&e.to_string()))?;
    bundle.validate()?;
    Ok(bundle)
}

/// Raw request: pixels and milliseconds, as a client records them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub touch: Vec<[f64; 3]>,
    pub screen: [u32; 2],
    #[serde(default)]
    pub accel: Option<Vec<[f64; 4]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Human,
    Bot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub bot_score: f64,
    pub decision: Decision,
    pub tau: f64,
    pub model_version: String,
}

/// Bot iff `score >= tau`.
pub fn decide(score: f64, tau: f64) -> Decision {
    if score >= tau {
        Decision::Bot
    } else {
        Decision::Human
    }
}

/// Weighted mean of two modality scores.
pub fn mean_score(weights: [f64; 2], touch: f64, fused: f64) -> f64 {
    (weights[0] * touch + weights[1] * fused) / (weights[0] + weights[1])
}

/// Featurizes and scores one request. Accelerometer samples are cropped to
/// the swipe window, as at ingestion.
pub fn verify(bundle: &ModelBundle, req: &VerifyRequest) -> Result<VerifyResponse> {
    if req.touch.len() < 2 {
        return Err(Error::MalformedRequest(format!(
            "touch needs at least 2 points, got {}",
            req.touch.len()
        )));
    }
    if req.touch.iter().flatten().chain(req.accel.iter().flatten().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::MalformedRequest("non-finite value".into()));
    }
    let [w, h] = req.screen;
    let touch = normalize_touch(&req.touch, w, h)?;
    let tf = touch_features(&touch)?;
    let accel = if bundle.needs_accel() {
        let raw = req
            .accel
            .as_ref()
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::MalformedRequest("accelerometer samples required".into()))?;
        let (t0, t1) = (req.touch[0][2], req.touch[req.touch.len() - 1][2]);
        Some(accel_features(&crop_accel(raw, t0, t1, 0.0)?)?)
    } else {
        None
    };
    // The label is a placeholder; scoring ignores it.
    let touch_only = fuse_features(&tf, None, Label::Human)?;
    let with_accel: Option<FeatureVector> = accel.as_ref().map(|af| fuse_features(&tf, Some(af), Label::Human)).transpose()?;
    let score_with = |m: &ClassifierModel| match m.standardizer.mode {
        FeatureMode::TouchOnly => m.bot_score(&touch_only),
        FeatureMode::TouchAccel => m.bot_score(with_accel.as_ref().ok_or(Error::EmptyTrace)?),
    };
    let unavailable = || Error::InvalidConfig("bundle has no model for this fusion mode".into());
    let score = match bundle.fusion {
        FusionMode::FeatureConcat => score_with(bundle.fused.as_ref().ok_or_else(unavailable)?)?,
        FusionMode::ScoreMean => {
            let t = score_with(bundle.touch.as_ref().ok_or_else(unavailable)?)?;
            let f = score_with(bundle.fused.as_ref().ok_or_else(unavailable)?)?;
            mean_score(bundle.weights, t, f)
        }
    };
    if !score.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(VerifyResponse {
        bot_score: score,
        decision: decide(score, bundle.tau),
        tau: bundle.tau,
        model_version: bundle.model_version.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_mean_boundary_is_bot() {
        let s = mean_score([0.5, 0.5], 0.9, 0.1);
        assert_eq!(s, 0.5);
        assert_eq!(decide(s, 0.5), Decision::Bot);
    }

    #[test]
    fn threshold_extremes() {
        assert_eq!(decide(0.0, 0.0), Decision::Bot);
        assert_eq!(decide(0.999, 1.0), Decision::Human);
        assert_eq!(decide(1.0, 1.0), Decision::Bot);
    }

    #[test]
    fn decision_flips_at_most_once() {
        let score = 0.37;
        let decisions: Vec<Decision> = (0..=100).map(|i| decide(score, i as f64 / 100.0)).collect();
        let flips = decisions.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(parse_bundle(b"not a bundle"), Err(Error::CorruptBundle(_))));
        assert!(matches!(parse_bundle(b"{\"x\":1}\n{}"), Err(Error::CorruptBundle(_))));
    }
}
