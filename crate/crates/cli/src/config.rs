//! TOML run configuration. Every section is optional and falls back to the
//! library defaults; command-line flags override individual fields.

use std::path::Path;

use anyhow::Context;
use becaptcha::bundle::FusionMode;
use becaptcha::classify::ClassifierSpec;
use becaptcha::eval::EvalConfig;
use becaptcha::gan::GanConfig;
use becaptcha::surrogate::SurrogateConfig;
use becaptcha::synth::PriorOptions;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: Option<u64>,
    pub surrogate: SurrogateConfig,
    pub prior: PriorOptions,
    pub gan: GanConfig,
    pub classifier: ClassifierSpec,
    pub eval: EvalConfig,
    pub service: ServiceConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub tau: f64,
    pub fusion: FusionMode,
    pub weights: [f64; 2],
    pub addr: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            fusion: FusionMode::FeatureConcat,
            weights: [0.5, 0.5],
            addr: "127.0.0.1:8080".into(),
        }
    }
}

/// Raised for unreadable or invalid configuration; maps to the validation
/// exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }
}
