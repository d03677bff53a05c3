//! Run configs for each subcommand. All of them reject unknown keys and are
//! validated before any computation starts.

use std::path::Path;

use nonlocal::causality::RegionTriple;
use nonlocal::nosignal::{deserialize_axis, ScenarioConfig};
use nonlocal::protocol::BlochAxis;
use nonlocal::C64;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn check_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        usage(format!("`{name}` must be finite"))
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
struct Axis(#[serde(deserialize_with = "deserialize_axis")] BlochAxis);

fn axis_pair<'de, D: serde::Deserializer<'de>>(d: D) -> Result<[BlochAxis; 2], D::Error> {
    let [a, b] = <[Axis; 2]>::deserialize(d)?;
    Ok([a.0, b.0])
}

fn default_settings() -> [BlochAxis; 2] {
    [BlochAxis::X, BlochAxis::X]
}

fn default_shots() -> u64 {
    10_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationsConfig {
    pub phi: f64,
    #[serde(default = "default_settings", deserialize_with = "axis_pair")]
    pub settings: [BlochAxis; 2],
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
}

impl CorrelationsConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_finite("phi", self.phi)?;
        if self.shots == 0 {
            return usage("`shots` must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// True phase, or a list of them.
    pub phi: OneOrMany,
    /// Shots per setting pair. Absent means the infinite-shot limit.
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let phis = self.phi.values();
        if phis.is_empty() {
            return usage("`phi` list is empty");
        }
        for p in phis {
            check_finite("phi", p)?;
        }
        if self.shots == Some(0) {
            return usage("`shots` must be at least 1 (omit it for exact estimates)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NosignalConfig {
    pub scenarios: Vec<ScenarioConfig>,
}

impl NosignalConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.scenarios.is_empty() {
            return usage("`scenarios` is empty");
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate().map_err(|e| CliError::Usage(format!("scenario {i}: {e}")))?;
        }
        Ok(())
    }
}

pub type CausalityConfig = RegionTriple;

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum AlphaInput {
    Real(f64),
    Complex([f64; 2]),
}

impl AlphaInput {
    pub fn value(self) -> C64 {
        match self {
            AlphaInput::Real(r) => C64::new(r, 0.0),
            AlphaInput::Complex([re, im]) => C64::new(re, im),
        }
    }
}

fn default_coupling() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationConfig {
    /// Drive amplitudes, each a real number or `[re, im]`.
    pub alphas: Vec<AlphaInput>,
    pub truncation: usize,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// Fixed interaction time for every amplitude.
    #[serde(default)]
    pub t: Option<f64>,
    /// Fixed `|α| g t` for every amplitude instead of a fixed time.
    #[serde(default)]
    pub pulse_area: Option<f64>,
}

impl RotationConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.alphas.is_empty() {
            return usage("`alphas` is empty");
        }
        for a in &self.alphas {
            let v = a.value();
            check_finite("alphas", v.re)?;
            check_finite("alphas", v.im)?;
        }
        if self.truncation < 2 {
            return usage("`truncation` must be at least 2");
        }
        if !(self.coupling > 0.0) || !self.coupling.is_finite() {
            return usage("`coupling` must be positive");
        }
        match (self.t, self.pulse_area) {
            (Some(t), None) => check_finite("t", t),
            (None, Some(area)) => {
                check_finite("pulse_area", area)?;
                if self.alphas.iter().any(|a| a.value().norm() == 0.0) {
                    return usage("`pulse_area` needs non-zero amplitudes; give `t` instead");
                }
                Ok(())
            }
            _ => usage("give exactly one of `t` and `pulse_area`"),
        }
    }

    /// Interaction time for one amplitude.
    pub fn duration(&self, alpha: C64) -> f64 {
        match (self.t, self.pulse_area) {
            (Some(t), _) => t,
            (None, Some(area)) => area / (alpha.norm() * self.coupling),
            _ => unreachable!("validated"),
        }
    }
}
