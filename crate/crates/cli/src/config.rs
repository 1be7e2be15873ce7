//! Experiment files: `[system]`, `[run]` and `[analyses]` sections of
//! `key = value` lines.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fastslow::experiment::{CustomCoefficients, ModelKind, SystemName, SystemParams};
use fastslow::reduction::Anchor;
use fastslow::Scheme;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analyses: AnalysesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<String>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            name: "linear".into(),
            a: None,
            b: None,
            c: None,
            epsilon: None,
            alpha: None,
            beta: None,
            x0: None,
            y0: None,
            gamma: None,
            f1: None,
            f2: None,
            g1: None,
            g2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marcus_substeps: Option<usize>,
    /// `stationary`, `trajectory` or a number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Density,
    Af,
    CfCheck,
    Compare,
}

impl Analysis {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "density" => Self::Density,
            "af" => Self::Af,
            "cf_check" | "cf" => Self::CfCheck,
            "compare" => Self::Compare,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysesSection {
    #[serde(default = "default_enabled")]
    pub enabled: Vec<Analysis>,
    /// Second model for the `compare` analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_with: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Histogram range as `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub af_max_lag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub af_threshold: Option<f64>,
}

fn default_enabled() -> Vec<Analysis> {
    vec![Analysis::Density, Analysis::Af]
}

impl Default for AnalysesSection {
    fn default() -> Self {
        Self {
            enabled: default_enabled(),
            compare_with: None,
            bins: None,
            range: None,
            af_max_lag: None,
            ks_threshold: None,
            af_threshold: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

impl SystemSection {
    pub fn system_name(&self) -> Result<SystemName> {
        match SystemName::parse(&self.name) {
            Some(n) => Ok(n),
            None => bail!(
                "unknown system `{}` (expected linear, nonlinear1, nonlinear2, nonlinear3 or custom)",
                self.name
            ),
        }
    }

    pub fn params(&self) -> Result<SystemParams> {
        let custom = match (&self.f1, &self.f2, &self.g1, &self.g2) {
            (None, None, None, None) => None,
            (Some(f1), Some(f2), Some(g1), Some(g2)) => Some(CustomCoefficients {
                f1: f1.clone(),
                f2: f2.clone(),
                g1: g1.clone(),
                g2: g2.clone(),
            }),
            _ => bail!("a custom system needs all of f1, f2, g1 and g2"),
        };
        Ok(SystemParams {
            a: self.a,
            b: self.b,
            c: self.c,
            epsilon: self.epsilon,
            alpha: self.alpha,
            beta: self.beta,
            x0: self.x0,
            y0: self.y0,
            gamma: self.gamma,
            custom,
        })
    }
}

pub fn parse_model(s: &str) -> Result<ModelKind> {
    ModelKind::parse(s).with_context(|| format!("unknown model `{s}` (expected full, a, l or nplus)"))
}

pub fn parse_scheme(s: &str) -> Result<Scheme> {
    Scheme::parse(s).with_context(|| format!("unknown scheme `{s}`"))
}

pub fn parse_anchor(s: &str) -> Result<Anchor> {
    Ok(match s {
        "stationary" => Anchor::Stationary,
        "trajectory" => Anchor::Trajectory,
        other => Anchor::At(
            other
                .parse()
                .with_context(|| format!("anchor `{other}` is not stationary, trajectory or a number"))?,
        ),
    })
}
