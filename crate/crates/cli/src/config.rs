//! Experiment configuration: a JSON document with a fixed schema.
//!
//! Unknown keys are rejected everywhere. Parameter vectors (`theta0`,
//! `theta1`) use the free-slot layout of their family, i.e. the slot list of
//! the family with the `fixed` slots removed.

use std::collections::BTreeMap;
use std::path::PathBuf;

use otng::densities::{FamilyKind, FamilySpec, SlotRole};
use otng::geodesics::{SegmentRule, SweepSettings, DEFAULT_MAX_SWEEPS, DEFAULT_SEGMENTS, DEFAULT_TOLERANCE};
use otng::grid::{Grid, DEFAULT_POINTS, DEFAULT_RADIUS};
use otng::optimize::{LossKind, Scheme, StoppingRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Geodesic,
    Compare,
    Metric,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fit => "fit",
            Self::Geodesic => "geodesic",
            Self::Compare => "compare",
            Self::Metric => "metric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// `gaussian-mixture`, `gaussian-mixture-logit`, `gamma`, `gaussian` or `laplace`.
    pub kind: String,
    /// Slots held constant, by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
}

impl FamilyConfig {
    pub fn new(kind: FamilyKind) -> Self {
        Self { kind: kind.name().to_string(), fixed: BTreeMap::new() }
    }

    pub fn spec(&self) -> Result<FamilySpec, CliError> {
        let kind = FamilyKind::from_name(&self.kind).ok_or_else(|| {
            let known: Vec<&str> = FamilyKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Config(format!("unknown family `{}` (expected one of {})", self.kind, known.join(", ")))
        })?;
        let mut spec = FamilySpec::new(kind);
        for (name, &value) in &self.fixed {
            let slot = kind
                .slots()
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| CliError::Config(format!("family `{}` has no parameter `{name}`", self.kind)))?;
            spec = spec.with_fixed(slot, value);
        }
        if spec.dim() == 0 {
            return Err(CliError::Config(format!("every parameter of `{}` is fixed", self.kind)));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossConfig {
    #[default]
    HalfW2Squared,
    NegLogLikelihood,
}

impl From<LossConfig> for LossKind {
    fn from(l: LossConfig) -> Self {
        match l {
            LossConfig::HalfW2Squared => LossKind::HalfW2Squared,
            LossConfig::NegLogLikelihood => LossKind::NegLogLikelihood,
        }
    }
}

/// A scheme name, or `{"diag-gd": [p₁, …, p_d]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    Gd,
    DiagGd(Vec<f64>),
    WassersteinGd,
    ModifiedWassersteinGd,
    FisherRaoGd,
}

impl From<&SchemeConfig> for Scheme {
    fn from(s: &SchemeConfig) -> Self {
        match s {
            SchemeConfig::Gd => Scheme::Gd,
            SchemeConfig::DiagGd(p) => Scheme::DiagGd(p.clone()),
            SchemeConfig::WassersteinGd => Scheme::WassersteinGd,
            SchemeConfig::ModifiedWassersteinGd => Scheme::ModifiedWassersteinGd,
            SchemeConfig::FisherRaoGd => Scheme::FisherRaoGd,
        }
    }
}

fn default_schemes() -> Vec<SchemeConfig> {
    vec![SchemeConfig::Gd, SchemeConfig::WassersteinGd, SchemeConfig::FisherRaoGd]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingConfig {
    pub grad_tol: f64,
    pub min_step: f64,
    pub max_iter: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        let d = StoppingRule::default();
        Self { grad_tol: d.grad_tol, min_step: d.min_step, max_iter: d.max_iter }
    }
}

impl StoppingConfig {
    pub fn rule(&self) -> Result<StoppingRule, CliError> {
        let rule = StoppingRule { grad_tol: self.grad_tol, min_step: self.min_step, max_iter: self.max_iter };
        rule.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub radius: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { radius: DEFAULT_RADIUS, points: DEFAULT_POINTS }
    }
}

impl GridConfig {
    pub fn grid(&self, spec: &FamilySpec) -> Result<Grid, CliError> {
        spec.grid(self.radius, self.points).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Uniform sampling boxes, one `[low, high]` pair per free slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentRuleConfig {
    LeftKnot,
    #[default]
    Simpson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicConfig {
    pub segments: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub rule: SegmentRuleConfig,
    /// Number of equally spaced times in `[0, 1]` for the density snapshots.
    pub t_points: usize,
    /// Initial momentum; when present the Hamiltonian flow is integrated as well.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<Vec<f64>>,
    pub shooting_steps: usize,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            segments: DEFAULT_SEGMENTS,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            tol: DEFAULT_TOLERANCE,
            rule: SegmentRuleConfig::Simpson,
            t_points: 11,
            momentum: None,
            shooting_steps: 1000,
        }
    }
}

impl GeodesicConfig {
    pub fn settings(&self) -> SweepSettings {
        SweepSettings {
            segments: self.segments,
            max_sweeps: self.max_sweeps,
            tol: self.tol,
            rule: match self.rule {
                SegmentRuleConfig::LeftKnot => SegmentRule::LeftKnot,
                SegmentRuleConfig::Simpson => SegmentRule::Simpson,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the command given on the command line when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// The parametric model.
    pub family: FamilyConfig,
    /// Data-generating family, when it differs from the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_family: Option<FamilyConfig>,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeConfig>,
    #[serde(default)]
    pub stopping: StoppingConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Sample count; without it `fit` uses the truth density itself as target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Start of a fit, first endpoint of a geodesic, evaluation point of `metric`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    /// Truth of a fit, second endpoint of a geodesic, target of `metric`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<RangesConfig>,
    #[serde(default)]
    pub geodesic: GeodesicConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(family: FamilyConfig) -> Self {
        Self {
            command: None,
            family,
            truth_family: None,
            loss: LossConfig::default(),
            schemes: default_schemes(),
            stopping: StoppingConfig::default(),
            grid: GridConfig::default(),
            samples: None,
            trials: None,
            seed: None,
            theta0: None,
            theta1: None,
            ranges: None,
            geodesic: GeodesicConfig::default(),
            output: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical JSON form, the input of the config hash.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("configs always serialize")
    }

    pub fn truth_spec(&self) -> Result<FamilySpec, CliError> {
        self.truth_family.as_ref().unwrap_or(&self.family).spec()
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        if self.schemes.is_empty() {
            return Err(CliError::Config("at least one scheme is required".into()));
        }
        Ok(self.schemes.iter().map(Scheme::from).collect())
    }
}

/// Checks that `theta` is a point of `spec`.
pub fn point(spec: &FamilySpec, theta: Option<&Vec<f64>>, key: &str) -> Result<Vec<f64>, CliError> {
    let theta = theta.ok_or_else(|| CliError::Config(format!("`{key}` is required")))?;
    spec.at(theta).map_err(|e| CliError::Config(format!("`{key}`: {e}")))?;
    Ok(theta.clone())
}

/// Default sampling boxes of the comparison protocol.
pub fn default_ranges(spec: &FamilySpec) -> Option<Vec<[f64; 2]>> {
    let full: Vec<[f64; 2]> = match spec.kind() {
        FamilyKind::GaussianMixtureLogit => vec![[-2.0, 2.0], [-10.0, 10.0], [1.0, 11.0], [-10.0, 10.0], [1.0, 11.0]],
        FamilyKind::Laplace => vec![[-10.0, 10.0], [1.0, 4.0]],
        _ => return None,
    };
    Some(spec.free_slots().into_iter().map(|i| full[i]).collect())
}

/// Checks a sampling box against the family domain.
pub fn check_ranges(spec: &FamilySpec, ranges: &[[f64; 2]], key: &str) -> Result<(), CliError> {
    if ranges.len() != spec.dim() {
        return Err(CliError::Config(format!("`{key}` needs {} ranges, got {}", spec.dim(), ranges.len())));
    }
    for ((&[lo, hi], role), name) in ranges.iter().zip(spec.free_roles()).zip(spec.free_names()) {
        let ok = lo.is_finite()
            && hi.is_finite()
            && lo <= hi
            && match role {
                SlotRole::Weight => lo >= 0.0 && hi <= 1.0,
                SlotRole::Positive => lo > 0.0,
                SlotRole::Location | SlotRole::Free => true,
            };
        if !ok {
            return Err(CliError::Config(format!("`{key}` range [{lo}, {hi}] for `{name}` is outside the family domain")));
        }
    }
    Ok(())
}
