use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::completion::{Axis, ExternalCommand, Method, MirrorPivot};
use crate::curation::CurationConfig;
use crate::explode::{ExplodeConfig, DEFAULT_MARGIN};
use crate::implode::{Granularity, ImplodeConfig, StopMode};
use crate::metrics::{CdConvention, EvalConfig, Normalization, DEFAULT_POINTS};
use crate::render::DEFAULT_SIZE;
use crate::voxel::DEFAULT_RESOLUTION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Identity,
    Closing,
    Mirror,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompleterSpec {
    pub method: MethodName,
    /// Closing radius.
    pub k: u32,
    pub axis: Axis,
    pub pivot: MirrorPivot,
    /// Program followed by its arguments; the exchange directory is appended.
    pub command: Vec<String>,
    pub timeout_s: f64,
}

impl Default for CompleterSpec {
    fn default() -> Self {
        CompleterSpec {
            method: MethodName::Identity,
            k: 1,
            axis: Axis::X,
            pivot: MirrorPivot::Part,
            command: Vec::new(),
            timeout_s: 600.0,
        }
    }
}

impl CompleterSpec {
    pub fn validate(&self, what: &str) -> Result<(), PipelineError> {
        match self.method {
            MethodName::Closing if self.k == 0 => Err(invalid(format!("{what}: closing radius k must be >= 1"))),
            MethodName::External if self.command.is_empty() => {
                Err(invalid(format!("{what}: external method needs a command")))
            }
            MethodName::External if !(self.timeout_s > 0.0) || !self.timeout_s.is_finite() => {
                Err(invalid(format!("{what}: timeout_s must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn method(&self) -> Method {
        match self.method {
            MethodName::Identity => Method::Identity,
            MethodName::Closing => Method::Closing(self.k),
            MethodName::Mirror => Method::Mirror(self.axis, self.pivot),
            MethodName::External => Method::External(ExternalCommand {
                program: PathBuf::from(&self.command[0]),
                args: self.command[1..].to_vec(),
                timeout: Duration::from_secs_f64(self.timeout_s),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplodeSettings {
    pub margin: u32,
    /// World units; absent means one cell.
    pub step: Option<f64>,
    pub max_rounds: Option<usize>,
}

impl Default for ExplodeSettings {
    fn default() -> Self {
        ExplodeSettings { margin: DEFAULT_MARGIN, step: None, max_rounds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImplodeSettings {
    /// World units; absent means one cell.
    pub alpha: Option<f64>,
    pub max_iterations: Option<usize>,
    pub granularity: Granularity,
    pub stop_mode: StopMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub size: u32,
    pub sixteen_bit: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { size: DEFAULT_SIZE, sixteen_bit: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub points: usize,
    pub seed: u64,
    pub cd_convention: CdConvention,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings { points: DEFAULT_POINTS, seed: 7, cd_convention: CdConvention::Mean }
    }
}

/// Full pipeline configuration. Every field has the module default, so an
/// empty TOML document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resolution: u32,
    /// Scale from the unit-cube object frame into the voxel grid, leaving
    /// room for the explosion.
    pub fit: f64,
    pub curation: CurationConfig,
    pub render: RenderSettings,
    pub explode: ExplodeSettings,
    pub implode: ImplodeSettings,
    pub completer: CompleterSpec,
    pub refiner: CompleterSpec,
    pub metrics: MetricSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            resolution: DEFAULT_RESOLUTION,
            fit: 0.5,
            curation: CurationConfig::default(),
            render: RenderSettings::default(),
            explode: ExplodeSettings::default(),
            implode: ImplodeSettings::default(),
            completer: CompleterSpec::default(),
            refiner: CompleterSpec::default(),
            metrics: MetricSettings::default(),
        }
    }
}

fn invalid(msg: String) -> PipelineError {
    PipelineError::Validation(msg)
}

fn positive(name: &str, v: Option<f64>) -> Result<(), PipelineError> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(invalid(format!("{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, PipelineError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every stage precondition that does not depend on the input.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(2..=1024).contains(&self.resolution) {
            return Err(invalid(format!("resolution must be in 2..=1024, got {}", self.resolution)));
        }
        if !(self.fit > 0.0 && self.fit <= 1.0) {
            return Err(invalid(format!("fit must be in (0, 1], got {}", self.fit)));
        }
        self.curation.validate().map_err(|e| invalid(format!("curation: {e}")))?;
        if self.render.size == 0 {
            return Err(invalid("render size must be positive".into()));
        }
        positive("explode step", self.explode.step)?;
        if self.explode.max_rounds == Some(0) {
            return Err(invalid("explode max_rounds must be >= 1".into()));
        }
        positive("implode alpha", self.implode.alpha)?;
        if self.implode.max_iterations == Some(0) {
            return Err(invalid("implode max_iterations must be >= 1".into()));
        }
        self.completer.validate("completer")?;
        self.refiner.validate("refiner")?;
        if self.metrics.points == 0 {
            return Err(invalid("metrics points must be >= 1".into()));
        }
        Ok(())
    }

    pub fn explode_config(&self) -> ExplodeConfig {
        ExplodeConfig { margin: self.explode.margin, step: self.explode.step, max_rounds: self.explode.max_rounds }
    }

    pub fn implode_config(&self) -> ImplodeConfig {
        ImplodeConfig {
            alpha: self.implode.alpha,
            max_iterations: self.implode.max_iterations,
            granularity: self.implode.granularity,
            stop_mode: self.implode.stop_mode,
        }
    }

    /// Evaluation in the grid frame, so no further normalization.
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            points: self.metrics.points,
            seed: self.metrics.seed,
            resolution: self.resolution,
            cd: self.metrics.cd_convention,
            normalization: Normalization::None,
        }
    }
}
