//! Pipeline configuration file.
//!
//! Every block is optional; omitted fields take the documented defaults.
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bones::{BoneEstimatorParams, BoneModel, BoneRatios, TorsoAdjustmentModel};
use crate::cost::{CostWeights, DEFAULT_SUBJECT_DEPTH};
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::frame::CameraModel;
use crate::geometry::ElevationConvention;
use crate::lbfgs::SolverSettings;
use crate::refine::{RefineSettings, ResetPolicy};
use crate::topology::SkeletonTopology;

pub const DEFAULT_FOV_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    /// Name of a built-in topology; ignored when `path` is set.
    pub builtin: String,
    /// TOML topology definition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            builtin: "blazepose12".into(),
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    /// Horizontal field of view. Mutually exclusive with `focal_px`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal_px: Option<f64>,
    /// Defaults to the image center.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub principal_point: Option<[f64; 2]>,
    pub image_width: f64,
    pub image_height: f64,
    /// Assumed distance of the subject's hips from the camera, meters.
    pub subject_depth_m: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fov_deg: None,
            focal_px: None,
            principal_point: None,
            image_width: 1280.0,
            image_height: 720.0,
            subject_depth_m: DEFAULT_SUBJECT_DEPTH,
        }
    }
}

impl CameraConfig {
    pub fn model(&self) -> Result<CameraModel> {
        let (w, h) = (self.image_width, self.image_height);
        let focal = match (self.fov_deg, self.focal_px) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("camera: set either fov_deg or focal_px, not both".into()));
            }
            (_, Some(f)) => f,
            (fov, None) => {
                let fov = fov.unwrap_or(DEFAULT_FOV_DEG);
                if !(fov > 0.0 && fov < 180.0) {
                    return Err(Error::Config(format!("camera.fov_deg = {fov} outside (0, 180)")));
                }
                0.5 * w / (0.5 * fov.to_radians()).tan()
            }
        };
        let [cx, cy] = self.principal_point.unwrap_or([0.5 * w, 0.5 * h]);
        CameraModel::new(focal, (cx, cy), (w, h))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BonesConfig {
    pub initial_ratios: BoneRatios,
    pub elevation_convention: ElevationConvention,
    pub torso: TorsoAdjustmentModel,
}

impl Default for BonesConfig {
    fn default() -> Self {
        Self {
            initial_ratios: BoneRatios::INITIAL,
            elevation_convention: ElevationConvention::default(),
            torso: TorsoAdjustmentModel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// Every run starts from the initial ratios.
    #[default]
    Reset,
    /// Runs start from the ratios saved in the session file.
    Reuse,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatiosConfig {
    pub mode: RatioMode,
    /// Session file read in reuse mode and written after every run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub topology: TopologyConfig,
    pub filter: FilterSpec,
    pub camera: CameraConfig,
    pub weights: CostWeights,
    pub solver: SolverSettings,
    pub estimator: BoneEstimatorParams,
    pub bones: BonesConfig,
    pub ratios: RatiosConfig,
    pub reset: ResetPolicy,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.topology.path.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.ratios.session.as_mut() {
            resolve(p);
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.camera.model()?;
        if !(self.camera.subject_depth_m > 0.0 && self.camera.subject_depth_m.is_finite()) {
            return Err(Error::Config("camera.subject_depth_m must be positive".into()));
        }
        self.weights.validate()?;
        self.solver.validate()?;
        self.estimator.validate()?;
        self.bones.initial_ratios.validate()?;
        self.reset.validate()?;
        if self.topology.path.is_none() && self.topology.builtin != "blazepose12" {
            return Err(Error::Config(format!("unknown built-in topology `{}`", self.topology.builtin)));
        }
        Ok(())
    }

    pub fn load_topology(&self) -> Result<SkeletonTopology> {
        match &self.topology.path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read topology {}: {e}", p.display())))?;
                SkeletonTopology::from_toml_str(&text)
            }
            None => Ok(SkeletonTopology::blazepose12()),
        }
    }

    pub fn refine_settings(&self) -> Result<RefineSettings> {
        Ok(RefineSettings {
            camera: self.camera.model()?,
            subject_depth: self.camera.subject_depth_m,
            filter: self.filter,
            weights: self.weights,
            solver: self.solver,
            bones: self.estimator,
            torso: self.bones.torso.clone(),
            convention: self.bones.elevation_convention,
            reset: self.reset,
        })
    }

    /// Starting bone model: the saved session in reuse mode when one
    /// exists, the initial ratios otherwise.
    pub fn initial_bone_model(&self) -> Result<BoneModel> {
        let fresh = || BoneModel::new(&self.bones.initial_ratios, self.estimator.initial_variance);
        match (self.ratios.mode, &self.ratios.session) {
            (RatioMode::Reuse, Some(path)) if path.exists() => BoneModel::load(path),
            (RatioMode::Reuse, Some(path)) => {
                log::info!("{} not found; starting from the initial ratios", path.display());
                Ok(fresh())
            }
            (RatioMode::Reuse, None) => Err(Error::Config("ratios.mode = \"reuse\" needs ratios.session".into())),
            (RatioMode::Reset, _) => Ok(fresh()),
        }
    }
}
