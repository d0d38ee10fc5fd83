//! Landmark frames, poses and the pinhole camera.
//!
//! Coordinate conventions: camera and world axes are aligned, `x` right,
//! `y` down, `z` forward (away from the camera). World landmarks are in
//! meters with the origin at the hip midpoint; normalized landmarks are
//! image fractions with `(0, 0)` at the top-left corner.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate 3D joint positions, one per topology joint, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    positions: Vec<Vector3<f64>>,
}

impl Pose {
    pub fn new(positions: Vec<Vector3<f64>>) -> Self {
        Self { positions }
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        debug_assert_eq!(flat.len() % 3, 0);
        Self {
            positions: flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Pose {
        Pose::new(self.positions.iter().map(|p| p + offset).collect())
    }

    pub fn scaled(&self, factor: f64) -> Pose {
        Pose::new(self.positions.iter().map(|p| p * factor).collect())
    }
}

/// One timestamped frame of paired normalized-2D and world-3D landmarks.
///
/// Missing samples are represented by non-finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub timestamp: f64,
    pub normalized: Vec<Vector2<f64>>,
    pub world: Vec<Vector3<f64>>,
    pub visibility: Vec<f64>,
    pub presence: Vec<f64>,
}

impl LandmarkFrame {
    pub fn joint_count(&self) -> usize {
        self.world.len()
    }

    /// Checks per-joint array lengths and score ranges.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.world.len();
        if self.normalized.len() != n || self.visibility.len() != n || self.presence.len() != n {
            return Err(format!(
                "inconsistent joint counts: normalized {}, world {}, visibility {}, presence {}",
                self.normalized.len(),
                n,
                self.visibility.len(),
                self.presence.len()
            ));
        }
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite".into());
        }
        for (name, scores) in [("visibility", &self.visibility), ("presence", &self.presence)] {
            if let Some((j, v)) = scores.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(format!("{name} of joint {j} is {v}, outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn world_pose(&self) -> Pose {
        Pose::new(self.world.clone())
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal_length: f64,
    pub principal_point: (f64, f64),
    pub image_size: (f64, f64),
}

impl CameraModel {
    pub fn new(focal_length: f64, principal_point: (f64, f64), image_size: (f64, f64)) -> Result<Self> {
        let cam = Self {
            focal_length,
            principal_point,
            image_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Principal point at the image center, focal length from the
    /// horizontal field of view.
    pub fn from_fov(width: f64, height: f64, horizontal_fov_deg: f64) -> Result<Self> {
        if !(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0) {
            return Err(Error::Config(format!("field of view {horizontal_fov_deg}° outside (0, 180)")));
        }
        let f = 0.5 * width / (0.5 * horizontal_fov_deg.to_radians()).tan();
        Self::new(f, (0.5 * width, 0.5 * height), (width, height))
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let (cx, cy) = self.principal_point;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::Config(format!("image size {w}x{h} must be positive")));
        }
        if !(self.focal_length > 0.0 && self.focal_length.is_finite()) {
            return Err(Error::Config(format!("focal length {} must be positive", self.focal_length)));
        }
        if !(0.0..=w).contains(&cx) || !(0.0..=h).contains(&cy) {
            return Err(Error::Config(format!("principal point ({cx}, {cy}) outside the {w}x{h} image")));
        }
        Ok(())
    }

    /// Projects a camera-frame point to normalized image coordinates.
    /// `None` for points at or behind the focal plane.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        let (w, h) = self.image_size;
        let (cx, cy) = self.principal_point;
        let px = self.focal_length * p.x / p.z + cx;
        let py = self.focal_length * p.y / p.z + cy;
        Some(Vector2::new(px / w, py / h))
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::from_fov(1280.0, 720.0, 60.0).expect("default intrinsics are valid")
    }
}
