//! Unit line-of-sight rays from the camera focal point through each
//! landmark's image position.

use nalgebra::{Vector2, Vector3};

use crate::frame::CameraModel;

/// Accepted range of normalized coordinates before clamping.
pub const NORMALIZED_RANGE: (f64, f64) = (-0.5, 1.5);

#[derive(Debug, Clone, PartialEq)]
pub struct LosFrame {
    /// Unit rays in camera coordinates; `z > 0` for every joint.
    pub rays: Vec<Vector3<f64>>,
    /// The normalized input was outside [`NORMALIZED_RANGE`] and clamped.
    pub clamped: Vec<bool>,
    /// The normalized input was non-finite; the ray is the optical axis and
    /// carries no information.
    pub missing: Vec<bool>,
}

impl LosFrame {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Ray direction through a single normalized image position.
pub fn ray(normalized: &Vector2<f64>, camera: &CameraModel) -> Vector3<f64> {
    let (w, h) = camera.image_size;
    let (cx, cy) = camera.principal_point;
    let f = camera.focal_length;
    Vector3::new((normalized.x * w - cx) / f, (normalized.y * h - cy) / f, 1.0).normalize()
}

pub fn build_los(normalized: &[Vector2<f64>], camera: &CameraModel) -> LosFrame {
    let (lo, hi) = NORMALIZED_RANGE;
    let mut rays = Vec::with_capacity(normalized.len());
    let mut clamped = Vec::with_capacity(normalized.len());
    let mut missing = Vec::with_capacity(normalized.len());
    for n in normalized {
        if !(n.x.is_finite() && n.y.is_finite()) {
            rays.push(Vector3::z());
            clamped.push(false);
            missing.push(true);
            continue;
        }
        let c = Vector2::new(n.x.clamp(lo, hi), n.y.clamp(lo, hi));
        clamped.push(c != *n);
        missing.push(false);
        rays.push(ray(&c, camera));
    }
    LosFrame { rays, clamped, missing }
}
