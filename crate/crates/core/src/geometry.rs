//! Geometric primitives on limb vectors.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Pose;
use crate::topology::{Side, SkeletonTopology};

/// Vectors shorter than this are treated as zero-length.
pub const DEGENERATE_LENGTH: f64 = 1e-12;

/// `y·z / (‖y‖‖z‖)`.
pub fn normalized_scalar_product(y: &Vector3<f64>, z: &Vector3<f64>) -> Result<f64> {
    let (ny, nz) = (y.norm(), z.norm());
    if ny < DEGENERATE_LENGTH || nz < DEGENERATE_LENGTH {
        return Err(Error::DegenerateLimb(format!("zero-length vector in scalar product ({ny:e}, {nz:e})")));
    }
    Ok((y.dot(z) / (ny * nz)).clamp(-1.0, 1.0))
}

/// Angle between two vectors in `[0, π]`.
pub fn angle_between(y: &Vector3<f64>, z: &Vector3<f64>) -> Result<f64> {
    normalized_scalar_product(y, z).map(f64::acos)
}

/// Normalized scalar product together with its partial derivatives with
/// respect to both arguments. `None` for degenerate input.
pub(crate) fn xi_with_grad(y: &Vector3<f64>, z: &Vector3<f64>) -> Option<(f64, Vector3<f64>, Vector3<f64>)> {
    let (ny, nz) = (y.norm(), z.norm());
    if ny < DEGENERATE_LENGTH || nz < DEGENERATE_LENGTH {
        return None;
    }
    let (yh, zh) = (y / ny, z / nz);
    let xi = yh.dot(&zh);
    let dy = (zh - yh * xi) / ny;
    let dz = (yh - zh * xi) / nz;
    Some((xi.clamp(-1.0, 1.0), dy, dz))
}

/// Angle between two vectors with derivatives. At exactly parallel or
/// antiparallel input the angle is not differentiable; the zero subgradient
/// is returned there.
pub(crate) fn angle_with_grad(y: &Vector3<f64>, z: &Vector3<f64>) -> Option<(f64, Vector3<f64>, Vector3<f64>)> {
    let (xi, dy, dz) = xi_with_grad(y, z)?;
    let angle = xi.acos();
    let s2 = 1.0 - xi * xi;
    if s2 <= 1e-24 {
        return Some((angle, Vector3::zeros(), Vector3::zeros()));
    }
    let k = -1.0 / s2.sqrt();
    Some((angle, dy * k, dz * k))
}

/// Angle between limbs `i` and `j` of a pose.
pub fn inter_limb_angle(topology: &SkeletonTopology, pose: &Pose, limb_i: usize, limb_j: usize) -> Result<f64> {
    let ki = topology.limb_vector(pose.positions(), limb_i)?;
    let kj = topology.limb_vector(pose.positions(), limb_j)?;
    angle_between(&ki, &kj).map_err(|_| {
        Error::DegenerateLimb(format!(
            "{} / {}",
            topology.limbs()[limb_i].name,
            topology.limbs()[limb_j].name
        ))
    })
}

/// Reference axis for the humerothoracic elevation angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElevationConvention {
    /// Humerus against the ipsilateral shoulder→hip trunk axis.
    #[default]
    TrunkAxis,
    /// Humerus against the image-down direction `(0, 1, 0)`.
    Vertical,
}

impl ElevationConvention {
    /// The two vectors whose angle is the elevation: `(humerus, reference)`.
    pub(crate) fn vectors(
        self,
        topology: &SkeletonTopology,
        positions: &[Vector3<f64>],
        side: Side,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let a = topology.anchors();
        let shoulder = positions[a.shoulder(side)];
        let humerus = positions[a.elbow(side)] - shoulder;
        let reference = match self {
            ElevationConvention::TrunkAxis => positions[a.hip(side)] - shoulder,
            ElevationConvention::Vertical => Vector3::new(0.0, 1.0, 0.0),
        };
        (humerus, reference)
    }
}

/// Elevation of the upper arm: 0 with the arm hanging along the trunk, π/2
/// horizontal, π fully overhead.
pub fn humerothoracic_elevation(
    topology: &SkeletonTopology,
    pose: &Pose,
    side: Side,
    convention: ElevationConvention,
) -> Result<f64> {
    let (humerus, reference) = convention.vectors(topology, pose.positions(), side);
    angle_between(&humerus, &reference)
        .map_err(|_| Error::DegenerateLimb(format!("{side:?} humerus or trunk axis")))
}

/// Value of a body angle definition on a set of joint positions, radians.
pub fn body_angle(positions: &[Vector3<f64>], joints: [usize; 3], kind: crate::topology::AngleKind) -> Result<f64> {
    let [a, v, c] = joints;
    let interior = angle_between(&(positions[a] - positions[v]), &(positions[c] - positions[v]))?;
    Ok(match kind {
        crate::topology::AngleKind::Flexion => std::f64::consts::PI - interior,
        crate::topology::AngleKind::Interior => interior,
    })
}
