//! Accuracy metrics against ground truth.
//!
//! Poses are compared after pelvis-origin alignment: both skeletons are
//! translated so their hip midpoints sit at the origin, and the estimate is
//! multiplied by the least-squares scale. No rotation is removed, so
//! absolute orientation errors remain visible. Distances are reported in
//! millimeters and angles in degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Pose;
use crate::geometry::body_angle;
use crate::topology::SkeletonTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Full,
    Xy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// One scale per frame.
    #[default]
    PerFrame,
    /// One scale for the whole sequence.
    PerSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub estimate: Pose,
    pub truth: Pose,
    pub scale: f64,
    /// The estimate had no extent; `scale` was forced to 1.
    pub degenerate: bool,
}

fn both_finite(estimate: &Pose, truth: &Pose) -> Vec<bool> {
    estimate
        .positions()
        .iter()
        .zip(truth.positions())
        .map(|(e, t)| e.iter().chain(t.iter()).all(|v| v.is_finite()))
        .collect()
}

fn centered(topology: &SkeletonTopology, pose: &Pose) -> Pose {
    let hip = topology.hip_midpoint(pose.positions());
    pose.translated(&-hip)
}

fn scale_terms(estimate: &Pose, truth: &Pose) -> (f64, f64) {
    let mask = both_finite(estimate, truth);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((e, t), ok) in estimate.positions().iter().zip(truth.positions()).zip(mask) {
        if ok {
            num += e.dot(t);
            den += e.norm_squared();
        }
    }
    (num, den)
}

fn check_pair(topology: &SkeletonTopology, estimate: &Pose, truth: &Pose) -> Result<()> {
    let n = topology.joint_count();
    if estimate.len() != n || truth.len() != n {
        return Err(Error::Input(format!(
            "poses with {} and {} joints do not match topology `{}`",
            estimate.len(),
            truth.len(),
            topology.name()
        )));
    }
    if !both_finite(estimate, truth).iter().any(|b| *b) {
        return Err(Error::Input("no joint is finite in both poses".into()));
    }
    Ok(())
}

/// Aligns one estimate to one ground-truth pose.
pub fn align(topology: &SkeletonTopology, estimate: &Pose, truth: &Pose) -> Result<AlignedPair> {
    check_pair(topology, estimate, truth)?;
    let e = centered(topology, estimate);
    let t = centered(topology, truth);
    let (num, den) = scale_terms(&e, &t);
    Ok(scaled_pair(e, t, num, den))
}

fn scaled_pair(e: Pose, t: Pose, num: f64, den: f64) -> AlignedPair {
    let degenerate = !(den > 1e-18);
    let scale = if degenerate { 1.0 } else { num / den };
    let (scale, degenerate) = if scale > 0.0 { (scale, degenerate) } else { (1.0, true) };
    AlignedPair {
        estimate: e.scaled(scale),
        truth: t,
        scale,
        degenerate,
    }
}

/// Aligns a whole sequence with a single scale.
pub fn align_sequence(topology: &SkeletonTopology, estimates: &[Pose], truths: &[Pose]) -> Result<Vec<AlignedPair>> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut centered_pairs = Vec::with_capacity(estimates.len());
    for (e, t) in estimates.iter().zip(truths) {
        check_pair(topology, e, t)?;
        let (e, t) = (centered(topology, e), centered(topology, t));
        let (a, b) = scale_terms(&e, &t);
        num += a;
        den += b;
        centered_pairs.push((e, t));
    }
    Ok(centered_pairs
        .into_iter()
        .map(|(e, t)| scaled_pair(e, t, num, den))
        .collect())
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(pair: &AlignedPair, plane: Plane) -> f64 {
    let mask = both_finite(&pair.estimate, &pair.truth);
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((e, t), ok) in pair.estimate.positions().iter().zip(pair.truth.positions()).zip(mask) {
        if !ok {
            continue;
        }
        let d = e - t;
        sum += match plane {
            Plane::Full => d.norm(),
            Plane::Xy => d.x.hypot(d.y),
        };
        n += 1;
    }
    1000.0 * sum / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleStat {
    pub name: String,
    /// Mean absolute error, degrees.
    pub mean_deg: f64,
    /// Population standard deviation of the absolute error, degrees.
    pub std_deg: f64,
    pub frames: usize,
    /// Frames where the angle was degenerate on either pose.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleErrors {
    pub per_angle: Vec<AngleStat>,
    /// Mean of the per-angle means.
    pub mean_deg: f64,
    /// Mean of the per-angle standard deviations.
    pub mean_std_deg: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-body-angle absolute errors over a sequence of pairs.
pub fn angle_error(topology: &SkeletonTopology, pairs: &[AlignedPair]) -> AngleErrors {
    let mut per_angle = Vec::with_capacity(topology.body_angles().len());
    for angle in topology.body_angles() {
        let mut errors = Vec::with_capacity(pairs.len());
        let mut excluded = 0;
        for p in pairs {
            match (
                body_angle(p.estimate.positions(), angle.joints, angle.kind),
                body_angle(p.truth.positions(), angle.joints, angle.kind),
            ) {
                (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => errors.push((a - b).abs().to_degrees()),
                _ => excluded += 1,
            }
        }
        let (mean_deg, std_deg) = mean_std(&errors);
        per_angle.push(AngleStat {
            name: angle.name.clone(),
            mean_deg,
            std_deg,
            frames: errors.len(),
            excluded,
        });
    }
    let valid: Vec<&AngleStat> = per_angle.iter().filter(|s| s.frames > 0).collect();
    let k = valid.len() as f64;
    AngleErrors {
        mean_deg: valid.iter().map(|s| s.mean_deg).sum::<f64>() / k,
        mean_std_deg: valid.iter().map(|s| s.std_deg).sum::<f64>() / k,
        per_angle,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneVariance {
    /// `(limb name, variance in mm²)`.
    pub per_bone: Vec<(String, f64)>,
    pub mean_mm2: f64,
    pub estimator: String,
}

/// Length resolution of the variance computation, millimeters.
pub const LENGTH_RESOLUTION_MM: f64 = 1e-6;

/// Population variance of every limb length across a sequence of poses
/// given in meters.
pub fn bone_variance(topology: &SkeletonTopology, poses: &[Pose]) -> Result<BoneVariance> {
    if poses.len() < 2 {
        return Err(Error::Input(format!("bone variance needs at least 2 frames, got {}", poses.len())));
    }
    let mut per_bone = Vec::with_capacity(topology.limbs().len());
    for (i, limb) in topology.limbs().iter().enumerate() {
        let lengths: Vec<f64> = poses
            .iter()
            .filter_map(|p| topology.limb_vector(p.positions(), i).ok())
            .map(|v| v.norm() * 1000.0)
            .filter(|v| v.is_finite())
            .map(|mm| (mm / LENGTH_RESOLUTION_MM).round() * LENGTH_RESOLUTION_MM)
            .collect();
        let (_, std) = mean_std(&lengths);
        per_bone.push((limb.name.clone(), std * std));
    }
    let valid: Vec<f64> = per_bone.iter().map(|(_, v)| *v).filter(|v| v.is_finite()).collect();
    Ok(BoneVariance {
        mean_mm2: valid.iter().sum::<f64>() / valid.len() as f64,
        per_bone,
        estimator: "population".into(),
    })
}

/// Summary columns: 3D MPJPE, its standard deviation over frames, mean
/// angle error and mean angle standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mpjpe_3d_mm: f64,
    pub mpjpe_3d_std_mm: f64,
    pub angle_error_deg: f64,
    pub angle_std_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub alignment: AlignmentMode,
    pub mpjpe_3d_mm: f64,
    pub mpjpe_3d_std_mm: f64,
    pub mpjpe_xy_mm: f64,
    pub mean_scale: f64,
    pub degenerate_alignments: usize,
    pub angles: AngleErrors,
    pub bone_variance: BoneVariance,
}

impl MetricsReport {
    pub fn summary(&self) -> SummaryRow {
        SummaryRow {
            mpjpe_3d_mm: self.mpjpe_3d_mm,
            mpjpe_3d_std_mm: self.mpjpe_3d_std_mm,
            angle_error_deg: self.angles.mean_deg,
            angle_std_deg: self.angles.mean_std_deg,
        }
    }
}

/// Timestamped pose sequence.
pub type Track = [(f64, Pose)];

/// Pairs estimate and truth frames whose timestamps agree within
/// `tolerance` seconds. Every truth frame is matched at most once.
pub fn match_timestamps<'a>(
    estimates: &'a Track,
    truth: &'a Track,
    tolerance: f64,
) -> Vec<(&'a Pose, &'a Pose)> {
    let mut out = Vec::new();
    let mut j = 0;
    for (t, truth_pose) in truth {
        while j < estimates.len() && estimates[j].0 < t - tolerance {
            j += 1;
        }
        if j < estimates.len() && (estimates[j].0 - t).abs() <= tolerance {
            out.push((&estimates[j].1, truth_pose));
            j += 1;
        }
    }
    out
}

/// Scores a refined (or raw) track against ground truth.
pub fn evaluate_track(
    topology: &SkeletonTopology,
    estimates: &Track,
    truth: &Track,
    alignment: AlignmentMode,
    tolerance: f64,
) -> Result<MetricsReport> {
    let matched = match_timestamps(estimates, truth, tolerance);
    if matched.is_empty() {
        return Err(Error::Input("estimate and truth streams share no timestamps".into()));
    }
    let pairs: Vec<AlignedPair> = match alignment {
        AlignmentMode::PerFrame => matched
            .iter()
            .map(|(e, t)| align(topology, e, t))
            .collect::<Result<_>>()?,
        AlignmentMode::PerSequence => {
            let (e, t): (Vec<Pose>, Vec<Pose>) = matched.iter().map(|(e, t)| ((*e).clone(), (*t).clone())).unzip();
            align_sequence(topology, &e, &t)?
        }
    };
    let errors: Vec<f64> = pairs.iter().map(|p| mpjpe(p, Plane::Full)).collect();
    let (mpjpe_3d_mm, mpjpe_3d_std_mm) = mean_std(&errors);
    let xy = pairs.iter().map(|p| mpjpe(p, Plane::Xy)).sum::<f64>() / pairs.len() as f64;
    let aligned: Vec<Pose> = pairs.iter().map(|p| p.estimate.clone()).collect();
    let bone_variance = if aligned.len() >= 2 {
        bone_variance(topology, &aligned)?
    } else {
        BoneVariance {
            per_bone: Vec::new(),
            mean_mm2: f64::NAN,
            estimator: "population".into(),
        }
    };
    Ok(MetricsReport {
        frames: pairs.len(),
        alignment,
        mpjpe_3d_mm,
        mpjpe_3d_std_mm,
        mpjpe_xy_mm: xy,
        mean_scale: pairs.iter().map(|p| p.scale).sum::<f64>() / pairs.len() as f64,
        degenerate_alignments: pairs.iter().filter(|p| p.degenerate).count(),
        angles: angle_error(topology, &pairs),
        bone_variance,
    })
}

/// Side-by-side summary of several evaluated tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<(String, SummaryRow)>,
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<24} {:>14} {:>14} {:>16} {:>16}\n",
            "stream", "3D MPJPE [mm]", "3D std [mm]", "angle err [deg]", "angle std [deg]"
        );
        for (label, r) in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>14.2} {:>14.2} {:>16.2} {:>16.2}\n",
                label, r.mpjpe_3d_mm, r.mpjpe_3d_std_mm, r.angle_error_deg, r.angle_std_deg
            ));
        }
        out
    }
}
