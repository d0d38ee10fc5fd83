//! Synthetic ground truth and pose-estimator-like noise.
//!
//! A subject is a rigid kinematic skeleton built from bone ratios and a
//! total fixed-bone length. Motions are keyframed joint angles; between
//! keyframes every limb direction (and the trunk orientation) is slerped, so
//! limb lengths stay exactly constant. The skeleton is placed in front of a
//! pinhole camera, projected to normalized coordinates and re-expressed as
//! hip-centered world landmarks. Noise is then layered on both channels from
//! a seeded ChaCha8 generator.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bones::BoneRatios;
use crate::error::{Error, Result};
use crate::frame::{CameraModel, LandmarkFrame};
use crate::topology::SkeletonTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Squat,
    Abduction,
    BridgeAnalog,
    Static,
    Custom,
}

/// Point of the skeleton held still while the body moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Ankles,
    Hips,
    Shoulders,
}

/// Joint angles of one keyframe, degrees. Elevations are measured from the
/// hanging position; a plane of 0° is the frontal (abduction) plane and 90°
/// the sagittal (forward) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseAngles {
    /// Forward lean of the torso about the hip axis.
    pub trunk_pitch: f64,
    /// Sideways bend of the torso, positive toward the subject's left.
    pub trunk_roll: f64,
    /// `[left, right]`
    pub shoulder_elevation: [f64; 2],
    pub shoulder_plane: [f64; 2],
    pub elbow_flexion: [f64; 2],
    pub hip_elevation: [f64; 2],
    pub hip_plane: [f64; 2],
    pub knee_flexion: [f64; 2],
}

impl Default for PoseAngles {
    fn default() -> Self {
        Self {
            trunk_pitch: 0.0,
            trunk_roll: 0.0,
            shoulder_elevation: [12.0, 12.0],
            shoulder_plane: [20.0, 20.0],
            elbow_flexion: [15.0, 15.0],
            hip_elevation: [3.0, 3.0],
            hip_plane: [0.0, 0.0],
            knee_flexion: [4.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub time_s: f64,
    #[serde(default)]
    pub pose: PoseAngles,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubjectSpec {
    /// Summed length of the nine rigid bones, meters.
    pub fixed_length_m: f64,
    /// Segment ratios. `lateral_trunk` is ignored: it follows from pelvis,
    /// shoulder width and spine.
    pub ratios: BoneRatios,
    /// Rotation about the vertical axis; 0 faces the camera.
    pub yaw_deg: f64,
    /// Distance of the initial hip midpoint from the camera, meters.
    pub depth_m: f64,
    /// Initial hip midpoint offset in the image plane, meters.
    pub offset_m: [f64; 2],
}

impl Default for SubjectSpec {
    fn default() -> Self {
        Self {
            fixed_length_m: 3.0,
            ratios: reference_subject_ratios(),
            yaw_deg: 0.0,
            depth_m: 3.5,
            offset_m: [0.0, 0.0],
        }
    }
}

/// Ratios of a typical adult after refinement on real footage, rescaled so
/// the rigid bones sum to one.
pub fn reference_subject_ratios() -> BoneRatios {
    let raw = BoneRatios {
        ulna: 0.0932,
        humerus: 0.0976,
        femur: 0.1430,
        tibia: 0.1389,
        pelvis: 0.0690,
        shoulder_width: 0.1100,
        spine: 0.1647,
        lateral_trunk: 0.1669,
    };
    let s = raw.rigid_sum();
    let mut r = raw;
    for k in crate::bones::RatioKind::ALL {
        r.set(k, raw.get(k) / s);
    }
    r.lateral_trunk = derived_lateral_trunk(&r);
    r
}

fn derived_lateral_trunk(r: &BoneRatios) -> f64 {
    (r.spine.powi(2) + (0.5 * (r.shoulder_width - r.pelvis)).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionWindow {
    pub joint: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// White noise on normalized coordinates, pixels.
    pub normalized_sigma_px: f64,
    /// White noise on world coordinates, meters.
    pub world_white_sigma_m: f64,
    /// Slowly varying per-joint world offsets, meters per axis.
    pub world_smooth_sigma_m: [f64; 3],
    /// Frame-to-frame correlation of the smooth offsets.
    pub world_smooth_correlation: f64,
    /// Slowly varying global rotation error, degrees.
    pub rotation_sigma_deg: f64,
    pub rotation_correlation: f64,
    /// Relative standard deviation of a slowly varying global scale.
    pub scale_sigma: f64,
    pub scale_correlation: f64,
    pub visibility_base: f64,
    pub visibility_jitter: f64,
    pub occlusions: Vec<OcclusionWindow>,
    /// Additional occlusion windows placed at random on distal joints.
    pub random_occlusions: usize,
    pub occlusion_visibility: f64,
    /// Noise multiplier for occluded joints.
    pub occlusion_noise_gain: f64,
    /// Probability that a joint sample is missing entirely.
    pub dropout_probability: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl NoiseSpec {
    /// No noise, full visibility.
    pub fn none() -> Self {
        Self {
            normalized_sigma_px: 0.0,
            world_white_sigma_m: 0.0,
            world_smooth_sigma_m: [0.0; 3],
            world_smooth_correlation: 0.0,
            rotation_sigma_deg: 0.0,
            rotation_correlation: 0.0,
            scale_sigma: 0.0,
            scale_correlation: 0.0,
            visibility_base: 1.0,
            visibility_jitter: 0.0,
            occlusions: Vec::new(),
            random_occlusions: 0,
            occlusion_visibility: 1.0,
            occlusion_noise_gain: 1.0,
            dropout_probability: 0.0,
        }
    }

    /// Levels giving raw world landmarks roughly 100 mm MPJPE and 12° mean
    /// angle error on the benchmark motions.
    pub fn calibrated() -> Self {
        Self {
            normalized_sigma_px: 3.0,
            world_white_sigma_m: 0.010,
            world_smooth_sigma_m: [0.030, 0.030, 0.050],
            world_smooth_correlation: 0.90,
            rotation_sigma_deg: 7.0,
            rotation_correlation: 0.97,
            scale_sigma: 0.03,
            scale_correlation: 0.98,
            visibility_base: 0.95,
            visibility_jitter: 0.04,
            occlusions: Vec::new(),
            random_occlusions: 2,
            occlusion_visibility: 0.35,
            occlusion_noise_gain: 1.8,
            dropout_probability: 0.0,
        }
    }

    fn world_is_exact(&self) -> bool {
        self.world_white_sigma_m == 0.0
            && self.world_smooth_sigma_m.iter().all(|s| *s == 0.0)
            && self.rotation_sigma_deg == 0.0
            && self.scale_sigma == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            self.normalized_sigma_px,
            self.world_white_sigma_m,
            self.world_smooth_sigma_m[0],
            self.world_smooth_sigma_m[1],
            self.world_smooth_sigma_m[2],
            self.rotation_sigma_deg,
            self.scale_sigma,
            self.visibility_jitter,
            self.occlusion_noise_gain,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Script("noise levels must be non-negative".into()));
        }
        for (name, v) in [
            ("world_smooth_correlation", self.world_smooth_correlation),
            ("rotation_correlation", self.rotation_correlation),
            ("scale_correlation", self.scale_correlation),
            ("visibility_base", self.visibility_base),
            ("occlusion_visibility", self.occlusion_visibility),
            ("dropout_probability", self.dropout_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Script(format!("noise.{name} = {v} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionScript {
    pub motion: MotionKind,
    pub duration_s: f64,
    pub frame_rate_hz: f64,
    /// Repetitions of the built-in motions over the duration.
    pub cycles: f64,
    /// Defaults to the ankles, or the shoulders for the bridge.
    pub anchor: Option<Anchor>,
    pub subject: SubjectSpec,
    pub noise: NoiseSpec,
    /// Keyframes of a custom motion, in time order.
    pub keyframes: Vec<Keyframe>,
}

impl Default for MotionScript {
    fn default() -> Self {
        Self {
            motion: MotionKind::Squat,
            duration_s: 10.0,
            frame_rate_hz: 30.0,
            cycles: 2.0,
            anchor: None,
            subject: SubjectSpec::default(),
            noise: NoiseSpec::default(),
            keyframes: Vec::new(),
        }
    }
}

impl MotionScript {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return Err(Error::Script("frame_rate_hz must be positive".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Script("duration_s must be positive".into()));
        }
        if !(self.cycles > 0.0) {
            return Err(Error::Script("cycles must be positive".into()));
        }
        if !(self.subject.fixed_length_m > 0.0) || !(self.subject.depth_m > 0.0) {
            return Err(Error::Script("subject lengths and depth must be positive".into()));
        }
        self.subject
            .ratios
            .validate()
            .map_err(|e| Error::Script(e.to_string()))?;
        self.noise.validate()?;
        if self.motion == MotionKind::Custom {
            if self.keyframes.is_empty() {
                return Err(Error::Script("custom motion needs at least one keyframe".into()));
            }
            if self.keyframes.windows(2).any(|w| !(w[1].time_s > w[0].time_s)) {
                return Err(Error::Script("keyframe times must increase".into()));
            }
        }
        for w in &self.noise.occlusions {
            if w.joint >= 12 {
                return Err(Error::Script(format!("occlusion joint {} out of range", w.joint)));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate_hz).round() as usize
    }

    fn anchor(&self) -> Anchor {
        self.anchor.unwrap_or(match self.motion {
            MotionKind::BridgeAnalog => Anchor::Shoulders,
            _ => Anchor::Ankles,
        })
    }

    /// Rest and peak poses of the built-in motions.
    fn extremes(&self) -> (PoseAngles, PoseAngles) {
        let rest = PoseAngles::default();
        match self.motion {
            MotionKind::Static | MotionKind::Custom => (rest, rest),
            MotionKind::Squat => (
                rest,
                PoseAngles {
                    trunk_pitch: 35.0,
                    shoulder_elevation: [75.0, 75.0],
                    shoulder_plane: [85.0, 85.0],
                    elbow_flexion: [10.0, 10.0],
                    hip_elevation: [95.0, 95.0],
                    hip_plane: [80.0, 80.0],
                    knee_flexion: [105.0, 105.0],
                    ..rest
                },
            ),
            MotionKind::Abduction => (
                PoseAngles {
                    shoulder_elevation: [15.0, 15.0],
                    shoulder_plane: [5.0, 5.0],
                    elbow_flexion: [5.0, 5.0],
                    ..rest
                },
                PoseAngles {
                    trunk_roll: 4.0,
                    shoulder_elevation: [150.0, 135.0],
                    shoulder_plane: [10.0, 10.0],
                    elbow_flexion: [10.0, 20.0],
                    ..rest
                },
            ),
            MotionKind::BridgeAnalog => {
                let base = PoseAngles {
                    shoulder_elevation: [8.0, 8.0],
                    shoulder_plane: [0.0, 0.0],
                    elbow_flexion: [5.0, 5.0],
                    hip_elevation: [60.0, 60.0],
                    hip_plane: [85.0, 85.0],
                    knee_flexion: [110.0, 110.0],
                    ..rest
                };
                (
                    base,
                    PoseAngles {
                        trunk_pitch: -28.0,
                        hip_elevation: [25.0, 25.0],
                        knee_flexion: [85.0, 85.0],
                        ..base
                    },
                )
            }
        }
    }
}

/// World orientation of the subject before yaw.
fn root_orientation(motion: MotionKind) -> Matrix3<f64> {
    match motion {
        // Lying on the back, head toward −x, chest facing up (−y).
        MotionKind::BridgeAnalog => Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0),
        _ => Matrix3::identity(),
    }
}

// ---------------------------------------------------------------------------
// Kinematics
// ---------------------------------------------------------------------------

/// Limb directions of one pose in the subject's root frame.
#[derive(Debug, Clone, Copy)]
struct Directions {
    trunk: UnitQuaternion<f64>,
    humerus: [Unit<Vector3<f64>>; 2],
    ulna: [Unit<Vector3<f64>>; 2],
    femur: [Unit<Vector3<f64>>; 2],
    tibia: [Unit<Vector3<f64>>; 2],
}

const SIDE_SIGN: [f64; 2] = [1.0, -1.0];

/// Unit direction at elevation `e` (from straight down) in plane `p`, and
/// the unit tangent of increasing elevation.
fn spherical(e: f64, p: f64, sign: f64) -> (Vector3<f64>, Vector3<f64>) {
    let d = Vector3::new(sign * e.sin() * p.cos(), e.cos(), -e.sin() * p.sin());
    let t = Vector3::new(sign * e.cos() * p.cos(), -e.sin(), -e.cos() * p.sin());
    (d, t)
}

fn directions(a: &PoseAngles) -> Directions {
    let rad = f64::to_radians;
    // x = subject's left, y = down, z = behind the subject.
    let trunk = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rad(a.trunk_roll))
        * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), rad(a.trunk_pitch));
    let forward = trunk * Vector3::new(0.0, 0.0, -1.0);
    let mut humerus = [Vector3::x_axis(); 2];
    let mut ulna = humerus;
    let mut femur = humerus;
    let mut tibia = humerus;
    for i in 0..2 {
        let s = SIDE_SIGN[i];
        let (d, t) = spherical(rad(a.shoulder_elevation[i]), rad(a.shoulder_plane[i]), s);
        let (d, t) = (trunk * d, trunk * t);
        humerus[i] = Unit::new_normalize(d);
        let perp = forward - d * forward.dot(&d);
        let bend = if perp.norm() > 1e-3 { perp.normalize() } else { t };
        let th = rad(a.elbow_flexion[i]);
        ulna[i] = Unit::new_normalize(d * th.cos() + bend * th.sin());

        let (d, t) = spherical(rad(a.hip_elevation[i]), rad(a.hip_plane[i]), s);
        femur[i] = Unit::new_normalize(d);
        let th = rad(a.knee_flexion[i]);
        tibia[i] = Unit::new_normalize(d * th.cos() - t * th.sin());
    }
    Directions {
        trunk,
        humerus,
        ulna,
        femur,
        tibia,
    }
}

fn slerp_dir(a: &Unit<Vector3<f64>>, b: &Unit<Vector3<f64>>, s: f64) -> Unit<Vector3<f64>> {
    a.try_slerp(b, s, 1e-12).unwrap_or(if s < 0.5 { *a } else { *b })
}

fn interpolate(a: &Directions, b: &Directions, s: f64) -> Directions {
    let pair = |x: &[Unit<Vector3<f64>>; 2], y: &[Unit<Vector3<f64>>; 2]| [slerp_dir(&x[0], &y[0], s), slerp_dir(&x[1], &y[1], s)];
    Directions {
        trunk: a.trunk.try_slerp(&b.trunk, s, 1e-12).unwrap_or(a.trunk),
        humerus: pair(&a.humerus, &b.humerus),
        ulna: pair(&a.ulna, &b.ulna),
        femur: pair(&a.femur, &b.femur),
        tibia: pair(&a.tibia, &b.tibia),
    }
}

/// Absolute segment lengths of a subject, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lengths {
    ulna: f64,
    humerus: f64,
    femur: f64,
    tibia: f64,
    pelvis: f64,
    shoulder_width: f64,
    spine: f64,
}

impl Lengths {
    fn new(subject: &SubjectSpec) -> Self {
        let r = &subject.ratios;
        let s = subject.fixed_length_m / r.rigid_sum();
        Self {
            ulna: r.ulna * s,
            humerus: r.humerus * s,
            femur: r.femur * s,
            tibia: r.tibia * s,
            pelvis: r.pelvis * s,
            shoulder_width: r.shoulder_width * s,
            spine: r.spine * s,
        }
    }
}

/// Joint positions in the blazepose12 order with the hip midpoint at the
/// origin.
fn assemble(d: &Directions, l: &Lengths) -> [Vector3<f64>; 12] {
    let mut p = [Vector3::zeros(); 12];
    let shoulder_mid = d.trunk * Vector3::new(0.0, -l.spine, 0.0);
    for i in 0..2 {
        let s = SIDE_SIGN[i];
        let hip = d.trunk * Vector3::new(s * 0.5 * l.pelvis, 0.0, 0.0);
        let shoulder = shoulder_mid + d.trunk * Vector3::new(s * 0.5 * l.shoulder_width, 0.0, 0.0);
        let elbow = shoulder + d.humerus[i].into_inner() * l.humerus;
        let wrist = elbow + d.ulna[i].into_inner() * l.ulna;
        let knee = hip + d.femur[i].into_inner() * l.femur;
        let ankle = knee + d.tibia[i].into_inner() * l.tibia;
        // left_shoulder, right_shoulder, left_elbow, ... in pairs
        p[i] = shoulder;
        p[2 + i] = elbow;
        p[4 + i] = wrist;
        p[6 + i] = hip;
        p[8 + i] = knee;
        p[10 + i] = ankle;
    }
    p
}

fn anchor_point(p: &[Vector3<f64>; 12], anchor: Anchor) -> Vector3<f64> {
    let (a, b) = match anchor {
        Anchor::Ankles => (10, 11),
        Anchor::Hips => (6, 7),
        Anchor::Shoulders => (0, 1),
    };
    (p[a] + p[b]) * 0.5
}

fn smooth_phase(t: f64, duration: f64, cycles: f64) -> f64 {
    0.5 - 0.5 * (2.0 * PI * cycles * t / duration).cos()
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    /// Exact landmarks: projected normalized coordinates, hip-centered world
    /// coordinates, full visibility.
    pub truth: Vec<LandmarkFrame>,
    /// Landmarks with estimator-like noise.
    pub noisy: Vec<LandmarkFrame>,
    /// Ground-truth joint positions in camera coordinates.
    pub camera_frame: Vec<Vec<Vector3<f64>>>,
    pub seed: u64,
    /// Subject ratios, including the derived lateral trunk ratio.
    pub ratios: BoneRatios,
}

/// Ground-truth camera-frame positions of every frame.
fn truth_positions(script: &MotionScript) -> Result<Vec<[Vector3<f64>; 12]>> {
    let lengths = Lengths::new(&script.subject);
    let n = script.frame_count();
    let dt = 1.0 / script.frame_rate_hz;
    let anchor = script.anchor();

    let keyed: Vec<(f64, Directions)> = match script.motion {
        MotionKind::Custom => script.keyframes.iter().map(|k| (k.time_s, directions(&k.pose))).collect(),
        _ => {
            let (a, b) = script.extremes();
            vec![(0.0, directions(&a)), (1.0, directions(&b))]
        }
    };
    let pose_at = |t: f64| -> Directions {
        match script.motion {
            MotionKind::Custom => {
                if t <= keyed[0].0 {
                    return keyed[0].1;
                }
                for w in keyed.windows(2) {
                    if t <= w[1].0 {
                        let s = smoothstep((t - w[0].0) / (w[1].0 - w[0].0));
                        return interpolate(&w[0].1, &w[1].1, s);
                    }
                }
                keyed[keyed.len() - 1].1
            }
            MotionKind::Static => keyed[0].1,
            _ => interpolate(&keyed[0].1, &keyed[1].1, smooth_phase(t, script.duration_s, script.cycles)),
        }
    };

    let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), script.subject.yaw_deg.to_radians());
    let orient = yaw.matrix() * root_orientation(script.motion);
    let place = Vector3::new(script.subject.offset_m[0], script.subject.offset_m[1], script.subject.depth_m);

    let mut anchor0 = None;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let mut p = assemble(&pose_at(t), &lengths);
        let a = anchor_point(&p, anchor);
        let a0 = *anchor0.get_or_insert(a);
        let shift = a0 - a;
        for (j, q) in p.iter_mut().enumerate() {
            *q = orient * (*q + shift) + place;
            if q.z <= 1e-3 {
                return Err(Error::Script(format!("joint {j} is behind the camera at t = {t:.3} s")));
            }
        }
        out.push(p);
    }
    Ok(out)
}

fn hip_center(p: &[Vector3<f64>]) -> Vector3<f64> {
    (p[6] + p[7]) * 0.5
}

struct Ar1 {
    value: f64,
    rho: f64,
    sigma: f64,
}

impl Ar1 {
    fn new(rng: &mut ChaCha8Rng, rho: f64, sigma: f64) -> Self {
        let value = sigma * rng.sample::<f64, _>(StandardNormal);
        Self { value, rho, sigma }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.value = self.rho * self.value + (1.0 - self.rho * self.rho).sqrt() * self.sigma * e;
        self.value
    }
}

/// Generates ground truth and a noisy estimate of `script`.
pub fn generate(script: &MotionScript, camera: &CameraModel, seed: u64) -> Result<SyntheticSequence> {
    script.validate()?;
    camera.validate().map_err(|e| Error::Script(e.to_string()))?;
    let positions = truth_positions(script)?;
    let dt = 1.0 / script.frame_rate_hz;
    let noise = &script.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = camera.image_size;

    let mut occlusions = noise.occlusions.clone();
    const DISTAL: [usize; 8] = [2, 3, 4, 5, 8, 9, 10, 11];
    for _ in 0..noise.random_occlusions {
        let joint = DISTAL[rng.random_range(0..DISTAL.len())];
        let len = rng.random_range(0.5..1.5f64).min(script.duration_s);
        let start = rng.random_range(0.0..=(script.duration_s - len).max(0.0));
        occlusions.push(OcclusionWindow {
            joint,
            start_s: start,
            end_s: start + len,
        });
    }

    let sm = noise.world_smooth_sigma_m;
    let rho = noise.world_smooth_correlation;
    let mut offsets: Vec<[Ar1; 3]> = (0..12)
        .map(|_| [Ar1::new(&mut rng, rho, sm[0]), Ar1::new(&mut rng, rho, sm[1]), Ar1::new(&mut rng, rho, sm[2])])
        .collect();
    let rot_sigma = noise.rotation_sigma_deg.to_radians();
    let mut rotation: [Ar1; 3] = [
        Ar1::new(&mut rng, noise.rotation_correlation, rot_sigma),
        Ar1::new(&mut rng, noise.rotation_correlation, rot_sigma),
        Ar1::new(&mut rng, noise.rotation_correlation, rot_sigma),
    ];
    let mut scale = Ar1::new(&mut rng, noise.scale_correlation, noise.scale_sigma);

    let mut truth = Vec::with_capacity(positions.len());
    let mut noisy = Vec::with_capacity(positions.len());
    for (k, p) in positions.iter().enumerate() {
        let t = k as f64 * dt;
        let hip = hip_center(p);
        let world: Vec<Vector3<f64>> = p.iter().map(|q| q - hip).collect();
        let normalized: Vec<Vector2<f64>> = p
            .iter()
            .map(|q| camera.project(q).expect("joints are in front of the camera"))
            .collect();
        truth.push(LandmarkFrame {
            timestamp: t,
            normalized: normalized.clone(),
            world: world.clone(),
            visibility: vec![1.0; 12],
            presence: vec![1.0; 12],
        });

        let occluded: Vec<bool> = (0..12)
            .map(|j| occlusions.iter().any(|o| o.joint == j && t >= o.start_s && t <= o.end_s))
            .collect();
        let gain = |j: usize| if occluded[j] { noise.occlusion_noise_gain } else { 1.0 };

        let rvec = Vector3::new(rotation[0].step(&mut rng), rotation[1].step(&mut rng), rotation[2].step(&mut rng));
        let s = 1.0 + scale.step(&mut rng);
        let rot = Rotation3::new(rvec);
        let mut noisy_world = Vec::with_capacity(12);
        for (j, q) in world.iter().enumerate() {
            let o = Vector3::new(offsets[j][0].step(&mut rng), offsets[j][1].step(&mut rng), offsets[j][2].step(&mut rng));
            let white = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * noise.world_white_sigma_m;
            noisy_world.push(if noise.world_is_exact() { *q } else { (rot * (q + (o + white) * gain(j))) * s });
        }
        if !noise.world_is_exact() {
            let c = hip_center(&noisy_world);
            for q in noisy_world.iter_mut() {
                *q -= c;
            }
        }

        let mut noisy_norm = Vec::with_capacity(12);
        let mut visibility = Vec::with_capacity(12);
        for j in 0..12 {
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            let sigma = noise.normalized_sigma_px * gain(j);
            noisy_norm.push(if sigma == 0.0 {
                normalized[j]
            } else {
                normalized[j] + Vector2::new(ex * sigma / w, ey * sigma / h)
            });
            let jitter: f64 = rng.sample(StandardNormal);
            let base = if occluded[j] { noise.occlusion_visibility } else { noise.visibility_base };
            visibility.push((base - (jitter * noise.visibility_jitter).abs()).clamp(0.0, 1.0));
        }
        for j in 0..12 {
            let u: f64 = rng.random();
            if u < noise.dropout_probability {
                noisy_world[j] = Vector3::repeat(f64::NAN);
                noisy_norm[j] = Vector2::repeat(f64::NAN);
            }
        }
        noisy.push(LandmarkFrame {
            timestamp: t,
            normalized: noisy_norm,
            world: noisy_world,
            visibility,
            presence: vec![1.0; 12],
        });
    }

    let mut ratios = script.subject.ratios;
    let sum = ratios.rigid_sum();
    for k in crate::bones::RatioKind::ALL {
        ratios.set(k, ratios.get(k) / sum);
    }
    ratios.lateral_trunk = derived_lateral_trunk(&ratios);
    Ok(SyntheticSequence {
        truth,
        noisy,
        camera_frame: positions.iter().map(|p| p.to_vec()).collect(),
        seed,
        ratios,
    })
}

/// The topology every synthetic sequence uses.
pub fn topology() -> SkeletonTopology {
    SkeletonTopology::blazepose12()
}

/// A reproducible set of benchmark scripts: squats, arm abductions and
/// bridges performed by subjects with individually perturbed proportions,
/// orientations and distances.
pub fn benchmark_scripts(count: usize, seed: u64) -> Vec<MotionScript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b0d1);
    (0..count)
        .map(|i| {
            let motion = [MotionKind::Squat, MotionKind::Abduction, MotionKind::BridgeAnalog][i % 3];
            MotionScript {
                motion,
                subject: benchmark_subject(&mut rng),
                ..MotionScript::default()
            }
            .with_motion_defaults()
        })
        .collect()
}

/// A subject with proportions jittered around [`reference_subject_ratios`].
pub fn benchmark_subject(rng: &mut ChaCha8Rng) -> SubjectSpec {
    let mut ratios = reference_subject_ratios();
    for k in crate::bones::RatioKind::ALL {
        let f = 1.0 + rng.random_range(-0.03..0.03);
        ratios.set(k, ratios.get(k) * f);
    }
    let s = ratios.rigid_sum();
    for k in crate::bones::RatioKind::ALL {
        ratios.set(k, ratios.get(k) / s);
    }
    ratios.lateral_trunk = derived_lateral_trunk(&ratios);
    SubjectSpec {
        fixed_length_m: rng.random_range(2.8..3.2),
        ratios,
        yaw_deg: rng.random_range(-30.0..30.0),
        depth_m: rng.random_range(3.3..3.8),
        offset_m: [rng.random_range(-0.2..0.2), 0.0],
    }
}

impl MotionScript {
    /// Adjusts framing for motions that need it.
    pub fn with_motion_defaults(mut self) -> Self {
        if self.motion == MotionKind::BridgeAnalog {
            self.subject.yaw_deg = self.subject.yaw_deg.clamp(-20.0, 20.0);
            self.subject.offset_m = [-0.35, 0.3];
        }
        self
    }
}
