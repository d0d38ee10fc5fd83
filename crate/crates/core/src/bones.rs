//! Bone ratio model and its per-frame refinement.
//!
//! A bone ratio is a segment length divided by the summed length of the
//! nine rigid bones (pelvis plus both ulnae, humeri, femora and tibiae), so
//! the rigid ratios of a single frame sum to one. Each frame the estimator
//! measures ratios from a pose, gates outliers, merges left/right
//! measurements of symmetric bones and folds the result into one scalar
//! Kalman filter per ratio kind.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, ElevationConvention};
use crate::topology::{BoneKind, MultiSegment, Side, SkeletonTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Ulna,
    Humerus,
    Femur,
    Tibia,
    Pelvis,
    ShoulderWidth,
    Spine,
    LateralTrunk,
}

impl RatioKind {
    pub const ALL: [RatioKind; 8] = [
        RatioKind::Ulna,
        RatioKind::Humerus,
        RatioKind::Femur,
        RatioKind::Tibia,
        RatioKind::Pelvis,
        RatioKind::ShoulderWidth,
        RatioKind::Spine,
        RatioKind::LateralTrunk,
    ];

    pub fn is_rigid(self) -> bool {
        matches!(
            self,
            RatioKind::Ulna | RatioKind::Humerus | RatioKind::Femur | RatioKind::Tibia | RatioKind::Pelvis
        )
    }
}

impl From<BoneKind> for RatioKind {
    fn from(b: BoneKind) -> Self {
        match b {
            BoneKind::Ulna => RatioKind::Ulna,
            BoneKind::Humerus => RatioKind::Humerus,
            BoneKind::Femur => RatioKind::Femur,
            BoneKind::Tibia => RatioKind::Tibia,
            BoneKind::Pelvis => RatioKind::Pelvis,
        }
    }
}

impl From<MultiSegment> for RatioKind {
    fn from(m: MultiSegment) -> Self {
        match m {
            MultiSegment::ShoulderWidth => RatioKind::ShoulderWidth,
            MultiSegment::Spine => RatioKind::Spine,
            MultiSegment::LateralTrunkLeft | MultiSegment::LateralTrunkRight => RatioKind::LateralTrunk,
        }
    }
}

/// One value per ratio kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoneRatios {
    pub ulna: f64,
    pub humerus: f64,
    pub femur: f64,
    pub tibia: f64,
    pub pelvis: f64,
    pub shoulder_width: f64,
    pub spine: f64,
    pub lateral_trunk: f64,
}

impl BoneRatios {
    /// Reference ratios measured on upright subjects with relaxed arms.
    pub const INITIAL: BoneRatios = BoneRatios {
        ulna: 0.0862,
        humerus: 0.1015,
        femur: 0.1462,
        tibia: 0.1297,
        pelvis: 0.0728,
        shoulder_width: 0.1260,
        spine: 0.1859,
        lateral_trunk: 0.1878,
    };

    pub fn get(&self, kind: RatioKind) -> f64 {
        match kind {
            RatioKind::Ulna => self.ulna,
            RatioKind::Humerus => self.humerus,
            RatioKind::Femur => self.femur,
            RatioKind::Tibia => self.tibia,
            RatioKind::Pelvis => self.pelvis,
            RatioKind::ShoulderWidth => self.shoulder_width,
            RatioKind::Spine => self.spine,
            RatioKind::LateralTrunk => self.lateral_trunk,
        }
    }

    pub fn set(&mut self, kind: RatioKind, value: f64) {
        let slot = match kind {
            RatioKind::Ulna => &mut self.ulna,
            RatioKind::Humerus => &mut self.humerus,
            RatioKind::Femur => &mut self.femur,
            RatioKind::Tibia => &mut self.tibia,
            RatioKind::Pelvis => &mut self.pelvis,
            RatioKind::ShoulderWidth => &mut self.shoulder_width,
            RatioKind::Spine => &mut self.spine,
            RatioKind::LateralTrunk => &mut self.lateral_trunk,
        };
        *slot = value;
    }

    /// Sum of the nine rigid-bone ratios (paired bones counted per side).
    pub fn rigid_sum(&self) -> f64 {
        self.pelvis + 2.0 * (self.ulna + self.humerus + self.femur + self.tibia)
    }

    pub fn validate(&self) -> Result<()> {
        for k in RatioKind::ALL {
            let v = self.get(k);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("ratio {k:?} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for BoneRatios {
    fn default() -> Self {
        Self::INITIAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoneEstimatorParams {
    /// Prior variance `P₀` of every ratio.
    pub initial_variance: f64,
    /// Process noise `Q` added per frame.
    pub process_noise: f64,
    /// Base measurement noise `R₀`; a measurement with confidence `c` uses `R₀/c`.
    pub measurement_noise: f64,
    pub confidence_threshold: f64,
    /// Largest accepted `|measured/initial − 1|`.
    pub max_deviation: f64,
    /// Largest accepted inclination to the image plane.
    pub max_inclination_deg: f64,
    /// A frame counts as stable when every estimate moved less than this
    /// relative amount.
    pub stable_relative_change: f64,
    pub source: MeasurementSource,
}

/// Landmarks the ratio measurements are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSource {
    /// Filtered world landmarks of the current frame.
    #[default]
    World,
    /// Refined pose of the previous frame; the first frame and frames after
    /// a failed refinement use the filtered world landmarks.
    Refined,
}

impl Default for BoneEstimatorParams {
    fn default() -> Self {
        Self {
            initial_variance: 4e-4,
            process_noise: 1e-8,
            measurement_noise: 1e-4,
            confidence_threshold: 0.5,
            max_deviation: 0.15,
            max_inclination_deg: 50.0,
            stable_relative_change: 1e-3,
            source: MeasurementSource::World,
        }
    }
}

impl BoneEstimatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_variance", self.initial_variance),
            ("measurement_noise", self.measurement_noise),
            ("max_deviation", self.max_deviation),
            ("max_inclination_deg", self.max_inclination_deg),
            ("stable_relative_change", self.stable_relative_change),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("estimator.{name} = {v} must be positive")));
            }
        }
        if !(self.process_noise >= 0.0) {
            return Err(Error::Config("estimator.process_noise must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config("estimator.confidence_threshold must lie in [0, 1)".into()));
        }
        if self.max_inclination_deg > 90.0 {
            return Err(Error::Config("estimator.max_inclination_deg must not exceed 90".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Torso adjustment
// ---------------------------------------------------------------------------

/// Relative length change of the torso segments as polynomials of the
/// humerothoracic elevation. Each list holds `c₁, c₂, …` of
/// `g(β) = Σ cₖ βᵏ`; the adjusted ratio is `m*·(1 + …)` with
///
/// * spine: mean of `g_spine(β_L)` and `g_spine(β_R)`,
/// * lateral trunk: `g_lateral(β)` of the same side only,
/// * shoulder width: `g_width(β_L) + g_width(β_R)`, one contribution per
///   shoulder.
///
/// Empty lists (the default) leave every ratio unadjusted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorsoAdjustmentModel {
    pub spine: Vec<f64>,
    pub lateral_trunk: Vec<f64>,
    pub shoulder_width: Vec<f64>,
}

fn poly(coeffs: &[f64], x: f64) -> (f64, f64) {
    // no constant term: g(0) = 0
    let (mut v, mut d) = (0.0, 0.0);
    for c in coeffs.iter().rev() {
        d = d * x + v;
        v = v * x + c;
    }
    // v currently holds Σ cₖ x^(k-1); shift by one power of x.
    (v * x, v + d * x)
}

impl TorsoAdjustmentModel {
    pub fn is_identity(&self) -> bool {
        [&self.spine, &self.lateral_trunk, &self.shoulder_width]
            .iter()
            .all(|c| c.iter().all(|v| *v == 0.0))
    }

    /// Multiplicative factor and its partial derivatives `(f, ∂f/∂β_L, ∂f/∂β_R)`.
    pub fn factor(&self, segment: MultiSegment, beta_l: f64, beta_r: f64) -> (f64, f64, f64) {
        match segment {
            MultiSegment::Spine => {
                let (l, dl) = poly(&self.spine, beta_l);
                let (r, dr) = poly(&self.spine, beta_r);
                (1.0 + 0.5 * (l + r), 0.5 * dl, 0.5 * dr)
            }
            MultiSegment::LateralTrunkLeft => {
                let (l, dl) = poly(&self.lateral_trunk, beta_l);
                (1.0 + l, dl, 0.0)
            }
            MultiSegment::LateralTrunkRight => {
                let (r, dr) = poly(&self.lateral_trunk, beta_r);
                (1.0 + r, 0.0, dr)
            }
            MultiSegment::ShoulderWidth => {
                let (l, dl) = poly(&self.shoulder_width, beta_l);
                let (r, dr) = poly(&self.shoulder_width, beta_r);
                (1.0 + l + r, dl, dr)
            }
        }
    }
}

/// `uᵢ(m*, β_L, β_R)`: the neutral-posture ratio adjusted for arm elevation.
pub fn torso_adjust(model: &TorsoAdjustmentModel, segment: MultiSegment, ratio: f64, beta_l: f64, beta_r: f64) -> f64 {
    ratio * model.factor(segment, beta_l, beta_r).0
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRef {
    /// Index into [`SkeletonTopology::rigid_bones`].
    Bone(usize),
    Multi(MultiSegment),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMeasurement {
    pub segment: SegmentRef,
    pub kind: RatioKind,
    pub measured_ratio: f64,
    pub confidence: f64,
    /// Angle between the segment and the image (xy) plane, radians.
    pub inclination: f64,
}

/// Length estimated from the xy projection corrected by the inclination,
/// together with that inclination.
fn corrected_length(d: &Vector3<f64>) -> (f64, f64) {
    let planar = d.x.hypot(d.y);
    let inclination = d.z.abs().atan2(planar);
    let c = inclination.cos();
    let length = if c > 1e-9 { planar / c } else { d.z.abs() };
    (length, inclination)
}

/// Reliability of a length measurement: the lower joint visibility scaled
/// by a linear fall-off that reaches zero at the inclination gate.
pub fn confidence_score(visibility_a: f64, visibility_b: f64, inclination: f64, max_inclination: f64) -> f64 {
    let vis = visibility_a.min(visibility_b).clamp(0.0, 1.0);
    let tilt = (1.0 - inclination.abs() / max_inclination).max(0.0);
    vis * tilt
}

/// Ratio measurements for every rigid bone and torso segment of a pose.
pub fn measure_ratios(
    topology: &SkeletonTopology,
    positions: &[Vector3<f64>],
    visibility: &[f64],
    params: &BoneEstimatorParams,
) -> Result<Vec<RatioMeasurement>> {
    let max_incl = params.max_inclination_deg.to_radians();
    let mut out = Vec::with_capacity(topology.rigid_bones().len() + MultiSegment::ALL.len());
    let mut fixed_sum = 0.0;
    for (i, bone) in topology.rigid_bones().iter().enumerate() {
        let limb = &topology.limbs()[bone.limb];
        let (length, inclination) = corrected_length(&(positions[limb.distal] - positions[limb.proximal]));
        fixed_sum += length;
        out.push(RatioMeasurement {
            segment: SegmentRef::Bone(i),
            kind: bone.kind.into(),
            measured_ratio: length,
            confidence: confidence_score(visibility[limb.proximal], visibility[limb.distal], inclination, max_incl),
            inclination,
        });
    }
    if !(fixed_sum > 1e-9) || !fixed_sum.is_finite() {
        return Err(Error::FrameRejected(format!("summed fixed-bone length {fixed_sum:e} is degenerate")));
    }
    for segment in MultiSegment::ALL {
        let (a, b) = topology.multi_segment_endpoints(positions, segment);
        let (length, inclination) = corrected_length(&(b - a));
        let (wa, wb) = topology.multi_segment_weights(segment);
        let vis = wa
            .iter()
            .chain(wb.iter())
            .map(|(j, _)| visibility[*j])
            .fold(1.0, f64::min);
        out.push(RatioMeasurement {
            segment: SegmentRef::Multi(segment),
            kind: segment.into(),
            measured_ratio: length,
            confidence: confidence_score(vis, vis, inclination, max_incl),
            inclination,
        });
    }
    for m in &mut out {
        m.measured_ratio /= fixed_sum;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Model and gating
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioState {
    pub estimate: f64,
    pub variance: f64,
    pub initial: f64,
}

/// Per-kind Kalman state of all bone ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneModel {
    pub ratios: BTreeMap<RatioKind, RatioState>,
    /// Consecutive frames in which no estimate changed significantly.
    pub stability_counter: u64,
}

impl BoneModel {
    pub fn new(initial: &BoneRatios, initial_variance: f64) -> Self {
        let ratios = RatioKind::ALL
            .iter()
            .map(|&k| {
                let v = initial.get(k);
                (
                    k,
                    RatioState {
                        estimate: v,
                        variance: initial_variance,
                        initial: v,
                    },
                )
            })
            .collect();
        Self {
            ratios,
            stability_counter: 0,
        }
    }

    pub fn state(&self, kind: RatioKind) -> &RatioState {
        &self.ratios[&kind]
    }

    pub fn estimate(&self, kind: RatioKind) -> f64 {
        self.ratios[&kind].estimate
    }

    pub fn estimates(&self) -> BoneRatios {
        let mut r = BoneRatios::INITIAL;
        for (k, s) in &self.ratios {
            r.set(*k, s.estimate);
        }
        r
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: BoneModel = serde_json::from_str(&text)?;
        if RatioKind::ALL.iter().any(|k| !model.ratios.contains_key(k)) {
            return Err(Error::Input(format!("{}: session file lacks ratio entries", path.display())));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Inclination,
    Deviation,
    LowConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Accepted,
    Rejected(RejectReason),
}

pub fn gate_outliers(measurement: &RatioMeasurement, model: &BoneModel, params: &BoneEstimatorParams) -> GateDecision {
    if measurement.inclination > params.max_inclination_deg.to_radians() {
        return GateDecision::Rejected(RejectReason::Inclination);
    }
    let initial = model.state(measurement.kind).initial;
    // tolerance keeps a ratio exactly on the band edge inside it
    if (measurement.measured_ratio / initial - 1.0).abs() > params.max_deviation + 1e-12 {
        return GateDecision::Rejected(RejectReason::Deviation);
    }
    if !(measurement.confidence > params.confidence_threshold) {
        return GateDecision::Rejected(RejectReason::LowConfidence);
    }
    GateDecision::Accepted
}

/// Scalar Kalman measurement update with `R = R₀ / confidence`.
pub fn kalman_update(state: &mut RatioState, measured: f64, confidence: f64, base_noise: f64) -> Result<()> {
    if !(confidence > 0.0) {
        return Err(Error::Contract(format!("Kalman update with confidence {confidence}")));
    }
    let r = base_noise / confidence;
    let gain = state.variance / (state.variance + r);
    state.estimate += gain * (measured - state.estimate);
    state.variance *= 1.0 - gain;
    Ok(())
}

/// Outcome of one estimator step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UpdateSummary {
    pub accepted: Vec<RatioKind>,
    pub rejected: Vec<(SegmentRef, RejectReason)>,
    /// The frame could not be measured at all.
    pub frame_rejected: bool,
}

/// Owns the bone model of one stream and advances it frame by frame.
#[derive(Debug, Clone)]
pub struct BoneEstimator {
    pub model: BoneModel,
    pub params: BoneEstimatorParams,
    pub torso: TorsoAdjustmentModel,
    pub convention: ElevationConvention,
}

impl BoneEstimator {
    pub fn new(model: BoneModel, params: BoneEstimatorParams, torso: TorsoAdjustmentModel) -> Self {
        Self {
            model,
            params,
            torso,
            convention: ElevationConvention::default(),
        }
    }

    /// measure → gate → merge symmetric pairs → Kalman update.
    pub fn update(&mut self, topology: &SkeletonTopology, positions: &[Vector3<f64>], visibility: &[f64]) -> UpdateSummary {
        let mut summary = UpdateSummary::default();
        let before: Vec<f64> = self.model.ratios.values().map(|s| s.estimate).collect();
        for s in self.model.ratios.values_mut() {
            s.variance += self.params.process_noise;
        }

        match measure_ratios(topology, positions, visibility, &self.params) {
            Ok(measurements) => {
                let betas = self.elevations(topology, positions);
                let mut merged: BTreeMap<RatioKind, (f64, f64, f64)> = BTreeMap::new();
                for mut m in measurements {
                    if let SegmentRef::Multi(seg) = m.segment {
                        // Compare against the neutral-posture ratio.
                        let Some((bl, br)) = betas else { continue };
                        m.measured_ratio /= self.torso.factor(seg, bl, br).0;
                    }
                    match gate_outliers(&m, &self.model, &self.params) {
                        GateDecision::Accepted => {
                            let e = merged.entry(m.kind).or_insert((0.0, 0.0, 0.0));
                            e.0 += m.confidence * m.measured_ratio;
                            e.1 += m.confidence;
                            e.2 += m.confidence * m.confidence;
                        }
                        GateDecision::Rejected(reason) => summary.rejected.push((m.segment, reason)),
                    }
                }
                for (kind, (weighted, csum, c2sum)) in merged {
                    let value = weighted / csum;
                    let confidence = c2sum / csum;
                    let state = self.model.ratios.get_mut(&kind).expect("all kinds present");
                    if kalman_update(state, value, confidence, self.params.measurement_noise).is_ok() {
                        summary.accepted.push(kind);
                    }
                }
            }
            Err(_) => summary.frame_rejected = true,
        }

        let stable = self
            .model
            .ratios
            .values()
            .zip(before)
            .all(|(s, b)| ((s.estimate - b) / b).abs() < self.params.stable_relative_change);
        if stable {
            self.model.stability_counter += 1;
        } else {
            self.model.stability_counter = 0;
        }
        summary
    }

    fn elevations(&self, topology: &SkeletonTopology, positions: &[Vector3<f64>]) -> Option<(f64, f64)> {
        let mut out = [0.0; 2];
        for (slot, side) in out.iter_mut().zip(Side::BOTH) {
            let (h, r) = self.convention.vectors(topology, positions, side);
            *slot = angle_between(&h, &r).ok()?;
        }
        Some((out[0], out[1]))
    }
}
