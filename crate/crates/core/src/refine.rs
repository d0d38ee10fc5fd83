//! Per-stream refinement session.
//!
//! A session owns the filter state, the bone estimator, the warm-start pose
//! and the reset bookkeeping of one landmark stream. Frames must be fed in
//! timestamp order.
//!
//! The cost is invariant under scaling the pose about the camera center, so
//! every solution is rescaled to put the hip midpoint at the configured
//! subject depth before it is stored or emitted.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bones::{
    BoneEstimator, BoneEstimatorParams, BoneModel, BoneRatios, MeasurementSource, TorsoAdjustmentModel, UpdateSummary,
};
use crate::cost::{CostBreakdown, CostContext, CostWeights, DEFAULT_SUBJECT_DEPTH};
use crate::error::{Error, Result};
use crate::filter::{FilterSpec, FrameFilter};
use crate::frame::{CameraModel, LandmarkFrame, Pose};
use crate::geometry::ElevationConvention;
use crate::lbfgs::{minimize, ConvergenceReason, Objective, SolverSettings};
use crate::los::build_los;
use crate::topology::SkeletonTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    PreviousFrame,
    WorldLandmarks,
}

/// Cold-start rule. Costs are compared above the line-of-sight floor. A
/// frame whose cost exceeds `factor` times the median of the last `window`
/// costs is re-solved from the world landmarks (the cheaper solution is
/// kept) and the next frame starts from the world landmarks as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResetPolicy {
    pub factor: f64,
    pub window: usize,
    /// Costs needed in the window before the rule applies.
    pub min_history: usize,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        Self {
            factor: 10.0,
            window: 30,
            min_history: 5,
        }
    }
}

impl ResetPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 1.0) || self.window == 0 || self.min_history == 0 || self.min_history > self.window {
            return Err(Error::Config(
                "reset: factor must exceed 1 and 0 < min_history <= window".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineSettings {
    pub camera: CameraModel,
    /// Depth of the hip midpoint in front of the camera, meters.
    pub subject_depth: f64,
    pub filter: FilterSpec,
    pub weights: CostWeights,
    pub solver: SolverSettings,
    pub bones: BoneEstimatorParams,
    pub torso: TorsoAdjustmentModel,
    pub convention: ElevationConvention,
    pub reset: ResetPolicy,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            subject_depth: DEFAULT_SUBJECT_DEPTH,
            filter: FilterSpec::default(),
            weights: CostWeights::default(),
            solver: SolverSettings::default(),
            bones: BoneEstimatorParams::default(),
            torso: TorsoAdjustmentModel::default(),
            convention: ElevationConvention::default(),
            reset: ResetPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub breakdown: CostBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: ConvergenceReason,
    pub warm_start: WarmStart,
    /// Every accepted step kept the cost non-increasing.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedFrame {
    pub timestamp: f64,
    /// Hip-centered joint positions, meters.
    pub pose: Pose,
    /// `false` when the optimizer failed and the world landmarks were passed
    /// through.
    pub refined: bool,
    pub report: Option<SolveReport>,
    pub failure: Option<String>,
    pub bone_update: UpdateSummary,
    /// Bone ratios used as targets in this frame.
    pub ratios: BoneRatios,
    pub stability_counter: u64,
    /// Joints whose input sample was missing and held by the filter.
    pub gap_joints: Vec<usize>,
}

/// Adapts a [`CostContext`] to the optimizer. The constant line-of-sight
/// floor is subtracted so relative tolerances act on the reducible part of
/// the cost.
pub struct CostObjective<'c, 'a> {
    pub ctx: &'c CostContext<'a>,
    pub floor: f64,
}

impl Objective for CostObjective<'_, '_> {
    fn dim(&self) -> usize {
        self.ctx.dim()
    }

    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        match self.ctx.evaluate(x, Some(grad)) {
            Ok(b) => Ok(b.total - self.floor),
            Err(Error::NonFinite { term: "gradient" }) => {
                let numeric = self.ctx.numeric_gradient(x, 1e-6)?;
                grad.copy_from_slice(&numeric);
                if grad.iter().all(|v| v.is_finite()) {
                    Ok(self.ctx.evaluate(x, None)?.total - self.floor)
                } else {
                    Err(Error::NonFinite { term: "gradient" })
                }
            }
            Err(e) => Err(e),
        }
    }
}

/// Minimizes the cost from `initial` and reports the solve.
pub fn minimize_pose(
    initial: &Pose,
    ctx: &CostContext,
    settings: &SolverSettings,
    warm_start: WarmStart,
) -> Result<(Pose, SolveReport)> {
    if !initial.is_finite() {
        return Err(Error::Contract("initial pose is not finite".into()));
    }
    let x0 = initial.to_flat();
    let bounds: Option<Vec<(f64, f64)>> = settings
        .bound_radius
        .map(|r| x0.iter().map(|v| (v - r, v + r)).collect());
    let floor = ctx.los_floor();
    let mut objective = CostObjective { ctx, floor };
    let m = minimize(&mut objective, &x0, settings, bounds.as_deref())?;
    let breakdown = ctx.evaluate(&m.x, None)?;
    let report = SolveReport {
        initial_cost: m.initial_cost + floor,
        final_cost: m.cost + floor,
        breakdown,
        iterations: m.iterations,
        evaluations: m.evaluations,
        reason: m.reason,
        warm_start,
        monotone: m.trace.windows(2).all(|w| w[1] <= w[0]) && m.cost <= m.initial_cost,
    };
    Ok((Pose::from_flat(&m.x), report))
}

struct Feedback {
    pose: Vec<Vector3<f64>>,
    visibility: Vec<f64>,
}

pub struct RefineSession {
    topology: SkeletonTopology,
    settings: RefineSettings,
    filter: FrameFilter,
    bones: BoneEstimator,
    /// Last solution in solver coordinates, used for warm starts.
    previous: Option<Vec<f64>>,
    /// Refined pose and visibility of the previous frame for bone feedback.
    feedback: Option<Feedback>,
    costs: VecDeque<f64>,
    cold_start: bool,
    resets: usize,
}

impl RefineSession {
    pub fn new(topology: SkeletonTopology, settings: RefineSettings, model: BoneModel) -> Result<Self> {
        settings.filter.validate()?;
        settings.camera.validate()?;
        settings.weights.validate()?;
        settings.solver.validate()?;
        settings.bones.validate()?;
        settings.reset.validate()?;
        if !(settings.subject_depth > 0.0 && settings.subject_depth.is_finite()) {
            return Err(Error::Config("camera.subject_depth_m must be positive".into()));
        }
        let filter = FrameFilter::new(&settings.filter, topology.joint_count())?;
        let mut bones = BoneEstimator::new(model, settings.bones, settings.torso.clone());
        bones.convention = settings.convention;
        Ok(Self {
            topology,
            settings,
            filter,
            bones,
            previous: None,
            feedback: None,
            costs: VecDeque::new(),
            cold_start: true,
            resets: 0,
        })
    }

    pub fn topology(&self) -> &SkeletonTopology {
        &self.topology
    }

    pub fn settings(&self) -> &RefineSettings {
        &self.settings
    }

    pub fn bone_model(&self) -> &BoneModel {
        &self.bones.model
    }

    /// Cold starts triggered by the reset rule so far.
    pub fn resets(&self) -> usize {
        self.resets
    }

    fn camera_offset(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.settings.subject_depth)
    }

    /// Rescales about the camera center so the hip midpoint lies at the
    /// subject depth.
    fn fix_gauge(&self, x: &mut [f64]) {
        let offset = self.camera_offset();
        let positions = Pose::from_flat(x);
        let hip = self.topology.hip_midpoint(positions.positions()) + offset;
        if !(hip.z > 1e-9) {
            return;
        }
        let s = self.settings.subject_depth / hip.z;
        for (chunk, p) in x.chunks_exact_mut(3).zip(positions.positions()) {
            let q = (p + offset) * s - offset;
            chunk.copy_from_slice(q.as_slice());
        }
    }

    pub fn step(&mut self, frame: &LandmarkFrame) -> Result<RefinedFrame> {
        let n = self.topology.joint_count();
        if frame.joint_count() != n {
            return Err(Error::Input(format!(
                "frame at t = {} has {} joints, topology `{}` has {n}",
                frame.timestamp,
                frame.joint_count(),
                self.topology.name()
            )));
        }
        frame.validate().map_err(Error::Input)?;

        let (filtered, gaps) = self.filter.apply(frame);
        let los = build_los(&filtered.normalized, &self.settings.camera);

        let feedback = match self.settings.bones.source {
            MeasurementSource::Refined => self.feedback.as_ref(),
            MeasurementSource::World => None,
        };
        let bone_update = match feedback {
            Some(fb) => self.bones.update(&self.topology, &fb.pose, &fb.visibility),
            None => self.bones.update(&self.topology, &filtered.world, &filtered.visibility),
        };
        let ratios = self.bones.model.estimates();
        let counter = self.bones.model.stability_counter;
        let weights = self.settings.weights.effective(counter);

        let ctx = CostContext::new(
            &self.topology,
            &filtered.world,
            &los,
            &filtered.visibility,
            ratios,
            &self.settings.torso,
            weights,
        )?
        .with_camera_offset(self.camera_offset())
        .with_convention(self.settings.convention);

        let world_pose = Pose::new(filtered.world.clone());
        let floor = ctx.los_floor();
        let warm = if self.cold_start { None } else { self.previous.as_ref() };
        let cold = || minimize_pose(&world_pose, &ctx, &self.settings.solver, WarmStart::WorldLandmarks);
        let mut attempt = match warm {
            Some(prev) => minimize_pose(&Pose::from_flat(prev), &ctx, &self.settings.solver, WarmStart::PreviousFrame)
                .or_else(|_| cold()),
            None => cold(),
        };
        // A warm start that lands far above the recent costs is retried from
        // the world landmarks; the lower-cost solution wins.
        let median = median(&self.costs);
        let history = self.costs.len() >= self.settings.reset.min_history;
        let outlier = |cost: f64| history && cost - floor > self.settings.reset.factor * median;
        if let Ok((_, report)) = &attempt {
            if report.warm_start == WarmStart::PreviousFrame && outlier(report.final_cost) {
                self.resets += 1;
                if let Ok(retry) = cold() {
                    log::debug!(
                        "t = {}: warm-start cost {:.3e} retried from world landmarks ({:.3e})",
                        frame.timestamp,
                        report.final_cost,
                        retry.1.final_cost
                    );
                    if retry.1.final_cost < report.final_cost {
                        attempt = Ok(retry);
                    }
                }
            }
        }

        let base = RefinedFrame {
            timestamp: frame.timestamp,
            pose: world_pose.clone(),
            refined: false,
            report: None,
            failure: None,
            bone_update,
            ratios,
            stability_counter: counter,
            gap_joints: gaps.joints,
        };

        match attempt {
            Ok((pose, report)) => {
                let mut x = pose.to_flat();
                self.fix_gauge(&mut x);
                let solved = Pose::from_flat(&x);
                let hip = self.topology.hip_midpoint(solved.positions());
                let centered = solved.translated(&-hip);

                self.cold_start = outlier(report.final_cost);
                if self.cold_start {
                    log::debug!("t = {}: cost {:.3e} triggers a cold start", frame.timestamp, report.final_cost);
                }
                if self.costs.len() == self.settings.reset.window {
                    self.costs.pop_front();
                }
                self.costs.push_back(report.final_cost - floor);

                self.previous = Some(x);
                self.feedback = Some(Feedback {
                    pose: centered.positions().to_vec(),
                    visibility: filtered.visibility.clone(),
                });
                Ok(RefinedFrame {
                    pose: centered,
                    refined: true,
                    report: Some(report),
                    ..base
                })
            }
            Err(e) => {
                log::warn!("t = {}: refinement failed ({e}); passing world landmarks through", frame.timestamp);
                self.previous = None;
                self.cold_start = true;
                self.feedback = None;
                Ok(RefinedFrame {
                    failure: Some(e.to_string()),
                    ..base
                })
            }
        }
    }
}

fn median(values: &VecDeque<f64>) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
