//! The per-frame refinement cost and its analytic gradient.
//!
//! `J = w_W·J_W + w_S·J_S + w_B·J_B + w_M·J_M` where
//!
//! * `J_W` compares limb orientations with the (filtered) world landmarks,
//!   both relative (inter-limb angles) and absolute (per-limb direction),
//! * `J_S` pulls every joint onto its camera line of sight,
//! * `J_B` matches rigid-bone ratios to the bone model,
//! * `J_M` matches torso-segment ratios to elevation-adjusted targets.
//!
//! Pose coordinates are flattened as `[x₀, y₀, z₀, x₁, …]`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bones::{BoneRatios, RatioKind, TorsoAdjustmentModel};
use crate::error::{Error, Result};
use crate::frame::Pose;
use crate::geometry::{angle_between, angle_with_grad, xi_with_grad, ElevationConvention, DEGENERATE_LENGTH};
use crate::los::LosFrame;
use crate::topology::{MultiSegment, Side, SkeletonTopology};

/// Finite stand-in for an infinite cost.
pub const SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimbPairs {
    /// Only limbs sharing a joint are compared.
    #[default]
    Adjacent,
    All,
}

/// Term weights and scales.
///
/// The defaults were tuned on the synthetic benchmark. Line-of-sight
/// residuals are in normalized image units while bone residuals are ratios,
/// so the line-of-sight weight has to be large for the two to pull with
/// comparable stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub w_world: f64,
    pub w_los: f64,
    pub w_bone: f64,
    pub w_multi: f64,
    /// Relative-orientation scale.
    pub lambda1: f64,
    /// Absolute-orientation scale.
    pub lambda2: f64,
    /// Line-of-sight scale.
    pub lambda3: f64,
    /// Visibility fall-off rate.
    pub lambda4: f64,
    /// Bone-ratio scale.
    pub lambda5: f64,
    /// Multiplier on `w_bone` and `w_multi` once the bone model is stable.
    pub stability_boost: f64,
    /// Stable frames required before the boost applies.
    pub stability_horizon: u64,
    pub limb_pairs: LimbPairs,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_world: 1.0,
            w_los: 30000.0,
            w_bone: 2500.0,
            w_multi: 300.0,
            lambda1: 0.01,
            lambda2: 0.5,
            lambda3: 0.5,
            lambda4: 3.0,
            lambda5: 10.0,
            stability_boost: 2.0,
            stability_horizon: 60,
            limb_pairs: LimbPairs::Adjacent,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_world", self.w_world),
            ("w_los", self.w_los),
            ("w_bone", self.w_bone),
            ("w_multi", self.w_multi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("weights.{name} = {v} must be non-negative")));
            }
        }
        for (i, v) in self.lambdas().iter().enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("weights.lambda{} = {v} must be positive", i + 1)));
            }
        }
        if !(self.stability_boost >= 1.0 && self.stability_boost.is_finite()) {
            return Err(Error::Config("weights.stability_boost must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lambdas(&self) -> [f64; 5] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5]
    }

    /// Weights after stability scheduling.
    pub fn effective(&self, stability_counter: u64) -> CostWeights {
        let mut w = *self;
        if stability_counter > self.stability_horizon {
            w.w_bone *= self.stability_boost;
            w.w_multi *= self.stability_boost;
        }
        w
    }

    /// `λ₃·f(v)` with `f(v) = ½ + ½·e^{−λ₄(1−v)}`.
    pub fn los_weight(&self, visibility: f64) -> f64 {
        self.lambda3 * visibility_weight(visibility, self.lambda4)
    }
}

/// Visibility weighting `f(v) = ½ + ½·e^{−λ₄(1−v)}`.
pub fn visibility_weight(visibility: f64, lambda4: f64) -> f64 {
    0.5 + 0.5 * (-lambda4 * (1.0 - visibility)).exp()
}

/// Unweighted sub-costs and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub world: f64,
    pub los: f64,
    pub bone: f64,
    pub multi: f64,
    pub total: f64,
    /// Joints sitting at the focal point, charged the maximum ray cost.
    #[serde(default)]
    pub focal_point_joints: u32,
}

/// Everything the cost needs about one frame.
#[derive(Debug, Clone)]
pub struct CostContext<'a> {
    pub topology: &'a SkeletonTopology,
    pub world: &'a [Vector3<f64>],
    pub los: &'a LosFrame,
    pub visibility: &'a [f64],
    /// `b*` for rigid bones and `m*` for torso segments.
    pub targets: BoneRatios,
    pub torso: &'a TorsoAdjustmentModel,
    pub weights: CostWeights,
    /// Translation from pose coordinates into the camera frame.
    pub camera_offset: Vector3<f64>,
    pub convention: ElevationConvention,
    pairs: Vec<(usize, usize)>,
    world_limbs: Vec<Option<Vector3<f64>>>,
    world_angles: Vec<Option<f64>>,
    ray_weights: Vec<f64>,
}

/// Default distance of the hip midpoint from the camera, meters.
pub const DEFAULT_SUBJECT_DEPTH: f64 = 2.5;

impl<'a> CostContext<'a> {
    pub fn new(
        topology: &'a SkeletonTopology,
        world: &'a [Vector3<f64>],
        los: &'a LosFrame,
        visibility: &'a [f64],
        targets: BoneRatios,
        torso: &'a TorsoAdjustmentModel,
        weights: CostWeights,
    ) -> Result<Self> {
        let n = topology.joint_count();
        if world.len() != n || los.len() != n || visibility.len() != n {
            return Err(Error::Topology(format!(
                "{}: cost inputs have {} world, {} ray and {} visibility entries for {n} joints",
                topology.name(),
                world.len(),
                los.len(),
                visibility.len()
            )));
        }
        let pairs = match weights.limb_pairs {
            LimbPairs::Adjacent => topology.adjacent_limb_pairs(),
            LimbPairs::All => topology.all_limb_pairs(),
        };
        let world_limbs: Vec<Option<Vector3<f64>>> = topology
            .limbs()
            .iter()
            .map(|l| {
                let v = world[l.distal] - world[l.proximal];
                (v.norm() >= DEGENERATE_LENGTH && v.iter().all(|c| c.is_finite())).then_some(v)
            })
            .collect();
        let world_angles = pairs
            .iter()
            .map(|&(i, j)| match (world_limbs[i], world_limbs[j]) {
                (Some(a), Some(b)) => angle_between(&a, &b).ok(),
                _ => None,
            })
            .collect();
        let ray_weights = visibility.iter().map(|v| weights.los_weight(*v)).collect();
        Ok(Self {
            topology,
            world,
            los,
            visibility,
            targets,
            torso,
            weights,
            camera_offset: Vector3::new(0.0, 0.0, DEFAULT_SUBJECT_DEPTH),
            convention: ElevationConvention::default(),
            pairs,
            world_limbs,
            world_angles,
            ray_weights,
        })
    }

    pub fn with_camera_offset(mut self, offset: Vector3<f64>) -> Self {
        self.camera_offset = offset;
        self
    }

    pub fn with_convention(mut self, convention: ElevationConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn dim(&self) -> usize {
        3 * self.topology.joint_count()
    }

    /// Unordered limb pairs entering the relative-orientation term.
    pub fn limb_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Evaluates all terms; when `grad` is given it receives `∂J/∂x`.
    pub fn evaluate(&self, x: &[f64], grad: Option<&mut [f64]>) -> Result<CostBreakdown> {
        if x.len() != self.dim() {
            return Err(Error::Contract(format!("pose has {} coordinates, expected {}", x.len(), self.dim())));
        }
        let p = Pose::from_flat(x);
        let p = p.positions();
        let w = &self.weights;
        let mut g = grad.as_ref().map(|_| vec![Vector3::zeros(); p.len()]);

        let world = self.world_term(p, g.as_deref_mut().map(|g| (g, w.w_world)));
        let (los, focal) = self.los_term(p, g.as_deref_mut().map(|g| (g, w.w_los)));
        let rigid = RigidSum::new(self.topology, p);
        let bone = self.bone_term(p, &rigid, g.as_deref_mut().map(|g| (g, w.w_bone)));
        let multi = self.multi_term(p, &rigid, g.as_deref_mut().map(|g| (g, w.w_multi)));

        for (term, v) in [("world", world), ("line-of-sight", los), ("bone", bone), ("multi-bone", multi)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { term });
            }
        }
        let total = w.w_world * world + w.w_los * los + w.w_bone * bone + w.w_multi * multi;
        if let (Some(out), Some(g)) = (grad, g) {
            for (chunk, v) in out.chunks_exact_mut(3).zip(g) {
                chunk.copy_from_slice(v.as_slice());
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { term: "gradient" });
            }
        }
        Ok(CostBreakdown {
            world,
            los,
            bone,
            multi,
            total,
            focal_point_joints: focal,
        })
    }

    /// Central finite-difference gradient of the total cost.
    pub fn numeric_gradient(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut probe = x.to_vec();
        let mut out = vec![0.0; x.len()];
        for i in 0..x.len() {
            probe[i] = x[i] + h;
            let fp = self.evaluate(&probe, None)?.total;
            probe[i] = x[i] - h;
            let fm = self.evaluate(&probe, None)?.total;
            probe[i] = x[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
        Ok(out)
    }

    fn world_term(&self, p: &[Vector3<f64>], mut g: Option<(&mut [Vector3<f64>], f64)>) -> f64 {
        let limbs = self.topology.limbs();
        let (l1, l2) = (self.weights.lambda1, self.weights.lambda2);
        let k: Vec<Option<Vector3<f64>>> = limbs
            .iter()
            .map(|l| {
                let v = p[l.distal] - p[l.proximal];
                (v.norm() >= DEGENERATE_LENGTH).then_some(v)
            })
            .collect();
        let mut total = 0.0;

        for (i, limb) in limbs.iter().enumerate() {
            let (Some(wk), Some(ki)) = (self.world_limbs[i], k[i]) else { continue };
            let Some((xi, _, dk)) = xi_with_grad(&wk, &ki) else { continue };
            let r = 1.0 - l2 * xi;
            total += r * r;
            if let Some((g, s)) = g.as_mut() {
                let gk = dk * (-2.0 * r * l2 * *s);
                g[limb.distal] += gk;
                g[limb.proximal] -= gk;
            }
        }

        // Each unordered pair appears twice in the ordered double sum.
        for (n, &(i, j)) in self.pairs.iter().enumerate() {
            let (Some(wa), Some(ki), Some(kj)) = (self.world_angles[n], k[i], k[j]) else { continue };
            let Some((a, di, dj)) = angle_with_grad(&ki, &kj) else { continue };
            let d = wa - a;
            total += 2.0 * l1 * d * d;
            if let Some((g, s)) = g.as_mut() {
                let c = -4.0 * l1 * d * *s;
                let (li, lj) = (&limbs[i], &limbs[j]);
                g[li.distal] += di * c;
                g[li.proximal] -= di * c;
                g[lj.distal] += dj * c;
                g[lj.proximal] -= dj * c;
            }
        }
        total
    }

    /// Smallest value the weighted line-of-sight term can take: every joint
    /// on its ray. Pose independent; nonzero when ray weights are below one.
    pub fn los_floor(&self) -> f64 {
        let count = self.los.missing.iter().filter(|m| !**m).count();
        if count == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .ray_weights
            .iter()
            .zip(&self.los.missing)
            .filter(|(_, m)| !**m)
            .map(|(w, _)| (1.0 - w.min(1.0)).powi(2))
            .sum();
        self.weights.w_los * sum / count as f64
    }

    fn los_term(&self, p: &[Vector3<f64>], mut g: Option<(&mut [Vector3<f64>], f64)>) -> (f64, u32) {
        let count = self.los.missing.iter().filter(|m| !**m).count();
        if count == 0 {
            return (0.0, 0);
        }
        let inv_k = 1.0 / count as f64;
        let mut total = 0.0;
        let mut focal = 0;
        for (i, pos) in p.iter().enumerate() {
            if self.los.missing[i] {
                continue;
            }
            let x = pos + self.camera_offset;
            let Some((xi, dx, _)) = xi_with_grad(&x, &self.los.rays[i]) else {
                total += 1.0;
                focal += 1;
                continue;
            };
            let wv = self.ray_weights[i];
            let r = 1.0 - wv * xi;
            total += r * r;
            if let Some((g, s)) = g.as_mut() {
                g[i] += dx * (-2.0 * r * wv * inv_k * *s);
            }
        }
        (total * inv_k, focal)
    }

    fn bone_term(&self, _p: &[Vector3<f64>], rigid: &RigidSum, g: Option<(&mut [Vector3<f64>], f64)>) -> f64 {
        let bones = self.topology.rigid_bones();
        if bones.is_empty() {
            return 0.0;
        }
        if rigid.degenerate() {
            return SENTINEL;
        }
        let l5 = self.weights.lambda5;
        let r = bones.len() as f64;
        let errors: Vec<f64> = bones
            .iter()
            .zip(&rigid.lengths)
            .map(|(b, len)| len / rigid.sum - self.targets.get(RatioKind::from(b.kind)))
            .collect();
        let total = l5 * l5 * errors.iter().map(|e| e * e).sum::<f64>() / r;
        if let Some((g, s)) = g {
            let weighted: f64 = errors.iter().zip(&rigid.lengths).map(|(e, len)| e * len / rigid.sum).sum();
            let c = 2.0 * l5 * l5 * s / (r * rigid.sum);
            for (n, bone) in bones.iter().enumerate() {
                if let Some(u) = rigid.units[n] {
                    let gk = u * (c * (errors[n] - weighted));
                    let limb = &self.topology.limbs()[bone.limb];
                    g[limb.distal] += gk;
                    g[limb.proximal] -= gk;
                }
            }
        }
        total
    }

    fn multi_term(&self, p: &[Vector3<f64>], rigid: &RigidSum, mut g: Option<(&mut [Vector3<f64>], f64)>) -> f64 {
        if rigid.degenerate() {
            return SENTINEL;
        }
        let m = MultiSegment::ALL.len() as f64;
        let elevations = Side::BOTH.map(|side| {
            let (h, r) = self.convention.vectors(self.topology, p, side);
            angle_with_grad(&h, &r)
        });
        let beta = |i: usize| elevations[i].map_or(0.0, |e| e.0);
        let (bl, br) = (beta(0), beta(1));

        let mut total = 0.0;
        let mut sum_coef = 0.0;
        let mut beta_coef = [0.0; 2];
        for seg in MultiSegment::ALL {
            let (a, b) = self.topology.multi_segment_endpoints(p, seg);
            let d = b - a;
            let len = d.norm();
            let ratio = len / rigid.sum;
            let target = self.targets.get(seg.into());
            let (f, dfl, dfr) = self.torso.factor(seg, bl, br);
            let r = ratio - target * f;
            total += r * r / m;
            if let Some((g, s)) = g.as_mut() {
                let c = 2.0 * r / m * *s;
                if len >= DEGENERATE_LENGTH {
                    let gd = d * (c / (len * rigid.sum));
                    let (wa, wb) = self.topology.multi_segment_weights(seg);
                    for (j, w) in wb {
                        g[j] += gd * w;
                    }
                    for (j, w) in wa {
                        g[j] -= gd * w;
                    }
                }
                sum_coef -= c * ratio / rigid.sum;
                beta_coef[0] -= c * target * dfl;
                beta_coef[1] -= c * target * dfr;
            }
        }

        if let Some((g, _)) = g.as_mut() {
            for (n, bone) in self.topology.rigid_bones().iter().enumerate() {
                if let Some(u) = rigid.units[n] {
                    let limb = &self.topology.limbs()[bone.limb];
                    g[limb.distal] += u * sum_coef;
                    g[limb.proximal] -= u * sum_coef;
                }
            }
            let anchors = self.topology.anchors();
            for (i, side) in Side::BOTH.into_iter().enumerate() {
                let Some((_, dh, dref)) = elevations[i] else { continue };
                if beta_coef[i] == 0.0 {
                    continue;
                }
                let c = beta_coef[i];
                g[anchors.elbow(side)] += dh * c;
                g[anchors.shoulder(side)] -= dh * c;
                if self.convention == ElevationConvention::TrunkAxis {
                    g[anchors.hip(side)] += dref * c;
                    g[anchors.shoulder(side)] -= dref * c;
                }
            }
        }
        total
    }
}

/// Lengths and unit directions of the rigid bones of a pose.
struct RigidSum {
    lengths: Vec<f64>,
    units: Vec<Option<Vector3<f64>>>,
    sum: f64,
}

impl RigidSum {
    fn new(topology: &SkeletonTopology, p: &[Vector3<f64>]) -> Self {
        let mut lengths = Vec::with_capacity(topology.rigid_bones().len());
        let mut units = Vec::with_capacity(lengths.capacity());
        for bone in topology.rigid_bones() {
            let l = &topology.limbs()[bone.limb];
            let v = p[l.distal] - p[l.proximal];
            let n = v.norm();
            lengths.push(n);
            units.push((n >= DEGENERATE_LENGTH).then(|| v / n));
        }
        let sum = lengths.iter().sum();
        Self { lengths, units, sum }
    }

    fn degenerate(&self) -> bool {
        !(self.sum > 1e-9)
    }
}

/// `J_W` of a pose.
pub fn world_cost(pose: &Pose, ctx: &CostContext) -> Result<f64> {
    Ok(ctx.evaluate(&pose.to_flat(), None)?.world)
}

/// `J_S` of a pose.
pub fn los_cost(pose: &Pose, ctx: &CostContext) -> Result<f64> {
    Ok(ctx.evaluate(&pose.to_flat(), None)?.los)
}

/// `J_B` of a pose.
pub fn bone_cost(pose: &Pose, ctx: &CostContext) -> Result<f64> {
    Ok(ctx.evaluate(&pose.to_flat(), None)?.bone)
}

/// `J_M` of a pose.
pub fn multi_bone_cost(pose: &Pose, ctx: &CostContext) -> Result<f64> {
    Ok(ctx.evaluate(&pose.to_flat(), None)?.multi)
}

pub fn total_cost(pose: &Pose, ctx: &CostContext) -> Result<CostBreakdown> {
    ctx.evaluate(&pose.to_flat(), None)
}

/// Analytic gradient of the total cost, falling back to central differences
/// if the analytic path produces non-finite values.
pub fn cost_gradient(pose: &Pose, ctx: &CostContext) -> Result<Vec<f64>> {
    let x = pose.to_flat();
    let mut g = vec![0.0; x.len()];
    match ctx.evaluate(&x, Some(&mut g)) {
        Ok(_) => Ok(g),
        Err(Error::NonFinite { term: "gradient" }) => {
            let g = ctx.numeric_gradient(&x, 1e-6)?;
            if g.iter().all(|v| v.is_finite()) {
                Ok(g)
            } else {
                Err(Error::NonFinite { term: "gradient" })
            }
        }
        Err(e) => Err(e),
    }
}
