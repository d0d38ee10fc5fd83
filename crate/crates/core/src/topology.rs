//! Skeleton topology: joints, limbs, rigid bones, torso segments and body
//! angles.
//!
//! The topology is data driven. [`SkeletonTopology::blazepose12`] provides
//! the twelve evaluation landmarks (shoulders, elbows, wrists, hips, knees,
//! ankles) and any other joint set can be loaded from a TOML description
//! with the same shape as [`TopologySpec`].

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

/// Rigid bones whose lengths make up the normalization sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoneKind {
    Ulna,
    Humerus,
    Femur,
    Tibia,
    Pelvis,
}

impl BoneKind {
    pub const ALL: [BoneKind; 5] = [
        BoneKind::Ulna,
        BoneKind::Humerus,
        BoneKind::Femur,
        BoneKind::Tibia,
        BoneKind::Pelvis,
    ];

    pub fn is_paired(self) -> bool {
        !matches!(self, BoneKind::Pelvis)
    }
}

/// Torso segments whose apparent length depends on shoulder motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiSegment {
    ShoulderWidth,
    Spine,
    LateralTrunkLeft,
    LateralTrunkRight,
}

impl MultiSegment {
    pub const ALL: [MultiSegment; 4] = [
        MultiSegment::ShoulderWidth,
        MultiSegment::Spine,
        MultiSegment::LateralTrunkLeft,
        MultiSegment::LateralTrunkRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MultiSegment::ShoulderWidth => "shoulder_width",
            MultiSegment::Spine => "spine",
            MultiSegment::LateralTrunkLeft => "lateral_trunk_L",
            MultiSegment::LateralTrunkRight => "lateral_trunk_R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleKind {
    /// `π − ∠(a, vertex, c)`: zero for a straight chain.
    Flexion,
    /// `∠(a, vertex, c)`.
    Interior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Limb {
    pub name: String,
    pub proximal: usize,
    pub distal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidBone {
    pub name: String,
    pub kind: BoneKind,
    pub side: Option<Side>,
    pub limb: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyAngle {
    pub name: String,
    /// `[a, vertex, c]`
    pub joints: [usize; 3],
    pub kind: AngleKind,
}

/// Joints with a fixed anatomical role, needed for torso segments, the
/// humerothoracic elevation and pelvis-origin alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anchors {
    pub left_shoulder: usize,
    pub right_shoulder: usize,
    pub left_elbow: usize,
    pub right_elbow: usize,
    pub left_hip: usize,
    pub right_hip: usize,
}

impl Anchors {
    pub fn shoulder(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left_shoulder,
            Side::Right => self.right_shoulder,
        }
    }

    pub fn elbow(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left_elbow,
            Side::Right => self.right_elbow,
        }
    }

    pub fn hip(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left_hip,
            Side::Right => self.right_hip,
        }
    }
}

// ---------------------------------------------------------------------------
// Serialized form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    #[serde(default = "default_topology_name")]
    pub name: String,
    pub joints: Vec<String>,
    pub anchors: AnchorSpec,
    pub limbs: Vec<LimbSpec>,
    #[serde(default)]
    pub body_angles: Vec<BodyAngleSpec>,
}

fn default_topology_name() -> String {
    "custom".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub left_shoulder: String,
    pub right_shoulder: String,
    pub left_elbow: String,
    pub right_elbow: String,
    pub left_hip: String,
    pub right_hip: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbSpec {
    pub name: String,
    pub proximal: String,
    pub distal: String,
    /// Marks the limb as one of the rigid bones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bone: Option<BoneKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyAngleSpec {
    pub name: String,
    pub joints: [String; 3],
    pub kind: AngleKind,
}

// ---------------------------------------------------------------------------
// Validated topology
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    name: String,
    joints: Vec<String>,
    limbs: Vec<Limb>,
    rigid_bones: Vec<RigidBone>,
    anchors: Anchors,
    body_angles: Vec<BodyAngle>,
}

impl SkeletonTopology {
    /// The twelve evaluation landmarks of the BlazePose body model.
    pub fn blazepose12() -> Self {
        Self::from_spec(&TopologySpec::blazepose12()).expect("built-in topology is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: TopologySpec =
            toml::from_str(text).map_err(|e| Error::Topology(format!("invalid topology file: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_spec(spec: &TopologySpec) -> Result<Self> {
        let name = spec.name.clone();
        let mut seen = BTreeSet::new();
        for j in &spec.joints {
            if !seen.insert(j.as_str()) {
                return Err(Error::Topology(format!("{name}: duplicate joint `{j}`")));
            }
        }
        let index = |joint: &str| -> Result<usize> {
            spec.joints
                .iter()
                .position(|j| j == joint)
                .ok_or_else(|| Error::Topology(format!("{name}: unknown joint `{joint}`")))
        };

        let anchors = Anchors {
            left_shoulder: index(&spec.anchors.left_shoulder)?,
            right_shoulder: index(&spec.anchors.right_shoulder)?,
            left_elbow: index(&spec.anchors.left_elbow)?,
            right_elbow: index(&spec.anchors.right_elbow)?,
            left_hip: index(&spec.anchors.left_hip)?,
            right_hip: index(&spec.anchors.right_hip)?,
        };

        let mut limbs = Vec::with_capacity(spec.limbs.len());
        let mut rigid_bones = Vec::new();
        let mut limb_names = BTreeSet::new();
        for (i, l) in spec.limbs.iter().enumerate() {
            if !limb_names.insert(l.name.as_str()) {
                return Err(Error::Topology(format!("{name}: duplicate limb `{}`", l.name)));
            }
            let proximal = index(&l.proximal)?;
            let distal = index(&l.distal)?;
            if proximal == distal {
                return Err(Error::Topology(format!(
                    "{name}: limb `{}` joins `{}` to itself",
                    l.name, l.proximal
                )));
            }
            limbs.push(Limb {
                name: l.name.clone(),
                proximal,
                distal,
            });
            if let Some(kind) = l.bone {
                rigid_bones.push(RigidBone {
                    name: l.name.clone(),
                    kind,
                    side: l.side,
                    limb: i,
                });
            } else if l.side.is_some() {
                return Err(Error::Topology(format!(
                    "{name}: limb `{}` has a side but is not a rigid bone",
                    l.name
                )));
            }
        }

        // Every paired kind appears exactly once per side; pelvis exactly once, unsided.
        for kind in BoneKind::ALL {
            let sides: Vec<Option<Side>> = rigid_bones
                .iter()
                .filter(|b| b.kind == kind)
                .map(|b| b.side)
                .collect();
            let ok = if kind.is_paired() {
                sides.len() == 2 && sides.contains(&Some(Side::Left)) && sides.contains(&Some(Side::Right))
            } else {
                sides == [None]
            };
            if !ok {
                return Err(Error::Topology(format!(
                    "{name}: rigid bone `{kind:?}` must appear {} (found sides {sides:?})",
                    if kind.is_paired() { "once per side" } else { "exactly once without a side" }
                )));
            }
        }

        let mut body_angles = Vec::with_capacity(spec.body_angles.len());
        for a in &spec.body_angles {
            let joints = [index(&a.joints[0])?, index(&a.joints[1])?, index(&a.joints[2])?];
            if joints[0] == joints[1] || joints[1] == joints[2] {
                return Err(Error::Topology(format!("{name}: body angle `{}` is degenerate", a.name)));
            }
            body_angles.push(BodyAngle {
                name: a.name.clone(),
                joints,
                kind: a.kind,
            });
        }

        Ok(Self {
            name,
            joints: spec.joints.clone(),
            limbs,
            rigid_bones,
            anchors,
            body_angles,
        })
    }

    pub fn to_spec(&self) -> TopologySpec {
        let j = |i: usize| self.joints[i].clone();
        TopologySpec {
            name: self.name.clone(),
            joints: self.joints.clone(),
            anchors: AnchorSpec {
                left_shoulder: j(self.anchors.left_shoulder),
                right_shoulder: j(self.anchors.right_shoulder),
                left_elbow: j(self.anchors.left_elbow),
                right_elbow: j(self.anchors.right_elbow),
                left_hip: j(self.anchors.left_hip),
                right_hip: j(self.anchors.right_hip),
            },
            limbs: self
                .limbs
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let bone = self.rigid_bones.iter().find(|b| b.limb == i);
                    LimbSpec {
                        name: l.name.clone(),
                        proximal: j(l.proximal),
                        distal: j(l.distal),
                        bone: bone.map(|b| b.kind),
                        side: bone.and_then(|b| b.side),
                    }
                })
                .collect(),
            body_angles: self
                .body_angles
                .iter()
                .map(|a| BodyAngleSpec {
                    name: a.name.clone(),
                    joints: [j(a.joints[0]), j(a.joints[1]), j(a.joints[2])],
                    kind: a.kind,
                })
                .collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[String] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j == name)
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub fn limb_index(&self, name: &str) -> Option<usize> {
        self.limbs.iter().position(|l| l.name == name)
    }

    pub fn rigid_bones(&self) -> &[RigidBone] {
        &self.rigid_bones
    }

    pub fn anchors(&self) -> &Anchors {
        &self.anchors
    }

    pub fn body_angles(&self) -> &[BodyAngle] {
        &self.body_angles
    }

    /// `distal − proximal` of the given limb.
    pub fn limb_vector(&self, positions: &[Vector3<f64>], limb: usize) -> Result<Vector3<f64>> {
        let l = self
            .limbs
            .get(limb)
            .ok_or_else(|| Error::Topology(format!("{}: unknown limb id {limb}", self.name)))?;
        let (p, d) = positions
            .get(l.proximal)
            .zip(positions.get(l.distal))
            .ok_or_else(|| Error::Topology(format!("{}: pose lacks joints of limb `{}`", self.name, l.name)))?;
        Ok(d - p)
    }

    pub fn hip_midpoint(&self, positions: &[Vector3<f64>]) -> Vector3<f64> {
        (positions[self.anchors.left_hip] + positions[self.anchors.right_hip]) * 0.5
    }

    pub fn shoulder_midpoint(&self, positions: &[Vector3<f64>]) -> Vector3<f64> {
        (positions[self.anchors.left_shoulder] + positions[self.anchors.right_shoulder]) * 0.5
    }

    /// Start and end point of a torso segment. The spine runs from the hip
    /// midpoint to the midpoint of the glenohumeral (shoulder) landmarks.
    pub fn multi_segment_endpoints(
        &self,
        positions: &[Vector3<f64>],
        segment: MultiSegment,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let a = &self.anchors;
        match segment {
            MultiSegment::ShoulderWidth => (positions[a.left_shoulder], positions[a.right_shoulder]),
            MultiSegment::Spine => (self.hip_midpoint(positions), self.shoulder_midpoint(positions)),
            MultiSegment::LateralTrunkLeft => (positions[a.left_hip], positions[a.left_shoulder]),
            MultiSegment::LateralTrunkRight => (positions[a.right_hip], positions[a.right_shoulder]),
        }
    }

    /// Joint weights `(joint, weight)` forming the start and end point of a
    /// torso segment, so derivatives can be distributed back onto joints.
    pub fn multi_segment_weights(&self, segment: MultiSegment) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let a = &self.anchors;
        match segment {
            MultiSegment::ShoulderWidth => (vec![(a.left_shoulder, 1.0)], vec![(a.right_shoulder, 1.0)]),
            MultiSegment::Spine => (
                vec![(a.left_hip, 0.5), (a.right_hip, 0.5)],
                vec![(a.left_shoulder, 0.5), (a.right_shoulder, 0.5)],
            ),
            MultiSegment::LateralTrunkLeft => (vec![(a.left_hip, 1.0)], vec![(a.left_shoulder, 1.0)]),
            MultiSegment::LateralTrunkRight => (vec![(a.right_hip, 1.0)], vec![(a.right_shoulder, 1.0)]),
        }
    }

    /// Joints touched by at least one limb, rigid bone, torso segment or
    /// body angle.
    pub fn structural_joints(&self) -> BTreeSet<usize> {
        let a = &self.anchors;
        let mut set: BTreeSet<usize> = self.limbs.iter().flat_map(|l| [l.proximal, l.distal]).collect();
        set.extend([a.left_shoulder, a.right_shoulder, a.left_elbow, a.right_elbow, a.left_hip, a.right_hip]);
        set
    }

    /// Unordered limb pairs sharing at least one joint.
    pub fn adjacent_limb_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..self.limbs.len() {
            for j in (i + 1)..self.limbs.len() {
                let (a, b) = (&self.limbs[i], &self.limbs[j]);
                if a.proximal == b.proximal || a.proximal == b.distal || a.distal == b.proximal || a.distal == b.distal {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    pub fn all_limb_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.limbs.len();
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
    }
}

impl Default for SkeletonTopology {
    fn default() -> Self {
        Self::blazepose12()
    }
}

impl TopologySpec {
    pub fn blazepose12() -> Self {
        let s = |v: &str| v.to_string();
        let joints: Vec<String> = [
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_hip",
            "right_hip",
            "left_knee",
            "right_knee",
            "left_ankle",
            "right_ankle",
        ]
        .into_iter()
        .map(s)
        .collect();
        let limb = |name: &str, p: &str, d: &str, bone: Option<BoneKind>, side: Option<Side>| LimbSpec {
            name: s(name),
            proximal: s(p),
            distal: s(d),
            bone,
            side,
        };
        use BoneKind::*;
        use Side::*;
        let limbs = vec![
            limb("humerus_L", "left_shoulder", "left_elbow", Some(Humerus), Some(Left)),
            limb("humerus_R", "right_shoulder", "right_elbow", Some(Humerus), Some(Right)),
            limb("ulna_L", "left_elbow", "left_wrist", Some(Ulna), Some(Left)),
            limb("ulna_R", "right_elbow", "right_wrist", Some(Ulna), Some(Right)),
            limb("femur_L", "left_hip", "left_knee", Some(Femur), Some(Left)),
            limb("femur_R", "right_hip", "right_knee", Some(Femur), Some(Right)),
            limb("tibia_L", "left_knee", "left_ankle", Some(Tibia), Some(Left)),
            limb("tibia_R", "right_knee", "right_ankle", Some(Tibia), Some(Right)),
            limb("pelvis", "left_hip", "right_hip", Some(Pelvis), None),
            limb("shoulder_width", "left_shoulder", "right_shoulder", None, None),
            limb("lateral_trunk_L", "left_hip", "left_shoulder", None, None),
            limb("lateral_trunk_R", "right_hip", "right_shoulder", None, None),
        ];
        let angle = |name: &str, a: &str, v: &str, c: &str, kind: AngleKind| BodyAngleSpec {
            name: s(name),
            joints: [s(a), s(v), s(c)],
            kind,
        };
        use AngleKind::*;
        let body_angles = vec![
            angle("elbow_flexion_L", "left_shoulder", "left_elbow", "left_wrist", Flexion),
            angle("elbow_flexion_R", "right_shoulder", "right_elbow", "right_wrist", Flexion),
            angle("hip_flexion_L", "left_shoulder", "left_hip", "left_knee", Flexion),
            angle("hip_flexion_R", "right_shoulder", "right_hip", "right_knee", Flexion),
            angle("knee_flexion_L", "left_hip", "left_knee", "left_ankle", Flexion),
            angle("knee_flexion_R", "right_hip", "right_knee", "right_ankle", Flexion),
            angle("shoulder_elevation_L", "left_hip", "left_shoulder", "left_elbow", Interior),
            angle("shoulder_elevation_R", "right_hip", "right_shoulder", "right_elbow", Interior),
        ];
        TopologySpec {
            name: s("blazepose12"),
            joints,
            anchors: AnchorSpec {
                left_shoulder: s("left_shoulder"),
                right_shoulder: s("right_shoulder"),
                left_elbow: s("left_elbow"),
                right_elbow: s("right_elbow"),
                left_hip: s("left_hip"),
                right_hip: s("right_hip"),
            },
            limbs,
            body_angles,
        }
    }
}
