//! Streaming refinement of monocular pose-estimator landmarks.
//!
//! Each frame of paired normalized-2D and world-3D landmarks passes through
//! a causal low-pass filter, is turned into camera line-of-sight rays, and is
//! refined by minimizing a cost that combines limb orientations, rays and
//! anthropometric bone ratios. A per-stream Kalman estimator keeps the bone
//! ratios up to date using the previously refined pose.

pub mod bones;
pub mod config;
pub mod cost;
pub mod error;
pub mod eval;
pub mod filter;
pub mod frame;
pub mod geometry;
pub mod lbfgs;
pub mod los;
pub mod pipeline;
pub mod refine;
pub mod stream;
pub mod synth;
pub mod topology;

pub use bones::{BoneEstimator, BoneEstimatorParams, BoneModel, BoneRatios, RatioKind, TorsoAdjustmentModel};
pub use config::PipelineConfig;
pub use cost::{CostBreakdown, CostContext, CostWeights};
pub use error::{Error, Result};
pub use filter::{FilterSpec, FrameFilter};
pub use frame::{CameraModel, LandmarkFrame, Pose};
pub use lbfgs::{ConvergenceReason, SolverSettings};
pub use los::{build_los, LosFrame};
pub use refine::{RefineSession, RefinedFrame, SolveReport, WarmStart};
pub use topology::SkeletonTopology;
