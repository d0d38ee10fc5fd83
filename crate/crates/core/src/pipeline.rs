//! File-level drivers shared by the command-line tool and the bindings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bones::{BoneModel, BoneRatios, RatioKind, RejectReason, SegmentRef};
use crate::config::{CameraConfig, PipelineConfig};
use crate::cost::CostBreakdown;
use crate::error::{Error, Result};
use crate::eval::{evaluate_track, AlignmentMode, ComparisonTable, MetricsReport};
use crate::frame::{LandmarkFrame, Pose};
use crate::lbfgs::ConvergenceReason;
use crate::refine::{RefineSession, RefinedFrame, WarmStart};
use crate::stream::{read_stream, write_records, FrameRecord, Role, StreamHeader};
use crate::synth::{generate, MotionScript, SyntheticSequence};
use crate::topology::SkeletonTopology;

/// Timestamp tolerance used when pairing refined and truth frames, seconds.
pub const MATCH_TOLERANCE_S: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub frames: Vec<RefinedFrame>,
    pub model: BoneModel,
    pub resets: usize,
}

impl RefineOutput {
    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| !f.refined).count()
    }
}

/// Refines a whole sequence in one session.
pub fn refine_frames(
    topology: &SkeletonTopology,
    config: &PipelineConfig,
    model: BoneModel,
    frames: &[LandmarkFrame],
) -> Result<RefineOutput> {
    let mut session = RefineSession::new(topology.clone(), config.refine_settings()?, model)?;
    let out = frames.iter().map(|f| session.step(f)).collect::<Result<Vec<_>>>()?;
    Ok(RefineOutput {
        frames: out,
        model: session.bone_model().clone(),
        resets: session.resets(),
    })
}

/// Output record of a refined frame: refined world joints next to the
/// input's normalized coordinates and visibility.
pub fn refined_record(input: &LandmarkFrame, refined: &RefinedFrame) -> FrameRecord {
    let mut frame = input.clone();
    frame.world = refined.pose.positions().to_vec();
    let mut r = FrameRecord::from_frame(&frame, Some(Role::Refined));
    r.refined = Some(refined.refined);
    r
}

/// Per-frame solver and estimator diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub refined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<WarmStart>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<ConvergenceReason>,
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<CostBreakdown>,
    pub monotone: bool,
    pub accepted: Vec<RatioKind>,
    pub rejected: Vec<(SegmentRef, RejectReason)>,
    pub frame_rejected: bool,
    pub ratios: BoneRatios,
    pub stability_counter: u64,
    pub gap_joints: Vec<usize>,
}

impl DiagnosticRecord {
    pub fn new(f: &RefinedFrame) -> Self {
        let r = f.report.as_ref();
        Self {
            t: f.timestamp,
            refined: f.refined,
            failure: f.failure.clone(),
            warm_start: r.map(|r| r.warm_start),
            reason: r.map(|r| r.reason),
            iterations: r.map_or(0, |r| r.iterations),
            evaluations: r.map_or(0, |r| r.evaluations),
            initial_cost: r.map_or(f64::NAN, |r| r.initial_cost),
            final_cost: r.map_or(f64::NAN, |r| r.final_cost),
            breakdown: r.map(|r| r.breakdown),
            monotone: r.is_some_and(|r| r.monotone),
            accepted: f.bone_update.accepted.clone(),
            rejected: f.bone_update.rejected.clone(),
            frame_rejected: f.bone_update.frame_rejected,
            ratios: f.ratios,
            stability_counter: f.stability_counter,
            gap_joints: f.gap_joints.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineRunSummary {
    pub frames: usize,
    pub refined: usize,
    pub passed_through: usize,
    pub skipped_records: usize,
    pub resets: usize,
    pub ratios: BoneRatios,
    pub stability_counter: u64,
}

pub struct RefineFiles<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub diagnostics: Option<&'a Path>,
    /// Overrides the configured session file.
    pub session: Option<&'a Path>,
}

/// Default diagnostics path: `<output stem>.diag.jsonl` next to the output.
pub fn default_diagnostics_path(output: &Path) -> PathBuf {
    sibling(output, "diag.jsonl")
}

/// Default ground-truth path for `generate`: `<output stem>.truth.jsonl`.
pub fn default_truth_path(output: &Path) -> PathBuf {
    sibling(output, "truth.jsonl")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_input(path: &Path, topology: &SkeletonTopology) -> Result<crate::stream::Stream> {
    if !path.exists() {
        return Err(Error::Input(format!("{}: no such file", path.display())));
    }
    read_stream(path, topology)
}

/// Refines an input stream file, writes the refined stream and diagnostics,
/// and saves the bone model to the session file when one is configured.
pub fn refine_file(config: &PipelineConfig, files: &RefineFiles) -> Result<RefineRunSummary> {
    let topology = config.load_topology()?;
    let mut config = config.clone();
    if let Some(s) = files.session {
        config.ratios.session = Some(s.to_path_buf());
        config.ratios.mode = crate::config::RatioMode::Reuse;
    }
    let stream = read_input(files.input, &topology)?;
    let model = config.initial_bone_model()?;
    let out = refine_frames(&topology, &config, model, &stream.frames)?;

    let mut header = StreamHeader::new(&topology);
    if let Some(h) = &stream.header {
        header.metadata = h.metadata.clone();
    }
    let records: Vec<FrameRecord> = stream
        .frames
        .iter()
        .zip(&out.frames)
        .map(|(i, r)| refined_record(i, r))
        .collect();
    write_records(create(files.output)?, &header, &records).map_err(|e| Error::io(files.output, e))?;

    let diag_path = files
        .diagnostics
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_diagnostics_path(files.output));
    let mut w = create(&diag_path)?;
    for f in &out.frames {
        serde_json::to_writer(&mut w, &DiagnosticRecord::new(f))?;
        w.write_all(b"\n").map_err(|e| Error::io(&diag_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&diag_path, e))?;

    if let Some(path) = &config.ratios.session {
        out.model.save(path)?;
    }
    Ok(RefineRunSummary {
        frames: out.frames.len(),
        refined: out.frames.len() - out.failures(),
        passed_through: out.failures(),
        skipped_records: stream.skipped.len(),
        resets: out.resets,
        ratios: out.model.estimates(),
        stability_counter: out.model.stability_counter,
    })
}

/// Contents of a `generate` script file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptFile {
    pub seed: u64,
    pub camera: CameraConfig,
    pub script: MotionScript,
}

impl ScriptFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn sequence_header(topology: &SkeletonTopology, seq: &SyntheticSequence, script: &MotionScript) -> StreamHeader {
    let mut header = StreamHeader::new(topology);
    header.metadata.insert("seed".into(), seq.seed.into());
    if let Ok(v) = serde_json::to_value(script.motion) {
        header.metadata.insert("motion".into(), v);
    }
    if let Ok(v) = serde_json::to_value(seq.ratios) {
        header.metadata.insert("subject_ratios".into(), v);
    }
    header
}

/// Generates a synthetic input stream and its ground truth.
pub fn generate_files(file: &ScriptFile, seed: Option<u64>, output: &Path, truth: &Path) -> Result<SyntheticSequence> {
    let camera = file.camera.model()?;
    let seq = generate(&file.script, &camera, seed.unwrap_or(file.seed))?;
    let topology = crate::synth::topology();
    let header = sequence_header(&topology, &seq, &file.script);
    let input: Vec<FrameRecord> = seq.noisy.iter().map(|f| FrameRecord::from_frame(f, Some(Role::Input))).collect();
    write_records(create(output)?, &header, &input).map_err(|e| Error::io(output, e))?;
    let gt: Vec<FrameRecord> = seq
        .truth
        .iter()
        .map(|f| FrameRecord::from_frame(f, Some(Role::GroundTruth)))
        .collect();
    write_records(create(truth)?, &header, &gt).map_err(|e| Error::io(truth, e))?;
    Ok(seq)
}

pub fn track(frames: &[LandmarkFrame]) -> Vec<(f64, Pose)> {
    frames.iter().map(|f| (f.timestamp, f.world_pose())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub refined: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<MetricsReport>,
    pub table: ComparisonTable,
}

/// Scores a refined stream, and optionally the raw input, against truth.
pub fn evaluate_files(
    topology: &SkeletonTopology,
    refined: &Path,
    truth: &Path,
    raw: Option<&Path>,
    alignment: AlignmentMode,
) -> Result<EvaluationReport> {
    let truth = track(&read_input(truth, topology)?.frames);
    let score = |path: &Path| -> Result<MetricsReport> {
        let est = track(&read_input(path, topology)?.frames);
        evaluate_track(topology, &est, &truth, alignment, MATCH_TOLERANCE_S)
    };
    let raw = raw.map(score).transpose()?;
    let refined = score(refined)?;
    let mut rows = Vec::new();
    if let Some(r) = &raw {
        rows.push(("raw".to_string(), r.summary()));
    }
    rows.push(("refined".to_string(), refined.summary()));
    Ok(EvaluationReport {
        refined,
        raw,
        table: ComparisonTable { rows },
    })
}
