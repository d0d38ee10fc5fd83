//! Line-delimited JSON landmark streams.
//!
//! Every non-blank line is one JSON object with a `kind` field. An optional
//! first `header` record names the joints; every `frame` record carries one
//! timestamped frame. Missing coordinates are written as `null`.
//!
//! ```text
//! {"kind":"header","format":"skelrefine-landmarks","version":1,"joints":["left_shoulder",...],"metadata":{"seed":7}}
//! {"kind":"frame","t":0.0,"role":"input","normalized":[[0.51,0.32],...],"world":[[0.18,-0.49,0.02],...],"visibility":[0.98,...],"presence":[1.0,...]}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::LandmarkFrame;
use crate::topology::SkeletonTopology;

pub const FORMAT: &str = "skelrefine-landmarks";
pub const VERSION: u32 = 1;

/// A coordinate that serializes non-finite values as `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Num(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    GroundTruth,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub format: String,
    pub version: u32,
    pub joints: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl StreamHeader {
    pub fn new(topology: &SkeletonTopology) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            joints: topology.joints().to_vec(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub normalized: Vec<[Num; 2]>,
    pub world: Vec<[Num; 3]>,
    pub visibility: Vec<f64>,
    pub presence: Vec<f64>,
    /// Only on refined output: `false` marks a passed-through frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<bool>,
}

impl FrameRecord {
    pub fn from_frame(frame: &LandmarkFrame, role: Option<Role>) -> Self {
        Self {
            t: frame.timestamp,
            role,
            normalized: frame.normalized.iter().map(|v| [Num(v.x), Num(v.y)]).collect(),
            world: frame.world.iter().map(|v| [Num(v.x), Num(v.y), Num(v.z)]).collect(),
            visibility: frame.visibility.clone(),
            presence: frame.presence.clone(),
            refined: None,
        }
    }

    pub fn to_frame(&self) -> LandmarkFrame {
        LandmarkFrame {
            timestamp: self.t,
            normalized: self.normalized.iter().map(|[x, y]| Vector2::new(x.0, y.0)).collect(),
            world: self.world.iter().map(|[x, y, z]| Vector3::new(x.0, y.0, z.0)).collect(),
            visibility: self.visibility.clone(),
            presence: self.presence.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header(StreamHeader),
    Frame(FrameRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stream {
    pub header: Option<StreamHeader>,
    pub frames: Vec<LandmarkFrame>,
    pub roles: Vec<Option<Role>>,
    /// `refined` flags of refined-output records.
    pub refined: Vec<Option<bool>>,
    pub skipped: Vec<SkippedRecord>,
}

/// Parses and validates a stream against a topology.
pub fn parse_stream<R: BufRead>(reader: R, topology: &SkeletonTopology) -> Result<Stream> {
    let mut out = Stream::default();
    let n = topology.joint_count();
    let mut last_t = f64::NEG_INFINITY;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Input(format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        match record {
            Record::Header(h) => {
                if out.header.is_some() || !out.frames.is_empty() {
                    return Err(Error::Record {
                        line: line_no,
                        message: "header must be the first record".into(),
                    });
                }
                if h.format != FORMAT || h.version != VERSION {
                    return Err(Error::Record {
                        line: line_no,
                        message: format!("unsupported stream format {} v{}", h.format, h.version),
                    });
                }
                if h.joints != topology.joints() {
                    return Err(Error::Record {
                        line: line_no,
                        message: format!("header joints do not match topology `{}`", topology.name()),
                    });
                }
                out.header = Some(h);
            }
            Record::Frame(r) => {
                if r.world.len() != n {
                    return Err(Error::Record {
                        line: line_no,
                        message: format!(
                            "frame has {} joints but topology `{}` has {n}",
                            r.world.len(),
                            topology.name()
                        ),
                    });
                }
                let frame = r.to_frame();
                frame.validate().map_err(|message| Error::Record { line: line_no, message })?;
                if frame.timestamp <= last_t {
                    let reason = format!("timestamp {} does not increase (previous {last_t})", frame.timestamp);
                    log::warn!("line {line_no}: {reason}; record skipped");
                    out.skipped.push(SkippedRecord { line: line_no, reason });
                    continue;
                }
                last_t = frame.timestamp;
                out.frames.push(frame);
                out.roles.push(r.role);
                out.refined.push(r.refined);
            }
        }
    }
    Ok(out)
}

pub fn read_stream(path: &Path, topology: &SkeletonTopology) -> Result<Stream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_stream(BufReader::new(file), topology).map_err(|e| match e {
        Error::Record { line, message } => Error::Record {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Writes a header followed by one record per frame.
pub fn write_records<W: Write>(mut w: W, header: &StreamHeader, records: &[FrameRecord]) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, &Record::Header(header.clone()))?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, &Record::Frame(r.clone()))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_stream<W: Write>(w: W, header: &StreamHeader, frames: &[LandmarkFrame], role: Option<Role>) -> std::io::Result<()> {
    let records: Vec<FrameRecord> = frames.iter().map(|f| FrameRecord::from_frame(f, role)).collect();
    write_records(w, header, &records)
}

pub fn save_stream(path: &Path, header: &StreamHeader, frames: &[LandmarkFrame], role: Option<Role>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_stream(BufWriter::new(file), header, frames, role).map_err(|e| Error::io(path, e))
}
