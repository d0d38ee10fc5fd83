//! Python bindings: file-level pipeline drivers and a frame-by-frame
//! refinement session.

use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use skelrefine::eval::AlignmentMode;
use skelrefine::pipeline::{
    default_truth_path, evaluate_files, generate_files, refine_file, DiagnosticRecord, RefineFiles, ScriptFile,
};
use skelrefine::{Error, LandmarkFrame, PipelineConfig, RefineSession};

fn to_py_err(e: Error) -> PyErr {
    match e.exit_code() {
        1 | 2 => PyValueError::new_err(e.to_string()),
        _ => match e {
            Error::Io { .. } => PyIOError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        },
    }
}

/// Converts any serializable value to plain Python objects through JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn load_config(path: Option<PathBuf>) -> PyResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(&p).map_err(to_py_err),
        None => Ok(PipelineConfig::default()),
    }
}

/// Resolved configuration as TOML text.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn inspect_config(config: Option<PathBuf>) -> PyResult<String> {
    load_config(config)?.to_toml_string().map_err(to_py_err)
}

/// Writes a synthetic input stream and its ground truth; returns the frame
/// count.
#[pyfunction]
#[pyo3(signature = (output, config=None, truth=None, seed=None))]
fn generate(output: PathBuf, config: Option<PathBuf>, truth: Option<PathBuf>, seed: Option<u64>) -> PyResult<usize> {
    let file = match config {
        Some(p) => ScriptFile::load(&p).map_err(to_py_err)?,
        None => ScriptFile::default(),
    };
    let truth = truth.unwrap_or_else(|| default_truth_path(&output));
    let seq = generate_files(&file, seed, &output, &truth).map_err(to_py_err)?;
    Ok(seq.noisy.len())
}

/// Refines a stream file and returns the run summary.
#[pyfunction]
#[pyo3(signature = (input, output, config=None, diagnostics=None, session=None))]
fn refine<'py>(
    py: Python<'py>,
    input: PathBuf,
    output: PathBuf,
    config: Option<PathBuf>,
    diagnostics: Option<PathBuf>,
    session: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = load_config(config)?;
    let files = RefineFiles {
        input: &input,
        output: &output,
        diagnostics: diagnostics.as_deref(),
        session: session.as_deref(),
    };
    let summary = py.detach(|| refine_file(&config, &files)).map_err(to_py_err)?;
    to_py(py, &summary)
}

/// Scores a refined stream (and optionally the raw input) against truth.
#[pyfunction]
#[pyo3(signature = (input, truth, raw=None, config=None, per_sequence=false))]
fn evaluate<'py>(
    py: Python<'py>,
    input: PathBuf,
    truth: PathBuf,
    raw: Option<PathBuf>,
    config: Option<PathBuf>,
    per_sequence: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let config = load_config(config)?;
    let topology = config.load_topology().map_err(to_py_err)?;
    let mode = if per_sequence {
        AlignmentMode::PerSequence
    } else {
        AlignmentMode::PerFrame
    };
    let report = evaluate_files(&topology, &input, &truth, raw.as_deref(), mode).map_err(to_py_err)?;
    to_py(py, &report)
}

/// Streaming refinement: feed frames in timestamp order, get refined
/// world joints back.
#[pyclass(name = "Session", unsendable)]
struct PySession {
    inner: RefineSession,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PathBuf>) -> PyResult<Self> {
        let config = load_config(config)?;
        let topology = config.load_topology().map_err(to_py_err)?;
        let settings = config.refine_settings().map_err(to_py_err)?;
        let model = config.initial_bone_model().map_err(to_py_err)?;
        let inner = RefineSession::new(topology, settings, model).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Joint names in stream order.
    #[getter]
    fn joints(&self) -> Vec<String> {
        self.inner.topology().joints().to_vec()
    }

    /// Refines one frame. Returns a dict with `pose` (list of `[x, y, z]`
    /// in metres, hip-centred), `refined` and the solver diagnostics.
    #[pyo3(signature = (timestamp, normalized, world, visibility, presence=None))]
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        timestamp: f64,
        normalized: Vec<[f64; 2]>,
        world: Vec<[f64; 3]>,
        visibility: Vec<f64>,
        presence: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let frame = LandmarkFrame {
            timestamp,
            normalized: normalized.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
            world: world.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
            presence: presence.unwrap_or_else(|| vec![1.0; visibility.len()]),
            visibility,
        };
        frame.validate().map_err(PyValueError::new_err)?;
        let out = self.inner.step(&frame).map_err(to_py_err)?;
        let pose: Vec<[f64; 3]> = out.pose.positions().iter().map(|p| [p.x, p.y, p.z]).collect();
        let result = to_py(py, &DiagnosticRecord::new(&out))?;
        result.set_item("pose", pose)?;
        Ok(result)
    }

    /// Current bone-ratio estimates.
    fn ratios<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.bone_model().estimates())
    }

    /// Saves the bone model for reuse in a later session.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.bone_model().save(&path).map_err(to_py_err)
    }
}

#[pymodule]
#[pyo3(name = "skelrefine")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(inspect_config, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PySession>()?;
    Ok(())
}
