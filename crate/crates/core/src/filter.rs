//! Causal Butterworth low-pass filtering of landmark coordinates.
//!
//! Coefficients come from the bilinear transform with the cutoff prewarped,
//! arranged as cascaded second-order sections in transposed direct form II.
//! Every coordinate channel of a frame runs through an identical cascade so
//! all fused signals see the same group delay.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::LandmarkFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 4,
            cutoff_hz: 10.0,
            sample_hz: 30.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        if !(self.sample_hz > 0.0 && self.sample_hz.is_finite()) {
            return Err(Error::Config(format!("sample rate {} Hz must be positive", self.sample_hz)));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < 0.5 * self.sample_hz) {
            return Err(Error::Config(format!(
                "cutoff {} Hz must lie in (0, {}) (Nyquist)",
                self.cutoff_hz,
                0.5 * self.sample_hz
            )));
        }
        Ok(())
    }
}

/// One normalized second-order section:
/// `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// `|H(e^{jω})|` at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_hz;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        self.sections
            .iter()
            .map(|q| {
                let nr = q.b[0] + q.b[1] * c1 + q.b[2] * c2;
                let ni = -(q.b[1] * s1 + q.b[2] * s2);
                let dr = 1.0 + q.a[0] * c1 + q.a[1] * c2;
                let di = -(q.a[0] * s1 + q.a[1] * s2);
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }
}

/// Butterworth low-pass as cascaded second-order sections with unity DC gain.
pub fn design_butterworth(spec: &FilterSpec) -> Result<Sos> {
    spec.validate()?;
    let n = spec.order;
    let k = (PI * spec.cutoff_hz / spec.sample_hz).tan();
    let mut sections = Vec::with_capacity(n.div_ceil(2));

    for i in 0..n / 2 {
        // Analog section s² + d·s + 1 for the conjugate pole pair i.
        let d = 2.0 * (PI * (2 * i + 1) as f64 / (2 * n) as f64).sin();
        let a0 = 1.0 + d * k + k * k;
        let g = k * k / a0;
        sections.push(Biquad {
            b: [g, 2.0 * g, g],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - d * k + k * k) / a0],
        });
    }
    if n % 2 == 1 {
        let a0 = 1.0 + k;
        sections.push(Biquad {
            b: [k / a0, k / a0, 0.0],
            a: [(k - 1.0) / a0, 0.0],
        });
    }
    Ok(Sos { sections })
}

/// Recursive memory of one channel: two delay registers per section.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    registers: Vec<[f64; 2]>,
    seeded: bool,
    last_output: Option<f64>,
}

impl FilterState {
    pub fn new(sections: usize) -> Self {
        Self {
            registers: vec![[0.0; 2]; sections],
            seeded: false,
            last_output: None,
        }
    }

    /// Zero memory; the next finite sample seeds the steady state again.
    pub fn reset(&mut self) {
        self.registers.iter_mut().for_each(|r| *r = [0.0; 2]);
        self.seeded = false;
        self.last_output = None;
    }

    pub fn registers(&self) -> &[[f64; 2]] {
        &self.registers
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filtered {
    pub value: f64,
    /// The input sample was non-finite; `value` holds the previous output.
    pub gap: bool,
}

/// A single coordinate channel.
#[derive(Debug, Clone)]
pub struct ChannelFilter {
    sos: Arc<Sos>,
    state: FilterState,
}

impl ChannelFilter {
    pub fn new(sos: Arc<Sos>) -> Self {
        let state = FilterState::new(sos.sections.len());
        Self { sos, state }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// One causal step. The first finite sample after a reset initializes
    /// the memory as if that sample had been held forever.
    pub fn process(&mut self, sample: f64) -> Filtered {
        if !sample.is_finite() {
            return Filtered {
                value: self.state.last_output.unwrap_or(f64::NAN),
                gap: true,
            };
        }
        if !self.state.seeded {
            self.seed(sample);
        }
        let mut x = sample;
        for (q, r) in self.sos.sections.iter().zip(self.state.registers.iter_mut()) {
            let y = q.b[0] * x + r[0];
            r[0] = q.b[1] * x - q.a[0] * y + r[1];
            r[1] = q.b[2] * x - q.a[1] * y;
            x = y;
        }
        self.state.last_output = Some(x);
        Filtered { value: x, gap: false }
    }

    fn seed(&mut self, level: f64) {
        let mut x = level;
        for (q, r) in self.sos.sections.iter().zip(self.state.registers.iter_mut()) {
            let y = q.dc_gain() * x;
            r[1] = q.b[2] * x - q.a[1] * y;
            r[0] = y - q.b[0] * x;
            x = y;
        }
        self.state.seeded = true;
    }
}

/// Per-frame report of missing samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapReport {
    /// Joints with at least one held (non-finite) channel.
    pub joints: Vec<usize>,
}

/// Filters every normalized (x, y) and world (x, y, z) channel of a stream.
#[derive(Debug, Clone)]
pub struct FrameFilter {
    normalized: Vec<[ChannelFilter; 2]>,
    world: Vec<[ChannelFilter; 3]>,
}

impl FrameFilter {
    pub fn new(spec: &FilterSpec, joints: usize) -> Result<Self> {
        let sos = Arc::new(design_butterworth(spec)?);
        let ch = || ChannelFilter::new(Arc::clone(&sos));
        Ok(Self {
            normalized: (0..joints).map(|_| [ch(), ch()]).collect(),
            world: (0..joints).map(|_| [ch(), ch(), ch()]).collect(),
        })
    }

    pub fn reset(&mut self) {
        for c in self.normalized.iter_mut().flatten() {
            c.reset();
        }
        for c in self.world.iter_mut().flatten() {
            c.reset();
        }
    }

    /// Returns the filtered frame; visibility and presence pass through.
    pub fn apply(&mut self, frame: &LandmarkFrame) -> (LandmarkFrame, GapReport) {
        let mut gaps = GapReport::default();
        let mut out = frame.clone();
        for (j, (n, f)) in frame.normalized.iter().zip(self.normalized.iter_mut()).enumerate() {
            let (x, y) = (f[0].process(n.x), f[1].process(n.y));
            out.normalized[j] = Vector2::new(x.value, y.value);
            if x.gap || y.gap {
                gaps.joints.push(j);
            }
        }
        for (j, (w, f)) in frame.world.iter().zip(self.world.iter_mut()).enumerate() {
            let (x, y, z) = (f[0].process(w.x), f[1].process(w.y), f[2].process(w.z));
            out.world[j] = Vector3::new(x.value, y.value, z.value);
            if (x.gap || y.gap || z.gap) && gaps.joints.last() != Some(&j) {
                gaps.joints.push(j);
            }
        }
        (out, gaps)
    }
}
