//! Limited-memory BFGS with a strong-Wolfe line search and optional box
//! bounds.
//!
//! Bounds are handled with an active set: coordinates sitting on a bound
//! whose negative gradient points outward are frozen for the iteration, and
//! the line search never steps past the first bound it meets along the
//! search direction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable scalar function of `dim()` variables.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Returns `f(x)` and writes `∇f(x)` into `grad`.
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop when the largest projected-gradient component is at most this.
    pub gradient_tolerance: f64,
    /// Stop when `(f_k − f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)` is at most this.
    pub cost_tolerance: f64,
    pub history_size: usize,
    pub max_line_search_steps: usize,
    /// Half-width of an optional box around the starting point, meters.
    pub bound_radius: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            cost_tolerance: 1e-9,
            history_size: 10,
            max_line_search_steps: 20,
            bound_radius: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("solver.max_iterations must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.cost_tolerance > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.history_size == 0 || self.max_line_search_steps == 0 {
            return Err(Error::Config("solver.history_size and max_line_search_steps must be positive".into()));
        }
        if let Some(r) = self.bound_radius {
            if !(r > 0.0) {
                return Err(Error::Config("solver.bound_radius must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceReason {
    Gradient,
    CostDelta,
    IterationCap,
    /// No step along the search direction decreased the cost.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: ConvergenceReason,
    /// Cost after every accepted step, starting with the initial cost.
    pub trace: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

struct Problem<'o, O: Objective> {
    objective: &'o mut O,
    bounds: Option<&'o [(f64, f64)]>,
    evaluations: usize,
}

impl<O: Objective> Problem<'_, O> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evaluations += 1;
        match self.objective.evaluate(x, g) {
            Ok(f) if f.is_finite() && g.iter().all(|v| v.is_finite()) => f,
            _ => f64::INFINITY,
        }
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(b) = self.bounds {
            for (v, (lo, hi)) in x.iter_mut().zip(b) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    /// Largest step keeping `x + α·d` inside the box.
    fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let Some(b) = self.bounds else { return f64::INFINITY };
        let mut m = f64::INFINITY;
        for ((xi, di), (lo, hi)) in x.iter().zip(d).zip(b) {
            if *di > 0.0 {
                m = m.min((hi - xi) / di);
            } else if *di < 0.0 {
                m = m.min((lo - xi) / di);
            }
        }
        m.max(0.0)
    }

    fn point(&mut self, x: &[f64], d: &[f64], alpha: f64, scratch: &mut [f64]) -> Point {
        for ((s, xi), di) in scratch.iter_mut().zip(x).zip(d) {
            *s = xi + alpha * di;
        }
        self.project(scratch);
        let mut g = vec![0.0; x.len()];
        let f = self.eval(scratch, &mut g);
        let dphi = dot(&g, d);
        Point { alpha, f, g, dphi }
    }

    /// Strong-Wolfe line search; falls back to any Armijo point it found.
    fn line_search(&mut self, x: &[f64], f0: f64, dphi0: f64, d: &[f64], alpha0: f64, max_steps: usize) -> Option<Point> {
        let amax = self.max_step(x, d);
        if amax <= 0.0 {
            return None;
        }
        let mut scratch = vec![0.0; x.len()];
        let mut prev = Point {
            alpha: 0.0,
            f: f0,
            g: Vec::new(),
            dphi: dphi0,
        };
        let mut alpha = alpha0.min(amax);
        let armijo = |p: &Point| p.f <= f0 + C1 * p.alpha * dphi0;
        for i in 0..max_steps {
            let cur = self.point(x, d, alpha, &mut scratch);
            if !armijo(&cur) || (i > 0 && cur.f >= prev.f) {
                return self.zoom(x, f0, dphi0, d, prev, cur, max_steps, &mut scratch);
            }
            if cur.dphi.abs() <= -C2 * dphi0 {
                return Some(cur);
            }
            if cur.dphi >= 0.0 {
                return self.zoom(x, f0, dphi0, d, cur, prev, max_steps, &mut scratch);
            }
            if alpha >= amax {
                return Some(cur);
            }
            prev = cur;
            alpha = (2.0 * alpha).min(amax);
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    #[allow(clippy::too_many_arguments)]
    fn zoom(
        &mut self,
        x: &[f64],
        f0: f64,
        dphi0: f64,
        d: &[f64],
        mut lo: Point,
        mut hi: Point,
        max_steps: usize,
        scratch: &mut [f64],
    ) -> Option<Point> {
        for _ in 0..max_steps {
            let alpha = interpolate(&lo, &hi);
            let cur = self.point(x, d, alpha, scratch);
            if cur.f > f0 + C1 * alpha * dphi0 || cur.f >= lo.f {
                hi = cur;
            } else {
                if cur.dphi.abs() <= -C2 * dphi0 {
                    return Some(cur);
                }
                if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
            if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1e-16) {
                break;
            }
        }
        (lo.alpha > 0.0 && lo.f < f0).then_some(lo)
    }
}

/// Safeguarded cubic interpolation between two bracketing points.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let width = right - left;
    let bisect = 0.5 * (a + b);
    if !hi.f.is_finite() || hi.g.is_empty() || lo.g.is_empty() {
        return bisect;
    }
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    if t.is_finite() && t > left + 0.1 * width && t < right - 0.1 * width {
        t
    } else {
        bisect
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gradient with components frozen by active bounds set to zero.
fn projected_gradient(x: &[f64], g: &[f64], bounds: Option<&[(f64, f64)]>) -> Vec<f64> {
    let mut pg = g.to_vec();
    if let Some(b) = bounds {
        for ((v, xi), (lo, hi)) in pg.iter_mut().zip(x).zip(b) {
            if (*xi <= *lo && *v > 0.0) || (*xi >= *hi && *v < 0.0) {
                *v = 0.0;
            }
        }
    }
    pg
}

/// Zeroes the search direction on variables held at a bound by the
/// gradient, and on variables it would push further out of the box.
fn freeze_active(d: &mut [f64], x: &[f64], g: &[f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (((di, xi), gi), (lo, hi)) in d.iter_mut().zip(x).zip(g).zip(b) {
            let at_lo = *xi <= *lo && (*gi > 0.0 || *di < 0.0);
            let at_hi = *xi >= *hi && (*gi < 0.0 || *di > 0.0);
            if at_lo || at_hi {
                *di = 0.0;
            }
        }
    }
}

/// Two-loop recursion: `−H·g` from the stored curvature pairs.
fn direction(pg: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = pg.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Minimizes `objective` from `x0`. With bounds, `x0` is projected into the
/// box first. The returned cost never exceeds the initial cost.
pub fn minimize<O: Objective>(
    objective: &mut O,
    x0: &[f64],
    settings: &SolverSettings,
    bounds: Option<&[(f64, f64)]>,
) -> Result<Minimum> {
    let n = objective.dim();
    if x0.len() != n {
        return Err(Error::Contract(format!("start point has {} entries, objective expects {n}", x0.len())));
    }
    if let Some(b) = bounds {
        if b.len() != n || b.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Contract("bounds must have one ordered pair per variable".into()));
        }
    }
    let mut problem = Problem {
        objective,
        bounds,
        evaluations: 0,
    };
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = problem.eval(&x, &mut g);
    if !f.is_finite() {
        // Report the objective's own error when it has one.
        let mut scratch = vec![0.0; n];
        problem.objective.evaluate(&x, &mut scratch)?;
        return Err(Error::NonFinite { term: "objective" });
    }
    let initial = f;
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.history_size);
    let mut reason = ConvergenceReason::IterationCap;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        let pg = projected_gradient(&x, &g, bounds);
        if inf_norm(&pg) <= settings.gradient_tolerance {
            reason = ConvergenceReason::Gradient;
            break;
        }
        let mut d = direction(&pg, &history);
        freeze_active(&mut d, &x, &g, bounds);
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            history.clear();
            d = pg.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
        }
        let alpha0 = if history.is_empty() { 1.0 / inf_norm(&pg).max(dot(&pg, &pg).sqrt()) } else { 1.0 };
        let mut step = problem.line_search(&x, f, dphi0, &d, alpha0, settings.max_line_search_steps);
        if step.is_none() && !history.is_empty() {
            history.clear();
            d = pg.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
            let alpha0 = 1.0 / dot(&pg, &pg).sqrt();
            step = problem.line_search(&x, f, dphi0, &d, alpha0, settings.max_line_search_steps);
        }
        let Some(p) = step else {
            reason = ConvergenceReason::LineSearchStalled;
            break;
        };
        iterations += 1;

        let mut x_new: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + p.alpha * di).collect();
        problem.project(&mut x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if history.len() == settings.history_size {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let f_old = f;
        x = x_new;
        f = p.f;
        g = p.g;
        trace.push(f);
        if (f_old - f) / f_old.abs().max(f.abs()).max(1.0) <= settings.cost_tolerance {
            reason = ConvergenceReason::CostDelta;
            break;
        }
    }
    if reason == ConvergenceReason::IterationCap && inf_norm(&projected_gradient(&x, &g, bounds)) <= settings.gradient_tolerance {
        reason = ConvergenceReason::Gradient;
    }
    Ok(Minimum {
        x,
        cost: f,
        initial_cost: initial,
        iterations,
        evaluations: problem.evaluations,
        reason,
        trace,
    })
}
