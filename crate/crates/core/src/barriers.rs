//! Barrier terms that keep the iterate away from static solutions, and a
//! detector for histories that have collapsed onto one.
//!
//! A barrier adds `w * b(m)` to the loss, where `m` is a margin measuring the
//! distance from static behaviour and `b` blows up as `m` approaches the
//! buffer depth `d` from above.

use std::fmt;
use std::str::FromStr;

use crate::analysis::TimeSeries;
use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::jets::{Component, Jet2, JetBatch, N_COMP};
use crate::problems::{dual_jets, FormId, Problem, MAX_OUTPUTS};
use crate::sampling::GridLayout;

/// Margins closer than this to the depth count as inside the buffer.
pub const POLE_GUARD: f64 = 1e-12;

/// Finite penalty per unit weight applied while the margin is inside the
/// buffer, in place of the undefined barrier value.
pub const INSIDE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierShape {
    Inverse,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierBasis {
    /// RMS distance of the displacement from the known static solution.
    StaticSolution,
    /// RMS of the static residuals of the form.
    StaticOperator,
    /// RMS norm of the momentum rate.
    Acceleration,
}

impl BarrierShape {
    pub fn name(self) -> &'static str {
        match self {
            Self::Inverse => "inverse",
            Self::Log => "log",
        }
    }
}

impl BarrierBasis {
    pub fn name(self) -> &'static str {
        match self {
            Self::StaticSolution => "static_solution",
            Self::StaticOperator => "static_operator",
            Self::Acceleration => "acceleration",
        }
    }
}

impl FromStr for BarrierShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inverse" | "i" => Ok(Self::Inverse),
            "log" | "l" => Ok(Self::Log),
            _ => Err(Error::invalid(format!("unknown barrier shape {s:?}"))),
        }
    }
}

impl FromStr for BarrierBasis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "static_solution" | "s" => Ok(Self::StaticSolution),
            "static_operator" | "p" => Ok(Self::StaticOperator),
            "acceleration" | "a" => Ok(Self::Acceleration),
            _ => Err(Error::invalid(format!("unknown barrier basis {s:?}"))),
        }
    }
}

impl fmt::Display for BarrierShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for BarrierBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub shape: BarrierShape,
    pub basis: BarrierBasis,
    pub depth: f64,
    pub weight: f64,
}

impl BarrierSpec {
    pub fn new(shape: BarrierShape, basis: BarrierBasis, depth: f64, weight: f64) -> Result<Self> {
        if !(depth >= 0.0 && depth.is_finite()) || !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!(
                "barrier depth and weight must be finite and >= 0, got {depth}, {weight}"
            )));
        }
        Ok(Self {
            shape,
            basis,
            depth,
            weight,
        })
    }

    pub fn enabled(&self) -> bool {
        self.weight > 0.0
    }
}

fn gap(x: f64, depth: f64) -> Result<f64> {
    if !x.is_finite() || x <= depth + POLE_GUARD {
        return Err(Error::InsideBuffer { margin: x, depth });
    }
    Ok(x - depth)
}

/// `1/(x - d)` or `-log(x - d)`.
pub fn barrier_value(shape: BarrierShape, x: f64, depth: f64) -> Result<f64> {
    let g = gap(x, depth)?;
    Ok(match shape {
        BarrierShape::Inverse => 1.0 / g,
        BarrierShape::Log => -g.ln(),
    })
}

/// Derivative of [`barrier_value`] in `x`.
pub fn barrier_slope(shape: BarrierShape, x: f64, depth: f64) -> Result<f64> {
    let g = gap(x, depth)?;
    Ok(match shape {
        BarrierShape::Inverse => -1.0 / (g * g),
        BarrierShape::Log => -1.0 / g,
    })
}

/// `J + w b(m)`; a disabled barrier returns `J` whatever the margin.
pub fn augment_loss(j: f64, spec: &BarrierSpec, margin: f64) -> Result<f64> {
    if !spec.enabled() {
        return Ok(j);
    }
    Ok(j + spec.weight * barrier_value(spec.shape, margin, spec.depth)?)
}

/// Euclidean norm of a momentum-rate vector at one point.
pub fn acceleration_norm(p_dot: &[f64]) -> f64 {
    p_dot.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One margin sample: its squared contribution and the sensitivities of that
/// square to jet components `(output, component)`.
type Contribution = (f64, Vec<(usize, Component, f64)>);

/// Jet components holding the momentum rate of `form`.
fn acceleration_slots(form: FormId) -> Vec<(usize, Component)> {
    match form.momentum_outputs() {
        Some((px, None)) => vec![(px, Component::Dt)],
        Some((px, Some(py))) => vec![(px, Component::Dt), (py, Component::Dt)],
        None => vec![(0, Component::Dtt)],
    }
}

fn point_contribution<const N: usize>(
    basis: BarrierBasis,
    problem: &Problem,
    batch: &JetBatch,
    point: (f64, f64),
    p: usize,
) -> Result<Contribution> {
    let form = problem.form;
    match basis {
        BarrierBasis::Acceleration => {
            let mut sq = 0.0;
            let mut sens = Vec::new();
            for (o, c) in acceleration_slots(form) {
                let a = batch.component(o, c)[p];
                sq += a * a;
                sens.push((o, c, 2.0 * a));
            }
            Ok((sq, sens))
        }
        BarrierBasis::StaticSolution => {
            let ust = problem
                .static_displacement(point.0)
                .ok_or_else(|| Error::invalid("static-solution barrier needs a bar preset with constant load"))?;
            let d = batch.component(0, Component::V)[p] - ust;
            Ok((d * d, vec![(0, Component::V, 2.0 * d)]))
        }
        BarrierBasis::StaticOperator => {
            let n_out = form.n_outputs();
            let mut jets = [Jet2::<Dual<N>>::default(); MAX_OUTPUTS];
            dual_jets(batch, p, &mut jets);
            for j in jets.iter_mut().take(n_out) {
                j.dt = Dual::constant(0.0);
                j.dtt = Dual::constant(0.0);
            }
            let (fx, fy) = (
                problem.load_x.at(point.0, point.1),
                problem.load_y.at(point.0, point.1),
            );
            let mut res = [Dual::<N>::constant(0.0); MAX_OUTPUTS];
            form.residuals(&jets[..n_out], problem.slenderness, fx, fy, &mut res)
                .map_err(|e| e.at_point(p))?;
            let mut sq = 0.0;
            let mut grad = [0.0; N];
            for r in &res[..form.n_residuals()] {
                sq += r.v * r.v;
                for (g, d) in grad.iter_mut().zip(&r.g) {
                    *g += 2.0 * r.v * d;
                }
            }
            let sens = grad
                .iter()
                .enumerate()
                .take(n_out * N_COMP)
                .filter(|(_, g)| **g != 0.0)
                .map(|(i, &g)| (i / N_COMP, Component::ALL[i % N_COMP], g))
                .collect();
            Ok((sq, sens))
        }
    }
}

/// Margin over the interior points and, if `adjoint` is given, the
/// sensitivity of the margin scaled by `scale` added into it.
fn margin_impl<const N: usize>(
    basis: BarrierBasis,
    problem: &Problem,
    batch: &JetBatch,
    points: &[(f64, f64)],
    layout: &GridLayout,
    adjoint: Option<(&mut JetBatch, f64)>,
) -> Result<f64> {
    let interior = layout.interior.clone();
    if interior.is_empty() {
        return Err(Error::invalid("grid has no interior points"));
    }
    let n = interior.len() as f64;
    let mut total = 0.0;
    let mut sens = Vec::new();
    for p in interior {
        let (sq, s) = point_contribution::<N>(basis, problem, batch, points[p], p)?;
        total += sq;
        if adjoint.is_some() {
            sens.push((p, s));
        }
    }
    let m = (total / n).sqrt();
    if let Some((adj, scale)) = adjoint {
        // dm = d(sum sq) / (2 n m)
        if m > 0.0 && scale != 0.0 {
            let k = scale / (2.0 * n * m);
            for (p, s) in sens {
                for (o, c, g) in s {
                    adj.component_mut(o, c)[p] += k * g;
                }
            }
        }
    }
    Ok(m)
}

fn dispatch(
    basis: BarrierBasis,
    problem: &Problem,
    batch: &JetBatch,
    points: &[(f64, f64)],
    layout: &GridLayout,
    adjoint: Option<(&mut JetBatch, f64)>,
) -> Result<f64> {
    match problem.form.n_outputs() {
        1 => margin_impl::<5>(basis, problem, batch, points, layout, adjoint),
        2 => margin_impl::<10>(basis, problem, batch, points, layout, adjoint),
        3 => margin_impl::<15>(basis, problem, batch, points, layout, adjoint),
        9 => margin_impl::<45>(basis, problem, batch, points, layout, adjoint),
        11 => margin_impl::<55>(basis, problem, batch, points, layout, adjoint),
        n => unreachable!("no form has {n} outputs"),
    }
}

/// Margin of the batch state for `basis`, aggregated as an RMS over the
/// interior points.
pub fn margin(
    basis: BarrierBasis,
    problem: &Problem,
    batch: &JetBatch,
    points: &[(f64, f64)],
    layout: &GridLayout,
) -> Result<f64> {
    dispatch(basis, problem, batch, points, layout, None)
}

/// Outcome of adding a barrier to the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierTerm {
    pub margin: f64,
    /// `w b(m)`, or the finite stand-in while inside the buffer.
    pub penalty: f64,
    pub inside: bool,
}

/// Evaluates the barrier and accumulates its jet adjoint.
///
/// Inside the buffer the barrier is undefined. The term then becomes
/// `w * INSIDE_PENALTY` with slope `-w * INSIDE_PENALTY` in the margin, which
/// pushes the margin back out, and `inside` is set.
pub fn barrier_term(
    spec: &BarrierSpec,
    problem: &Problem,
    batch: &JetBatch,
    points: &[(f64, f64)],
    layout: &GridLayout,
    adjoint: &mut JetBatch,
) -> Result<BarrierTerm> {
    let m = margin(spec.basis, problem, batch, points, layout)?;
    if !spec.enabled() {
        return Ok(BarrierTerm {
            margin: m,
            penalty: 0.0,
            inside: false,
        });
    }
    let (penalty, slope, inside) = match barrier_value(spec.shape, m, spec.depth) {
        Ok(b) => (spec.weight * b, spec.weight * barrier_slope(spec.shape, m, spec.depth)?, false),
        Err(Error::InsideBuffer { .. }) => {
            let p = spec.weight * INSIDE_PENALTY;
            (p, -p, true)
        }
        Err(e) => return Err(e),
    };
    dispatch(spec.basis, problem, batch, points, layout, Some((adjoint, slope)))?;
    Ok(BarrierTerm {
        margin: m,
        penalty,
        inside,
    })
}

/// Result of [`detect_static`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticDetection {
    pub flagged: bool,
    /// Time at which the history first covers 90% of its net change.
    pub onset: f64,
}

/// Flags a history that jumps early and then stays flat.
///
/// The onset is the first time `|v - v0|` reaches 90% of `|v_end - v0|`. The
/// history is flagged when the samples from the onset on have a standard
/// deviation below 2% of the peak-to-peak range and the onset lies in the
/// first 30% of the horizon. Every quantity is relative, so the test is
/// unchanged by affine rescaling of the values.
pub fn detect_static(series: &TimeSeries) -> StaticDetection {
    let (t, v) = (series.times(), series.values());
    let (v0, v_end) = (v[0], *v.last().unwrap());
    let target = 0.9 * (v_end - v0).abs();
    let k = v.iter().position(|x| (x - v0).abs() >= target).unwrap_or(0);
    let onset = t[k];
    let tail = &v[k..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let std = (tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    let ptp = series.peak_to_peak();
    let (t0, t1) = series.span();
    let flagged = ptp > 0.0 && std < 0.02 * ptp && onset - t0 < 0.3 * (t1 - t0);
    StaticDetection { flagged, onset }
}
