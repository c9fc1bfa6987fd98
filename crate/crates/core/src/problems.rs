//! Physical problems: non-dimensional scales, the residual systems of each
//! operator-split form, boundary and initial constraints, and loss assembly.
//!
//! All quantities here are non-dimensional: `x` in `[0, 1]`, `t` in
//! `[0, T]`, loads and forces scaled by the bending stiffness.

use std::fmt;
use std::str::FromStr;

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};
use crate::jets::{Component, Jet2, JetBatch, N_COMP};
use crate::sampling::GridLayout;

/// Largest output count of any form (rod form 4).
pub const MAX_OUTPUTS: usize = 11;

/// Extension values below this magnitude are treated as a collapsed element.
pub const MIN_EXTENSION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimScales {
    /// `A L^2 / I`.
    pub slenderness: f64,
    /// Inverse of the slenderness.
    pub rotundness: f64,
    /// `L^2 sqrt(rho A / (E I))`, seconds.
    pub time_scale: f64,
    /// `L^2 / (E I)`, multiplies a concentrated force.
    pub force_scale: f64,
    /// `L / (E I)`, multiplies a moment.
    pub moment_scale: f64,
    /// `L^3 / (E I)`, multiplies a distributed force.
    pub dist_force_scale: f64,
}

/// Scales from Young's modulus, second moment of area, cross-section area,
/// mass density and length.
pub fn nondimensionalize(e: f64, i: f64, a: f64, rho: f64, l: f64) -> Result<NondimScales> {
    for (name, v) in [("E", e), ("I", i), ("A", a), ("rho", rho), ("L", l)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let ei = e * i;
    let slenderness = a * l * l / i;
    Ok(NondimScales {
        slenderness,
        rotundness: 1.0 / slenderness,
        time_scale: l * l * (rho * a / ei).sqrt(),
        force_scale: l * l / ei,
        moment_scale: l / ei,
        dist_force_scale: l * l * l / ei,
    })
}

/// The residual systems. Bar forms describe small axial motion; rod forms
/// the geometrically exact Kirchhoff rod.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormId {
    /// `s u_xx + f_x = u_tt`.
    BarF1,
    /// Time derivative split through the momentum `p_x`.
    BarF2a,
    /// Space derivative split through the strain `zeta_u`.
    BarF2b,
    /// Both splits.
    BarF3,
    /// Rod, both splits, extension `c` as an output.
    RodF3,
    /// Rod, momentum balance with force components as outputs.
    RodF4,
}

impl FormId {
    pub const ALL: [FormId; 6] = [
        FormId::BarF1,
        FormId::BarF2a,
        FormId::BarF2b,
        FormId::BarF3,
        FormId::RodF3,
        FormId::RodF4,
    ];

    pub fn is_rod(self) -> bool {
        matches!(self, FormId::RodF3 | FormId::RodF4)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            FormId::BarF1 => "F1",
            FormId::BarF2a => "F2a",
            FormId::BarF2b => "F2b",
            FormId::BarF3 | FormId::RodF3 => "F3",
            FormId::RodF4 => "F4",
        }
    }

    pub fn output_names(self) -> &'static [&'static str] {
        match self {
            FormId::BarF1 => &["u"],
            FormId::BarF2a => &["u", "p_x"],
            FormId::BarF2b => &["u", "zeta_u"],
            FormId::BarF3 => &["u", "zeta_u", "p_x"],
            FormId::RodF3 => &["u", "v", "alpha", "c", "m", "p_x", "p_y", "zeta_u", "zeta_v"],
            FormId::RodF4 => &[
                "u", "v", "alpha", "k", "m", "p_x", "p_y", "n_x", "n_y", "s_x", "s_y",
            ],
        }
    }

    pub fn n_outputs(self) -> usize {
        self.output_names().len()
    }

    pub fn residual_names(self) -> &'static [&'static str] {
        match self {
            FormId::BarF1 => &["pde"],
            FormId::BarF2a => &["pde", "momentum"],
            FormId::BarF2b => &["pde", "slope"],
            FormId::BarF3 => &["pde", "slope", "momentum"],
            FormId::RodF3 => &[
                "balance_x",
                "balance_y",
                "strain_u",
                "momentum_x",
                "curvature",
                "strain_v",
                "momentum_y",
                "extension",
                "slope",
            ],
            FormId::RodF4 => &[
                "balance_x",
                "balance_y",
                "normal_x",
                "shear_x",
                "normal_y",
                "shear_y",
                "curvature",
                "momentum_x",
                "momentum_y",
                "inverse_extension",
                "slope",
            ],
        }
    }

    pub fn n_residuals(self) -> usize {
        self.residual_names().len()
    }

    pub fn output_index(self, name: &str) -> Option<usize> {
        self.output_names().iter().position(|n| *n == name)
    }

    /// Indices of the momentum outputs `(p_x, p_y)`, if the form splits time.
    pub fn momentum_outputs(self) -> Option<(usize, Option<usize>)> {
        match self {
            FormId::BarF2a => Some((1, None)),
            FormId::BarF3 => Some((2, None)),
            FormId::RodF3 | FormId::RodF4 => Some((5, Some(6))),
            FormId::BarF1 | FormId::BarF2b => None,
        }
    }

    /// Index of the bar strain output `zeta_u`, if the form splits space.
    pub fn strain_output(self) -> Option<usize> {
        match self {
            FormId::BarF2b | FormId::BarF3 => Some(1),
            FormId::RodF3 => Some(7),
            _ => None,
        }
    }

    /// Residuals at one point. `jets` holds one jet per output; `out`
    /// receives [`FormId::n_residuals`] values.
    pub fn residuals<T: Real>(
        self,
        jets: &[Jet2<T>],
        s: f64,
        fx: f64,
        fy: f64,
        out: &mut [T],
    ) -> Result<()> {
        debug_assert!(jets.len() >= self.n_outputs());
        match self {
            FormId::BarF1 => out[..1].copy_from_slice(&residual_bar_f1(&jets[0], s, fx)),
            FormId::BarF2a => {
                out[..2].copy_from_slice(&residual_bar_f2a(&jets[0], &jets[1], s, fx))
            }
            FormId::BarF2b => {
                out[..2].copy_from_slice(&residual_bar_f2b(&jets[0], &jets[1], s, fx))
            }
            FormId::BarF3 => out[..3]
                .copy_from_slice(&residual_bar_f3(&jets[0], &jets[1], &jets[2], s, fx)),
            FormId::RodF3 => {
                let j: &[Jet2<T>; 9] = jets[..9].try_into().unwrap();
                out[..9].copy_from_slice(&residual_rod_f3(j, s, fx, fy)?);
            }
            FormId::RodF4 => {
                let j: &[Jet2<T>; 11] = jets[..11].try_into().unwrap();
                out[..11].copy_from_slice(&residual_rod_f4(j, s, fx, fy));
            }
        }
        Ok(())
    }
}

impl fmt::Display for FormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = if self.is_rod() { "rod" } else { "bar" };
        write!(f, "{family}.{}", self.short_name())
    }
}

impl FromStr for FormId {
    type Err = Error;

    /// Accepts `bar.F2a`, `rod.F4` and friends (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (family, form) = lower
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("form `{s}` must look like bar.F1 or rod.F3")))?;
        let bar = match family {
            "bar" => true,
            "rod" => false,
            _ => return Err(Error::invalid(format!("unknown form family in `{s}`"))),
        };
        match (bar, form) {
            (true, "f1") => Ok(FormId::BarF1),
            (true, "f2a") => Ok(FormId::BarF2a),
            (true, "f2b") => Ok(FormId::BarF2b),
            (true, "f3") => Ok(FormId::BarF3),
            (false, "f3") => Ok(FormId::RodF3),
            (false, "f4") => Ok(FormId::RodF4),
            _ => Err(Error::invalid(format!("unsupported form `{s}`"))),
        }
    }
}

/// `s u_xx + f_x - u_tt`.
pub fn residual_bar_f1<T: Real>(u: &Jet2<T>, s: f64, fx: f64) -> [T; 1] {
    [u.dxx * s + fx - u.dtt]
}

/// `(s u_xx + f_x - dp/dt, du/dt - p)`.
pub fn residual_bar_f2a<T: Real>(u: &Jet2<T>, p: &Jet2<T>, s: f64, fx: f64) -> [T; 2] {
    [u.dxx * s + fx - p.dt, u.dt - p.v]
}

/// `(s dzeta/dx + f_x - u_tt, u_x - zeta)`.
pub fn residual_bar_f2b<T: Real>(u: &Jet2<T>, zeta: &Jet2<T>, s: f64, fx: f64) -> [T; 2] {
    [zeta.dx * s + fx - u.dtt, u.dx - zeta.v]
}

/// `(s dzeta/dx + f_x - dp/dt, u_x - zeta, du/dt - p)`.
pub fn residual_bar_f3<T: Real>(
    u: &Jet2<T>,
    zeta: &Jet2<T>,
    p: &Jet2<T>,
    s: f64,
    fx: f64,
) -> [T; 3] {
    [zeta.dx * s + fx - p.dt, u.dx - zeta.v, u.dt - p.v]
}

/// Kirchhoff rod, form 3. Outputs are
/// `(u, v, alpha, c, m, p_x, p_y, zeta_u, zeta_v)` where `c` is one plus the
/// extension. The shear force is not an output; it follows from
/// `m_x = -c S`.
pub fn residual_rod_f3<T: Real>(j: &[Jet2<T>; 9], s: f64, fx: f64, fy: f64) -> Result<[T; 9]> {
    let [u, v, alpha, c, m, px, py, zu, zv] = j;
    if c.v.value().abs() < MIN_EXTENSION {
        return Err(Error::NearSingularExtension {
            point: 0,
            value: c.v.value(),
        });
    }
    let (sin_a, cos_a) = (alpha.v.sin(), alpha.v.cos());
    let shear = -m.dx / c.v;
    let shear_x = -m.dxx / c.v + m.dx * c.dx / (c.v * c.v);
    let stretch = (u.dx + 1.0).sqr() + v.dx.sqr();
    Ok([
        (zu.dx + alpha.dx * sin_a) * s - shear_x * sin_a - shear * alpha.dx * cos_a + fx - px.dt,
        (zv.dx - alpha.dx * cos_a) * s + shear_x * cos_a - shear * alpha.dx * sin_a + fy - py.dt,
        u.dx - zu.v,
        u.dt - px.v,
        alpha.dx - m.v,
        v.dx - zv.v,
        v.dt - py.v,
        c.v - stretch.sqrt(),
        (u.dx + 1.0) * sin_a - v.dx * cos_a,
    ])
}

/// Kirchhoff rod, form 4. Outputs are
/// `(u, v, alpha, k, m, p_x, p_y, n_x, n_y, s_x, s_y)` where `k` is the
/// inverse of one plus the extension.
pub fn residual_rod_f4<T: Real>(j: &[Jet2<T>; 11], s: f64, fx: f64, fy: f64) -> [T; 11] {
    let [u, v, alpha, k, m, px, py, nx, ny, sx, sy] = j;
    let (sin_a, cos_a) = (alpha.v.sin(), alpha.v.cos());
    let stretch = (u.dx + 1.0).sqr() + v.dx.sqr();
    [
        nx.dx - sx.dx + fx - px.dt,
        ny.dx + sy.dx + fy - py.dt,
        nx.v - (u.dx + 1.0 - cos_a) * s,
        sx.v + k.v * m.dx * sin_a,
        ny.v - (v.dx - sin_a) * s,
        sy.v + k.v * m.dx * cos_a,
        alpha.dx - m.v,
        u.dt - px.v,
        v.dt - py.v,
        k.v * stretch.sqrt() - 1.0,
        (u.dx + 1.0) * sin_a - v.dx * cos_a,
    ]
}

/// Residuals of `form` with every time derivative removed, i.e. the static
/// operator whose zeros are the static solutions.
pub fn static_operator(form: FormId, jets: &[Jet2], s: f64, fx: f64, fy: f64) -> Result<Vec<f64>> {
    check_jets(form, jets)?;
    let still: Vec<Jet2> = jets.iter().map(|j| j.without_time()).collect();
    let mut out = vec![0.0; form.n_residuals()];
    form.residuals(&still, s, fx, fy, &mut out)?;
    Ok(out)
}

/// Dynamic residuals of `form` at one point.
pub fn residuals(form: FormId, jets: &[Jet2], s: f64, fx: f64, fy: f64) -> Result<Vec<f64>> {
    check_jets(form, jets)?;
    let mut out = vec![0.0; form.n_residuals()];
    form.residuals(jets, s, fx, fy, &mut out)?;
    Ok(out)
}

fn check_jets(form: FormId, jets: &[Jet2]) -> Result<()> {
    if jets.len() != form.n_outputs() {
        return Err(Error::invalid(format!(
            "{form} has {} outputs, got {} jets",
            form.n_outputs(),
            jets.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Constraints
// ---------------------------------------------------------------------------

/// Where a constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    /// `x = 0`.
    Left,
    /// `x = 1`.
    Right,
    /// `t = 0`.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wrt {
    X,
    T,
}

/// Algebraic expressions with derivatives, built from first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aed {
    /// Axial force `s (c - 1)` with `c = sqrt((1 + u_x)^2 + v_x^2)`.
    AxialForce { u: usize, v: Option<usize> },
    /// Shear force `-m_x / c`.
    ShearForce { u: usize, v: usize, moment: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Dirichlet { output: usize },
    InputDerivative { output: usize, wrt: Wrt },
    Aed(Aed),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub location: Location,
    pub kind: ConstraintKind,
    pub value: f64,
    pub weight: f64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, location: Location, kind: ConstraintKind) -> Self {
        Self {
            name: name.into(),
            location,
            kind,
            value: 0.0,
            weight: 1.0,
        }
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = value;
        self
    }
}

fn stretch_of<T: Real>(jets: &[Jet2<T>], u: usize, v: Option<usize>) -> T {
    let ux1 = jets[u].dx + 1.0;
    match v {
        Some(v) => (ux1.sqr() + jets[v].dx.sqr()).sqrt(),
        None => (ux1.sqr()).sqrt(),
    }
}

/// Signed residual of `c` given the jets of all outputs at a point on its
/// location.
pub fn evaluate_constraint<T: Real>(c: &Constraint, jets: &[Jet2<T>], s: f64) -> T {
    let raw = match c.kind {
        ConstraintKind::Dirichlet { output } => jets[output].v,
        ConstraintKind::InputDerivative { output, wrt: Wrt::X } => jets[output].dx,
        ConstraintKind::InputDerivative { output, wrt: Wrt::T } => jets[output].dt,
        ConstraintKind::Aed(self::Aed::AxialForce { u, v }) => (stretch_of(jets, u, v) - 1.0) * s,
        ConstraintKind::Aed(self::Aed::ShearForce { u, v, moment }) => {
            -jets[moment].dx / stretch_of(jets, u, Some(v))
        }
    };
    raw - c.value
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Residual values of one loss group.
#[derive(Debug, Clone, Copy)]
pub struct ResidualGroup<'a> {
    pub weight: f64,
    pub residuals: &'a [f64],
}

/// `sum_i w_i * mean(r_i^2)`.
pub fn assemble_loss(groups: &[ResidualGroup<'_>]) -> Result<f64> {
    groups.iter().enumerate().try_fold(0.0, |acc, (i, g)| {
        if g.residuals.is_empty() {
            return Err(Error::invalid(format!("loss group {i} is empty")));
        }
        let mean = g.residuals.iter().map(|r| r * r).sum::<f64>() / g.residuals.len() as f64;
        Ok(acc + g.weight * mean)
    })
}

/// A distributed load `f(x, t)`.
#[derive(Debug, Clone, Copy)]
pub enum Load {
    Constant(f64),
    Field(fn(f64, f64) -> f64),
}

/// Fields compare by function address.
impl PartialEq for Load {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Load::Constant(a), Load::Constant(b)) => a == b,
            (Load::Field(f), Load::Field(g)) => *f as usize == *g as usize,
            _ => false,
        }
    }
}

impl Load {
    pub fn at(&self, x: f64, t: f64) -> f64 {
        match self {
            Load::Constant(c) => *c,
            Load::Field(f) => f(x, t),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Load::Constant(c) => Some(*c),
            Load::Field(_) => None,
        }
    }
}

/// Named problem configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    BarPinnedPinned,
    BarPinnedFree,
    RodCantilever,
    RodSimplySupported,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::BarPinnedPinned,
        Preset::BarPinnedFree,
        Preset::RodCantilever,
        Preset::RodSimplySupported,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BarPinnedPinned => "bar-pinned-pinned",
            Preset::BarPinnedFree => "bar-pinned-free",
            Preset::RodCantilever => "rod-cantilever",
            Preset::RodSimplySupported => "rod-simply-supported",
        }
    }

    pub fn is_rod(self) -> bool {
        matches!(self, Preset::RodCantilever | Preset::RodSimplySupported)
    }

    /// Two vibration periods of the exact bar solution; rods use the same
    /// horizon as the pinned-pinned bar.
    pub fn default_t_final(self) -> f64 {
        match self {
            Preset::BarPinnedFree => 8.0,
            _ => 4.0,
        }
    }

    pub fn default_form(self) -> FormId {
        if self.is_rod() {
            FormId::RodF3
        } else {
            FormId::BarF2a
        }
    }

    /// Resolves a bare form name such as `F2a` against this preset's family.
    pub fn form(self, short: &str) -> Result<FormId> {
        let family = if self.is_rod() { "rod" } else { "bar" };
        let form: FormId = format!("{family}.{short}").parse()?;
        Ok(form)
    }

    /// Problem with the preset's constraints for `form`, slenderness `s`
    /// and loads.
    pub fn build(self, form: FormId, s: f64, load_x: Load, load_y: Load) -> Result<Problem> {
        if form.is_rod() != self.is_rod() {
            return Err(Error::invalid(format!(
                "form {form} does not apply to preset {}",
                self.name()
            )));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("slenderness must be positive, got {s}")));
        }
        let constraints = if self.is_rod() {
            rod_constraints(self, form)
        } else {
            bar_constraints(self, form)
        };
        Ok(Problem {
            form,
            slenderness: s,
            load_x,
            load_y,
            residual_weights: vec![1.0; form.n_residuals()],
            constraints,
            t_final: self.default_t_final(),
            preset: Some(self),
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset `{s}`")))
    }
}

fn bar_constraints(preset: Preset, form: FormId) -> Vec<Constraint> {
    use ConstraintKind::*;
    let u = Dirichlet { output: 0 };
    let mut cs = vec![Constraint::new("bc_left_u", Location::Left, u)];
    match (preset, form.strain_output()) {
        (Preset::BarPinnedPinned, _) => {
            cs.push(Constraint::new("bc_right_u", Location::Right, u));
        }
        (_, Some(zeta)) => {
            cs.push(Constraint::new("bc_right_zeta_u", Location::Right, Dirichlet { output: zeta }));
        }
        (_, None) => cs.push(Constraint::new(
            "bc_right_ux",
            Location::Right,
            InputDerivative { output: 0, wrt: Wrt::X },
        )),
    }
    cs.push(Constraint::new("ic_u", Location::Initial, u));
    if let Some(zeta) = form.strain_output() {
        cs.push(Constraint::new("ic_zeta_u", Location::Initial, Dirichlet { output: zeta }));
    }
    match form.momentum_outputs() {
        Some((p, _)) => cs.push(Constraint::new("ic_p_x", Location::Initial, Dirichlet { output: p })),
        None => cs.push(Constraint::new(
            "ic_ut",
            Location::Initial,
            InputDerivative { output: 0, wrt: Wrt::T },
        )),
    }
    cs
}

fn rod_constraints(preset: Preset, form: FormId) -> Vec<Constraint> {
    use ConstraintKind::*;
    const U: usize = 0;
    const V: usize = 1;
    const ALPHA: usize = 2;
    const M: usize = 4;
    debug_assert_eq!(form.output_index("m"), Some(M));
    let axial = Aed(self::Aed::AxialForce { u: U, v: Some(V) });
    let mut cs = match preset {
        Preset::RodCantilever => vec![
            Constraint::new("bc_left_u", Location::Left, Dirichlet { output: U }),
            Constraint::new("bc_left_v", Location::Left, Dirichlet { output: V }),
            Constraint::new("bc_left_alpha", Location::Left, Dirichlet { output: ALPHA }),
            Constraint::new("bc_right_axial_force", Location::Right, axial),
            Constraint::new(
                "bc_right_shear_force",
                Location::Right,
                Aed(self::Aed::ShearForce { u: U, v: V, moment: M }),
            ),
            Constraint::new("bc_right_m", Location::Right, Dirichlet { output: M }),
        ],
        _ => vec![
            Constraint::new("bc_left_u", Location::Left, Dirichlet { output: U }),
            Constraint::new("bc_left_v", Location::Left, Dirichlet { output: V }),
            Constraint::new("bc_left_m", Location::Left, Dirichlet { output: M }),
            Constraint::new("bc_right_axial_force", Location::Right, axial),
            Constraint::new("bc_right_v", Location::Right, Dirichlet { output: V }),
            Constraint::new("bc_right_m", Location::Right, Dirichlet { output: M }),
        ],
    };
    cs.push(Constraint::new("ic_u", Location::Initial, Dirichlet { output: U }));
    cs.push(Constraint::new("ic_v", Location::Initial, Dirichlet { output: V }));
    cs.push(Constraint::new("ic_p_x", Location::Initial, Dirichlet { output: 5 }));
    cs.push(Constraint::new("ic_p_y", Location::Initial, Dirichlet { output: 6 }));
    cs
}

/// Loss value split by group, in [`Problem::group_names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Weighted mean-square value of every group.
    pub groups: Vec<f64>,
}

/// A residual system together with its constraints and loads.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub form: FormId,
    pub slenderness: f64,
    pub load_x: Load,
    pub load_y: Load,
    /// One weight per form residual.
    pub residual_weights: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub t_final: f64,
    pub preset: Option<Preset>,
}

impl Problem {
    /// Names of the loss groups: form residuals, then constraints.
    pub fn group_names(&self) -> Vec<String> {
        self.form
            .residual_names()
            .iter()
            .map(|s| s.to_string())
            .chain(self.constraints.iter().map(|c| c.name.clone()))
            .collect()
    }

    /// Zero loads with every prescribed value zero.
    pub fn unloaded(mut self) -> Self {
        self.load_x = Load::Constant(0.0);
        self.load_y = Load::Constant(0.0);
        self.constraints.iter_mut().for_each(|c| c.value = 0.0);
        self
    }

    /// Closed-form static displacement for the bar presets under constant
    /// load: `f/(2s) x(1-x)` pinned-pinned, `f/(2s) x(2-x)` pinned-free.
    pub fn static_displacement(&self, x: f64) -> Option<f64> {
        let f = self.load_x.constant_value()?;
        let a = f / (2.0 * self.slenderness);
        match self.preset? {
            Preset::BarPinnedPinned => Some(a * x * (1.0 - x)),
            Preset::BarPinnedFree => Some(a * x * (2.0 - x)),
            _ => None,
        }
    }

    /// Loss over a grid batch and its adjoint with respect to the jets.
    /// The adjoint is accumulated into, not overwritten.
    pub fn loss(
        &self,
        batch: &JetBatch,
        points: &[(f64, f64)],
        layout: &GridLayout,
        adjoint: &mut JetBatch,
    ) -> Result<LossBreakdown> {
        if batch.n_outputs() != self.form.n_outputs() {
            return Err(Error::invalid(format!(
                "{} needs {} network outputs, got {}",
                self.form,
                self.form.n_outputs(),
                batch.n_outputs()
            )));
        }
        match self.form.n_outputs() {
            1 => self.loss_impl::<5>(batch, points, layout, adjoint),
            2 => self.loss_impl::<10>(batch, points, layout, adjoint),
            3 => self.loss_impl::<15>(batch, points, layout, adjoint),
            9 => self.loss_impl::<45>(batch, points, layout, adjoint),
            11 => self.loss_impl::<55>(batch, points, layout, adjoint),
            n => unreachable!("no form has {n} outputs"),
        }
    }

    fn loss_impl<const N: usize>(
        &self,
        batch: &JetBatch,
        points: &[(f64, f64)],
        layout: &GridLayout,
        adjoint: &mut JetBatch,
    ) -> Result<LossBreakdown> {
        let n_out = self.form.n_outputs();
        let n_res = self.form.n_residuals();
        let mut groups = vec![0.0; n_res + self.constraints.len()];

        let interior = layout.interior.clone();
        if interior.is_empty() {
            return Err(Error::invalid("grid has no interior points"));
        }
        let scale = 1.0 / interior.len() as f64;
        let mut res = [Dual::<N>::constant(0.0); MAX_OUTPUTS];
        let mut jets = [Jet2::<Dual<N>>::default(); MAX_OUTPUTS];
        for p in interior {
            dual_jets(batch, p, &mut jets);
            let (x, t) = points[p];
            let (fx, fy) = (self.load_x.at(x, t), self.load_y.at(x, t));
            self.form
                .residuals(&jets[..n_out], self.slenderness, fx, fy, &mut res)
                .map_err(|e| e.at_point(p))?;
            for (g, r) in res[..n_res].iter().enumerate() {
                let w = self.residual_weights[g];
                groups[g] += w * scale * r.v * r.v;
                scatter(adjoint, p, n_out, &r.g, 2.0 * w * scale * r.v);
            }
        }

        for (k, c) in self.constraints.iter().enumerate() {
            let range = layout.range(c.location);
            if range.is_empty() {
                return Err(Error::invalid(format!("no points for constraint {}", c.name)));
            }
            let scale = 1.0 / range.len() as f64;
            for p in range {
                dual_jets(batch, p, &mut jets);
                let r = evaluate_constraint(c, &jets[..n_out], self.slenderness);
                groups[n_res + k] += c.weight * scale * r.v * r.v;
                scatter(adjoint, p, n_out, &r.g, 2.0 * c.weight * scale * r.v);
            }
        }

        let total = groups.iter().sum();
        Ok(LossBreakdown { total, groups })
    }
}

impl<const N: usize> Default for Dual<N> {
    fn default() -> Self {
        Dual::constant(0.0)
    }
}

/// Dual-valued jets of every output at `p`, written over the first outputs
/// of `out`; jet component `(o, c)` is independent variable `5 o + c`.
pub(crate) fn dual_jets<const N: usize>(batch: &JetBatch, p: usize, out: &mut [Jet2<Dual<N>>]) {
    for (o, slot) in out.iter_mut().enumerate().take(batch.n_outputs()) {
        let j = batch.get(p, o);
        let base = o * N_COMP;
        *slot = Jet2 {
            v: Dual::variable(j.v, base),
            dx: Dual::variable(j.dx, base + 1),
            dt: Dual::variable(j.dt, base + 2),
            dxx: Dual::variable(j.dxx, base + 3),
            dtt: Dual::variable(j.dtt, base + 4),
        };
    }
}

/// Adds `scale * grad` into the adjoint at point `p`.
pub(crate) fn scatter<const N: usize>(
    adjoint: &mut JetBatch,
    p: usize,
    n_out: usize,
    grad: &[f64; N],
    scale: f64,
) {
    for (i, &g) in grad.iter().enumerate().take(n_out * N_COMP) {
        if g != 0.0 {
            adjoint.component_mut(i / N_COMP, Component::ALL[i % N_COMP])[p] += scale * g;
        }
    }
}

impl Error {
    /// Attaches a point index to point-level errors.
    pub fn at_point(self, p: usize) -> Self {
        match self {
            Error::NearSingularExtension { value, .. } => Error::NearSingularExtension { point: p, value },
            Error::Diverged { point: None } => Error::Diverged { point: Some(p) },
            other => other,
        }
    }
}
