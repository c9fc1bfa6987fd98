//! Learning-rate schedules organised in cycles and periods.
//!
//! Within a cycle the rate follows an inverse-time decay
//! `lr = lr0 / (1 + r k / P)` with `r = 1/f - 1`, so after the first period of
//! `P` steps the rate has fallen to `f lr0`. The schedules differ in what
//! happens at cycle boundaries.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Cyclic annealing: reset to the initial rate at every cycle start.
    Lrs1Ca,
    /// Cyclic annealing with a different initial rate per cycle.
    Lrs2Vca,
    /// No cyclic annealing: one decay over the whole run.
    Lrs3Nca,
    /// Constant within a cycle, multiplied by a factor at each boundary.
    Lrs4Piecewise,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lrs1Ca => "LRS1_CA",
            Self::Lrs2Vca => "LRS2_VCA",
            Self::Lrs3Nca => "LRS3_NCA",
            Self::Lrs4Piecewise => "LRS4_PIECEWISE",
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LRS1_CA" | "LRS1" | "CA" => Ok(Self::Lrs1Ca),
            "LRS2_VCA" | "LRS2" | "VCA" => Ok(Self::Lrs2Vca),
            "LRS3_NCA" | "LRS3" | "NCA" => Ok(Self::Lrs3Nca),
            "LRS4_PIECEWISE" | "LRS4" | "PIECEWISE" => Ok(Self::Lrs4Piecewise),
            _ => Err(Error::invalid(format!("unknown schedule kind {s:?}"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// One rate, or one per cycle for [`ScheduleKind::Lrs2Vca`].
    pub init_lr: Vec<f64>,
    /// Steps in each planned cycle.
    pub cycles: Vec<usize>,
    pub period: usize,
    pub decay: f64,
    /// Factor applied at each cycle boundary ([`ScheduleKind::Lrs4Piecewise`]).
    pub factors: Vec<f64>,
    /// Extra steps appended after the planned cycles. They continue the last
    /// cycle without a reset.
    pub extension: usize,
}

pub const DEFAULT_PERIOD: usize = 2500;
pub const DEFAULT_DECAY: f64 = 0.9;

impl Schedule {
    /// A single-rate schedule with default period and decay.
    pub fn new(kind: ScheduleKind, init_lr: f64, cycles: Vec<usize>) -> Result<Self> {
        Self {
            kind,
            init_lr: vec![init_lr],
            cycles,
            period: DEFAULT_PERIOD,
            decay: DEFAULT_DECAY,
            factors: Vec::new(),
            extension: 0,
        }
        .validated()
    }

    /// Checks the invariants and returns `self`.
    pub fn validated(self) -> Result<Self> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.cycles.is_empty() || self.cycles.contains(&0) {
            return bad(format!("cycle step counts must be positive, got {:?}", self.cycles));
        }
        if self.period == 0 {
            return bad("period must be positive".into());
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay factor must lie in (0, 1], got {}", self.decay));
        }
        if self.init_lr.is_empty() || self.init_lr.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad(format!("initial rates must be positive, got {:?}", self.init_lr));
        }
        match self.kind {
            ScheduleKind::Lrs2Vca if self.init_lr.len() != self.cycles.len() => {
                return bad(format!(
                    "{} needs one initial rate per cycle: {} rates for {} cycles",
                    self.kind,
                    self.init_lr.len(),
                    self.cycles.len()
                ))
            }
            ScheduleKind::Lrs2Vca => {}
            _ if self.init_lr.len() != 1 => {
                return bad(format!("{} takes a single initial rate", self.kind))
            }
            _ => {}
        }
        if self.kind == ScheduleKind::Lrs4Piecewise && self.factors.len() + 1 < self.cycles.len() {
            return bad(format!(
                "{} cycles need at least {} factors, got {}",
                self.cycles.len(),
                self.cycles.len() - 1,
                self.factors.len()
            ));
        }
        if self.factors.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad(format!("factors must lie in (0, 1], got {:?}", self.factors));
        }
        Ok(self)
    }

    pub fn planned_steps(&self) -> usize {
        self.cycles.iter().sum()
    }

    pub fn total_steps(&self) -> usize {
        self.planned_steps() + self.extension
    }

    /// Cycle index of `step` and the step within that cycle. Extension steps
    /// belong to the last cycle.
    pub fn locate(&self, step: usize) -> (usize, usize) {
        let mut start = 0;
        for (c, &len) in self.cycles.iter().enumerate() {
            if step < start + len || c + 1 == self.cycles.len() {
                return (c, step - start);
            }
            start += len;
        }
        unreachable!("schedule has at least one cycle")
    }

    fn decayed(&self, lr0: f64, k: usize) -> f64 {
        let r = 1.0 / self.decay - 1.0;
        lr0 / (1.0 + r * k as f64 / self.period as f64)
    }

    /// Rate of cycle `c` under the piecewise schedule: the initial rate times
    /// the first `c` factors.
    pub fn piecewise_value(&self, c: usize) -> f64 {
        self.factors.iter().take(c).fold(self.init_lr[0], |lr, f| lr * f)
    }

    /// Learning rate at the 0-based `step`.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps() {
            return Err(Error::invalid(format!(
                "step {step} outside schedule of {} steps",
                self.total_steps()
            )));
        }
        let (c, k) = self.locate(step);
        Ok(match self.kind {
            ScheduleKind::Lrs1Ca => self.decayed(self.init_lr[0], k),
            ScheduleKind::Lrs2Vca => self.decayed(self.init_lr[c], k),
            ScheduleKind::Lrs3Nca => self.decayed(self.init_lr[0], step),
            ScheduleKind::Lrs4Piecewise => self.piecewise_value(c),
        })
    }
}
