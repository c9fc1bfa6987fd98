//! Run configuration file: TOML with fixed sections and documented defaults.
//!
//! ```toml
//! [problem]
//! preset = "bar-pinned-pinned"   # or "bar"/"rod" together with `bc`
//! form = "F2a"                   # preset default when omitted
//! t_final = 4.0                  # preset default when omitted
//! s = 1.0
//! fx = 0.5
//! fy = 0.0
//!
//! [network]
//! width = 64
//! hidden = 4
//! initializer = "he"             # he | glorot
//! seed = 0
//!
//! [grid]
//! kind = "regular"               # regular | fixed-random | varying-random
//! n = 51
//! seed = 0                       # fixed-random only
//!
//! [schedule]
//! kind = "LRS1"
//! init_lr = 1e-3                 # or a list, one per cycle (LRS2)
//! cycles = [10000]               # steps per cycle; a bare integer means one cycle
//! period = 2500
//! decay = 0.9
//! factors = []                   # LRS4 boundary factors
//! extension = 0
//!
//! [train]
//! steps = 10000                  # shorthand for a single cycle of this length
//! checkpoint_stride = 0
//! log_stride = 100
//! deterministic = true
//! workers = 1
//!
//! [barrier]
//! shape = "inverse"              # inverse | log; omit the section for none
//! basis = "acceleration"         # static-solution | static-operator | acceleration
//! depth = 1.0
//! weight = 1.0
//! off_at = 50000
//!
//! [run]
//! run_id = "run"
//! out_dir = "."
//! probe_dt = 0.01
//! probe_horizon = 4.0            # defaults to t_final; larger values extrapolate
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rodpinn::barriers::{BarrierBasis, BarrierShape, BarrierSpec};
use rodpinn::training::{GridSpec, DEFAULT_DECAY, DEFAULT_PERIOD};
use rodpinn::{
    FormId, GridKind, InitKind, Initializer, Load, Preset, Schedule, ScheduleKind, TrainConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub problem: ProblemSection,
    pub network: NetworkSection,
    pub grid: GridSection,
    pub schedule: ScheduleSection,
    pub train: TrainSection,
    pub barrier: Option<BarrierSection>,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub preset: String,
    pub bc: Option<String>,
    pub form: Option<String>,
    pub t_final: Option<f64>,
    pub s: f64,
    pub fx: f64,
    pub fy: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            preset: Preset::BarPinnedPinned.name().into(),
            bc: None,
            form: None,
            t_final: None,
            s: 1.0,
            fx: 0.5,
            fy: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub width: usize,
    pub hidden: usize,
    pub initializer: String,
    pub seed: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            width: 64,
            hidden: 4,
            initializer: "he".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub kind: String,
    pub n: usize,
    pub seed: u64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            kind: "regular".into(),
            n: 51,
            seed: 0,
        }
    }
}

/// A scalar or a list in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub kind: String,
    pub init_lr: OneOrMany<f64>,
    pub cycles: Option<OneOrMany<usize>>,
    pub period: usize,
    pub decay: f64,
    pub factors: Vec<f64>,
    pub extension: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Lrs1Ca.name().into(),
            init_lr: OneOrMany::One(1e-3),
            cycles: None,
            period: DEFAULT_PERIOD,
            decay: DEFAULT_DECAY,
            factors: Vec::new(),
            extension: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Single-cycle length, used when `schedule.cycles` is absent.
    pub steps: usize,
    pub checkpoint_stride: usize,
    pub log_stride: usize,
    pub deterministic: bool,
    pub workers: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 10_000,
            checkpoint_stride: 0,
            log_stride: 100,
            deterministic: true,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSection {
    pub shape: String,
    pub basis: String,
    pub depth: f64,
    pub weight: f64,
    pub off_at: Option<usize>,
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self {
            shape: "inverse".into(),
            basis: "acceleration".into(),
            depth: 1.0,
            weight: 1.0,
            off_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub run_id: String,
    /// Falls back to `RODPINN_OUT_DIR`, then the working directory.
    pub out_dir: Option<PathBuf>,
    pub probe_dt: f64,
    pub probe_horizon: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            out_dir: None,
            probe_dt: 0.01,
            probe_horizon: None,
        }
    }
}

/// Everything a run needs, resolved from the file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub train: TrainConfig,
    pub preset: Preset,
    pub probe_times: Vec<f64>,
}

impl RunConfigFile {
    /// Reads `path` (if any) and applies `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .map_err(|e| anyhow!("config error in {}: {e}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let origin = path.map_or("overrides".to_string(), |p| p.display().to_string());
        RunConfigFile::deserialize(toml::Value::Table(table))
            .map_err(|e| anyhow!("config error in {origin}: {e}"))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn preset(&self) -> Result<Preset> {
        let p = &self.problem;
        let name = match (&p.bc, p.preset.as_str()) {
            (Some(bc), family @ ("bar" | "rod")) => format!("{family}-{bc}"),
            (Some(bc), full) if !full.ends_with(bc.as_str()) => {
                bail!("config error: problem.bc = {bc:?} contradicts problem.preset = {full:?}")
            }
            (_, full) => full.to_string(),
        };
        name.parse::<Preset>()
            .map_err(|_| anyhow!("unknown preset `{name}` (known: {})", preset_names()))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let preset = self.preset()?;
        let p = &self.problem;
        let form = match &p.form {
            Some(f) => resolve_form(preset, f)?,
            None => preset.default_form(),
        };
        let mut problem = preset
            .build(form, p.s, Load::Constant(p.fx), Load::Constant(p.fy))
            .context("config error in [problem]")?;
        if let Some(t) = p.t_final {
            if !(t > 0.0 && t.is_finite()) {
                bail!("config error: problem.t_final must be positive, got {t}");
            }
            problem.t_final = t;
        }

        let n = &self.network;
        if n.width == 0 || n.hidden == 0 {
            bail!("config error: network.width and network.hidden must be positive");
        }
        let kind: InitKind = n
            .initializer
            .parse()
            .map_err(|e| anyhow!("config error: network.initializer: {e}"))?;
        let mut widths = vec![2];
        widths.extend(std::iter::repeat_n(n.width, n.hidden));
        widths.push(form.n_outputs());

        let g = &self.grid;
        let grid_kind = match g.kind.replace('_', "-").as_str() {
            "regular" => GridKind::Regular,
            "fixed-random" => GridKind::FixedRandom(g.seed),
            "varying-random" => GridKind::VaryingRandom,
            other => bail!("config error: grid.kind {other:?} (regular | fixed-random | varying-random)"),
        };

        let s = &self.schedule;
        let cycles = match &s.cycles {
            Some(c) => c.to_vec(),
            None => vec![self.train.steps],
        };
        let schedule = Schedule {
            kind: s
                .kind
                .parse()
                .map_err(|e| anyhow!("config error: schedule.kind: {e}"))?,
            init_lr: s.init_lr.to_vec(),
            cycles,
            period: s.period,
            decay: s.decay,
            factors: s.factors.clone(),
            extension: s.extension,
        }
        .validated()
        .context("config error in [schedule]")?;

        let barrier = match &self.barrier {
            Some(b) => Some(
                BarrierSpec::new(
                    b.shape
                        .parse::<BarrierShape>()
                        .map_err(|e| anyhow!("config error: barrier.shape: {e}"))?,
                    b.basis
                        .parse::<BarrierBasis>()
                        .map_err(|e| anyhow!("config error: barrier.basis: {e}"))?,
                    b.depth,
                    b.weight,
                )
                .context("config error in [barrier]")?,
            ),
            None => None,
        };

        let t = &self.train;
        let mut cfg = TrainConfig::new(problem, schedule.total_steps())?;
        cfg.grid = GridSpec { kind: grid_kind, n: g.n };
        cfg.widths = widths;
        cfg.init = Initializer::new(kind, n.seed);
        cfg.schedule = schedule;
        cfg.barrier = barrier;
        cfg.barrier_off_at = self.barrier.as_ref().and_then(|b| b.off_at);
        cfg.log_stride = t.log_stride;
        cfg.checkpoint_stride = t.checkpoint_stride;
        cfg.deterministic = t.deterministic;
        cfg.workers = t.workers.max(1);
        cfg.run_id = self.run.run_id.clone();
        cfg.validate().context("config error")?;

        let horizon = self.run.probe_horizon.unwrap_or(cfg.problem.t_final);
        let dt = self.run.probe_dt;
        if !(dt > 0.0 && horizon > 0.0) {
            bail!("config error: run.probe_dt and run.probe_horizon must be positive");
        }
        let steps = (horizon / dt).round() as usize;
        let probe_times = (0..=steps).map(|i| i as f64 * dt).collect();
        Ok(Resolved {
            train: cfg,
            preset,
            probe_times,
        })
    }

    /// Output directory: config, then environment, then the working directory.
    pub fn out_dir(&self) -> PathBuf {
        self.run
            .out_dir
            .clone()
            .or_else(|| std::env::var_os("RODPINN_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn preset_names() -> String {
    Preset::ALL.map(|p| p.name()).join(", ")
}

/// Accepts `F2a`, `bar.F2a` or the lowercase equivalents.
fn resolve_form(preset: Preset, name: &str) -> Result<FormId> {
    if let Ok(f) = name.parse::<FormId>() {
        return Ok(f);
    }
    let short = name
        .strip_prefix(['f', 'F'])
        .map(|rest| format!("F{rest}"))
        .unwrap_or_else(|| name.to_string());
    preset
        .form(&short)
        .map_err(|e| anyhow!("config error: problem.form {name:?}: {e}"))
}

/// Sets `section.key` to `value`, read as a TOML value and otherwise as a
/// bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not of the form section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| anyhow!("override key {path:?} is not of the form section.key"))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sec = entry
        .as_table_mut()
        .ok_or_else(|| anyhow!("config entry {section:?} is not a section"))?;
    sec.insert(key.to_string(), value);
    Ok(())
}
