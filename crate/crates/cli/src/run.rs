//! Executes a resolved configuration and writes every artifact.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rodpinn::analysis::{
    damping_percent, exact_bar_general, fit_shift_amp, sample_network, smse_re, write_diagnostics,
    BarSupport, DiagnosticsRow, Probe, TimeSeries,
};
use rodpinn::barriers::detect_static;
use rodpinn::training::{train_from, write_lr_csv};
use rodpinn::{Checkpoint, FormId, MlpNetwork, Preset, RunRecord};

use crate::config::{Resolved, RunConfigFile};

/// Modes used for the exact reference.
const ORACLE_TERMS: usize = 200;

/// Stations of the shape probe.
const SHAPE_STATIONS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub struct RunOutcome {
    pub record: RunRecord,
    pub files: Vec<PathBuf>,
}

/// Trains from `resume` (or a fresh initialisation) and writes artifacts into
/// the configured output directory.
pub fn execute(file: &RunConfigFile, resume: Option<&Path>) -> Result<RunOutcome> {
    let resolved = file.resolve()?;
    let cfg = &resolved.train;
    let out = file.out_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let (net, first_step) = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            (ck.network, ck.step as usize)
        }
        None => (MlpNetwork::initialized(cfg.widths.clone(), cfg.init)?, 0),
    };
    let record = train_from(cfg, net, first_step)?;

    let mut w = ArtifactWriter {
        dir: out,
        prefix: format!("{}-", cfg.run_id),
        files: Vec::new(),
    };
    w.write("config.toml", |f| Ok(std::io::Write::write_all(f, file.to_toml()?.as_bytes())?))?;
    w.write("grid.csv", |f| Ok(record.grid.write_csv(f)?))?;
    w.write("loss.csv", |f| Ok(record.write_history_csv(f)?))?;
    w.write("lr.csv", |f| Ok(write_lr_csv(f, &record.lr_trace)?))?;

    let form = cfg.problem.form;
    let t_final = cfg.problem.t_final;
    for probe in probes(resolved.preset) {
        let table = sample_network(&record.network, form, &probe, &resolved.probe_times, t_final)?;
        w.write(&format!("{}.csv", probe.name()), |f| Ok(table.write_csv(f)?))?;
    }

    let mut checkpoints = record.checkpoints.clone();
    let last = (first_step + cfg.steps()) as u64;
    if record.diverged.is_none() && checkpoints.last().is_none_or(|c| c.step != last) {
        checkpoints.push(Checkpoint {
            network: record.network.clone(),
            init: record.init,
            step: last,
        });
    }
    let mut rows = Vec::new();
    for ck in &checkpoints {
        rows.push(diagnose(&resolved, &ck.network, ck.step as usize)?);
        let path = w.path(&format!("{}.ckpt", ck.step));
        ck.save(&path)?;
        w.files.push(path);
    }
    w.write("diagnostics.csv", |f| Ok(write_diagnostics(f, &rows)?))?;

    Ok(RunOutcome {
        record,
        files: w.files,
    })
}

struct ArtifactWriter {
    dir: PathBuf,
    prefix: String,
    files: Vec<PathBuf>,
}

impl ArtifactWriter {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.prefix))
    }

    fn write(&mut self, suffix: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.path(suffix);
        let mut f = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        body(&mut f).with_context(|| format!("writing {}", path.display()))?;
        std::io::Write::flush(&mut f)?;
        self.files.push(path);
        Ok(())
    }
}

fn probes(preset: Preset) -> Vec<Probe> {
    let tip = match preset {
        Preset::BarPinnedFree | Preset::RodCantilever => 1.0,
        _ => 0.5,
    };
    vec![
        Probe::MidspanDisp,
        Probe::FreeEndDisp,
        Probe::Shape(SHAPE_STATIONS.to_vec()),
        Probe::Velocity(tip),
        Probe::Slope(0.0),
    ]
}

/// The history the diagnostics are computed on: free end for the pinned-free
/// bar, midspan otherwise.
fn primary_probe(preset: Preset) -> Probe {
    match preset {
        Preset::BarPinnedFree => Probe::FreeEndDisp,
        _ => Probe::MidspanDisp,
    }
}

/// Exact history at the primary station, when the preset has one.
fn reference(resolved: &Resolved) -> Option<TimeSeries> {
    let p = &resolved.train.problem;
    let bc = BarSupport::from_preset(resolved.preset)?;
    let f = p.load_x.constant_value()?;
    let x = if bc == BarSupport::PinnedFree { 1.0 } else { 0.5 };
    let values = resolved
        .probe_times
        .iter()
        .map(|&t| exact_bar_general(bc, p.slenderness, f, x, t, ORACLE_TERMS))
        .collect::<rodpinn::Result<Vec<_>>>()
        .ok()?;
    TimeSeries::new(resolved.probe_times.clone(), values).ok()
}

/// One diagnostics row. Metrics that do not apply are left empty.
pub fn diagnose(resolved: &Resolved, net: &MlpNetwork, step: usize) -> Result<DiagnosticsRow> {
    let form: FormId = resolved.train.problem.form;
    let probe = primary_probe(resolved.preset);
    let table = sample_network(net, form, &probe, &resolved.probe_times, resolved.train.problem.t_final)?;
    let series = table.series(0)?;
    let damping = damping_percent(&series).ok();
    let mut row = DiagnosticsRow {
        step,
        damping_pct: damping.map(|d| d.percent),
        quality: damping.map(|d| d.quality.label().to_string()),
        shift: None,
        vshift: None,
        amp_ptp: None,
        smse: None,
        re: None,
        static_flag: detect_static(&series).flagged,
    };
    if let Some(exact) = reference(resolved) {
        if let Ok(fit) = fit_shift_amp(&series, &exact) {
            row.shift = Some(fit.shift);
            row.vshift = Some(fit.vshift);
            row.amp_ptp = Some(fit.amp_ptp());
        }
        if let Ok((smse, re)) = smse_re(&series, &exact, exact.peak_to_peak()) {
            row.smse = Some(smse);
            row.re = Some(re);
        }
    }
    Ok(row)
}
