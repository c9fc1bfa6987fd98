//! Adam, learning-rate schedules and the training loop.

mod adam;
mod schedule;

pub use adam::{adam_step, AdamState};
pub use schedule::{Schedule, ScheduleKind, DEFAULT_DECAY, DEFAULT_PERIOD};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::barriers::{barrier_term, BarrierSpec};
use crate::error::{Error, Result};
use crate::jets::{Evaluator, JetBatch, Tape};
use crate::network::{Checkpoint, InitKind, Initializer, MlpNetwork};
use crate::problems::Problem;
use crate::sampling::{random_grid, regular_grid, Grid, GridKind};

/// How to build the collocation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub kind: GridKind,
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self, t_final: f64) -> Result<Grid> {
        match self.kind {
            GridKind::Regular => regular_grid(self.n, t_final),
            GridKind::FixedRandom(seed) => random_grid(self.n, t_final, Some(seed)),
            GridKind::VaryingRandom => random_grid(self.n, t_final, None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub problem: Problem,
    pub grid: GridSpec,
    pub widths: Vec<usize>,
    pub init: Initializer,
    pub schedule: Schedule,
    pub barrier: Option<BarrierSpec>,
    /// First step without the barrier.
    pub barrier_off_at: Option<usize>,
    /// Loss history is recorded every `log_stride` steps and at the last step.
    pub log_stride: usize,
    /// Parameters are checkpointed every `checkpoint_stride` steps; 0 disables.
    pub checkpoint_stride: usize,
    pub deterministic: bool,
    pub run_id: String,
    pub workers: usize,
}

impl TrainConfig {
    /// Defaults around `problem`: regular 51 x 51 grid, four hidden layers of
    /// 64, He initialisation with seed 0, and a single LRS1 cycle.
    pub fn new(problem: Problem, steps: usize) -> Result<Self> {
        let n_out = problem.form.n_outputs();
        Ok(Self {
            problem,
            grid: GridSpec {
                kind: GridKind::Regular,
                n: 51,
            },
            widths: vec![2, 64, 64, 64, 64, n_out],
            init: Initializer::new(InitKind::HeUniform, 0),
            schedule: Schedule::new(ScheduleKind::Lrs1Ca, 1e-3, vec![steps])?,
            barrier: None,
            barrier_off_at: None,
            log_stride: 100,
            checkpoint_stride: 0,
            deterministic: true,
            run_id: "run".into(),
            workers: 1,
        })
    }

    pub fn steps(&self) -> usize {
        self.schedule.total_steps()
    }

    pub fn validate(&self) -> Result<()> {
        let form = self.problem.form;
        if self.widths.first() != Some(&2) || self.widths.last() != Some(&form.n_outputs()) {
            return Err(Error::invalid(format!(
                "{form} needs widths [2, ..., {}], got {:?}",
                form.n_outputs(),
                self.widths
            )));
        }
        if self.log_stride == 0 {
            return Err(Error::invalid("log stride must be positive"));
        }
        if self.deterministic && self.grid.kind == GridKind::VaryingRandom {
            return Err(Error::invalid("a deterministic run cannot use a varying random grid"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::invalid(format!("unusable run id {:?}", self.run_id)));
        }
        Ok(())
    }

    fn barrier_at(&self, step: usize) -> Option<&BarrierSpec> {
        let on = self.barrier_off_at.is_none_or(|off| step < off);
        self.barrier.as_ref().filter(|b| b.enabled() && on)
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    /// Residual loss plus barrier penalty.
    pub total: f64,
    pub groups: Vec<f64>,
    pub barrier: f64,
    pub margin: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct Divergence {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub group_names: Vec<String>,
    pub grid: Grid,
    pub history: Vec<LossRecord>,
    /// Learning rate used at every completed step.
    pub lr_trace: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Step with the lowest residual loss seen, barrier excluded.
    pub best_step: usize,
    pub best_loss: f64,
    pub best_params: Vec<f64>,
    pub network: MlpNetwork,
    pub init: Initializer,
    pub diverged: Option<Divergence>,
    /// Steps at which the barrier margin was inside the buffer.
    pub inside_buffer_steps: Vec<usize>,
}

impl RunRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.total)
    }

    /// Network carrying the best parameters.
    pub fn best_network(&self) -> MlpNetwork {
        let mut net = self.network.clone();
        net.set_params(&self.best_params).expect("same shape");
        net
    }

    /// `step,total_loss,<groups...>,barrier,margin,lr`.
    pub fn write_history_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "total_loss".to_string()];
        header.extend(self.group_names.iter().cloned());
        header.extend(["barrier", "margin", "lr"].map(String::from));
        wr.write_record(&header)?;
        for r in &self.history {
            let mut row = vec![r.step.to_string(), r.total.to_string()];
            row.extend(r.groups.iter().map(f64::to_string));
            row.push(r.barrier.to_string());
            row.push(r.margin.map(|m| m.to_string()).unwrap_or_default());
            row.push(r.lr.to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reads a history written by [`RunRecord::write_history_csv`], returning
/// the group names and the rows.
pub fn read_history_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<LossRecord>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let n = header.len();
    if n < 5 || &header[0] != "step" || &header[1] != "total_loss" || &header[n - 1] != "lr" {
        return Err(Error::invalid("loss history: unexpected header"));
    }
    let names = header.iter().skip(2).take(n - 5).map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("loss history: bad number {:?}", &rec[i])))
        };
        rows.push(LossRecord {
            step: rec[0]
                .parse()
                .map_err(|_| Error::invalid(format!("loss history: bad step {:?}", &rec[0])))?,
            total: num(1)?,
            groups: (2..n - 3).map(num).collect::<Result<_>>()?,
            barrier: num(n - 3)?,
            margin: if rec[n - 2].is_empty() { None } else { Some(num(n - 2)?) },
            lr: num(n - 1)?,
        });
    }
    Ok((names, rows))
}

#[derive(Serialize, Deserialize)]
struct LrRow {
    step: usize,
    lr: f64,
}

pub fn write_lr_csv<W: Write>(w: W, lr_trace: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (step, &lr) in lr_trace.iter().enumerate() {
        wr.serialize(LrRow { step, lr })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_lr_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    csv::Reader::from_reader(r)
        .deserialize::<LrRow>()
        .map(|row| Ok(row?.lr))
        .collect()
}

/// Trains a fresh network. Numerical failure ends the run early and is
/// reported in [`RunRecord::diverged`]; only configuration problems are
/// returned as errors.
pub fn train(cfg: &TrainConfig) -> Result<RunRecord> {
    let net = MlpNetwork::initialized(cfg.widths.clone(), cfg.init)?;
    train_from(cfg, net, 0)
}

/// Continues training `net`, numbering steps from `first_step`.
pub fn train_from(cfg: &TrainConfig, mut net: MlpNetwork, first_step: usize) -> Result<RunRecord> {
    cfg.validate()?;
    if net.widths() != cfg.widths.as_slice() {
        return Err(Error::invalid("network widths differ from the configuration"));
    }
    let grid = cfg.grid.build(cfg.problem.t_final)?;
    let (points, layout) = grid.points();
    let eval = Evaluator::new(cfg.workers)?;
    let steps = cfg.steps();
    let mut adam = AdamState::new(net.params().len());

    let mut rec = RunRecord {
        run_id: cfg.run_id.clone(),
        group_names: cfg.problem.group_names(),
        grid,
        history: Vec::new(),
        lr_trace: Vec::with_capacity(steps.saturating_sub(first_step)),
        checkpoints: Vec::new(),
        best_step: first_step,
        best_loss: f64::INFINITY,
        best_params: net.params().to_vec(),
        network: net.clone(),
        init: cfg.init,
        diverged: None,
        inside_buffer_steps: Vec::new(),
    };

    let mut tape = Tape::default();
    let mut batch = JetBatch::zeros(0, 0);
    let mut adjoint = JetBatch::zeros(points.len(), net.n_outputs());
    for step in first_step..steps {
        let lr = cfg.schedule.lr_at(step)?;
        let outcome = (|| -> Result<(LossRecord, Vec<f64>)> {
            eval.forward_into(&net, &points, &mut tape, &mut batch)?;
            adjoint.fill(0.0);
            let loss = cfg.problem.loss(&batch, &points, &layout, &mut adjoint)?;
            let (barrier, margin) = match cfg.barrier_at(step) {
                Some(spec) => {
                    let term = barrier_term(spec, &cfg.problem, &batch, &points, &layout, &mut adjoint)?;
                    if term.inside {
                        rec.inside_buffer_steps.push(step);
                    }
                    (term.penalty, Some(term.margin))
                }
                None => (0.0, None),
            };
            let total = loss.total + barrier;
            if !total.is_finite() {
                return Err(Error::Diverged {
                    point: batch.first_non_finite(),
                });
            }
            if loss.total < rec.best_loss {
                rec.best_loss = loss.total;
                rec.best_step = step;
                rec.best_params.copy_from_slice(net.params());
            }
            let grad = eval.backward(&net, &mut tape, &adjoint);
            Ok((
                LossRecord {
                    step,
                    total,
                    groups: loss.groups,
                    barrier,
                    margin,
                    lr,
                },
                grad,
            ))
        })();

        let (row, grad) = match outcome {
            Ok(v) => v,
            Err(e @ (Error::Diverged { .. } | Error::NearSingularExtension { .. })) => {
                rec.diverged = Some(Divergence {
                    step,
                    reason: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        if step % cfg.log_stride == 0 || step + 1 == steps {
            rec.history.push(row);
        }
        if let Err(e) = adam_step(&mut adam, net.params_mut(), &grad, lr) {
            rec.diverged = Some(Divergence {
                step,
                reason: e.to_string(),
            });
            break;
        }
        rec.lr_trace.push(lr);
        let done = step + 1;
        if cfg.checkpoint_stride > 0 && (done % cfg.checkpoint_stride == 0 || done == steps) {
            rec.checkpoints.push(Checkpoint {
                network: net.clone(),
                init: cfg.init,
                step: done as u64,
            });
        }
    }
    rec.network = net;
    Ok(rec)
}
