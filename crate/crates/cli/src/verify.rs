//! Self-checks: exact-solution fidelity, gradient exactness and schedule
//! arithmetic, each reported with its measured error.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rodpinn::analysis::{exact_bar, find_peaks, BarSupport, TimeSeries};
use rodpinn::problems::residuals;
use rodpinn::{
    loss_gradient, Checkpoint, FormId, InitKind, Initializer, Jet2, JetBatch,
    MlpNetwork, Schedule, ScheduleKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    All,
    Oracle,
    Gradient,
    Schedule,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<32} {}", self.name, self.detail)
    }
}

fn check(name: &str, measured: f64, tol: f64) -> Check {
    Check {
        name: name.into(),
        passed: measured.is_finite() && measured <= tol,
        detail: format!("error {measured:.3e} (tolerance {tol:.0e})"),
    }
}

pub fn run(suite: Suite, checkpoint: Option<&Path>) -> Vec<Check> {
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Oracle) {
        out.extend(oracle_checks());
    }
    if matches!(suite, Suite::All | Suite::Gradient) {
        out.push(gradient_check());
    }
    if matches!(suite, Suite::All | Suite::Schedule) {
        out.extend(schedule_checks());
    }
    if let Some(p) = checkpoint {
        out.push(checkpoint_check(p));
    }
    out
}

/// Largest error of a history's first two maxima against expected
/// (time, value) pairs. Times are compared to one sample.
fn peak_error(bc: BarSupport, x: f64, t1: f64, expect: [(f64, f64); 2]) -> (f64, f64) {
    let dt = 0.01;
    let n = (t1 / dt).round() as usize + 1;
    let Ok(ts) = TimeSeries::from_fn(0.0, t1, n, |t| exact_bar(bc, x, t, 200).unwrap_or(f64::NAN)) else {
        return (f64::INFINITY, f64::INFINITY);
    };
    let peaks = find_peaks(&ts);
    if peaks.maxima.len() < 2 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mut dv: f64 = 0.0;
    let mut dtime: f64 = 0.0;
    for (k, (t, v)) in expect.iter().enumerate() {
        let (pt, pv) = peaks.maxima[k];
        dv = dv.max((pv - v).abs());
        dtime = dtime.max((pt - t).abs());
    }
    (dv, dtime / dt)
}

fn oracle_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let (dv, samples) = peak_error(BarSupport::PinnedPinned, 0.5, 4.0, [(1.0, 0.125), (3.0, 0.125)]);
    out.push(check("oracle.pinned-pinned.peak-value", dv, 1e-3));
    out.push(check("oracle.pinned-pinned.peak-time", samples, 1.0));
    let (dv, samples) = peak_error(BarSupport::PinnedFree, 1.0, 8.0, [(2.0, 0.5), (6.0, 0.5)]);
    out.push(check("oracle.pinned-free.peak-value", dv, 2e-3));
    out.push(check("oracle.pinned-free.peak-time", samples, 1.0));
    out.push(check("oracle.static-residual", static_residual(), 1e-12));
    out
}

/// Largest residual of the bar forms with the static solution substituted.
pub fn static_residual() -> f64 {
    let (s, f) = (1.0, 0.5);
    let mut worst: f64 = 0.0;
    // Pinned-pinned and pinned-free static shapes as (u, u_x).
    let shapes: [fn(f64) -> (f64, f64); 2] = [
        |x| (x * (1.0 - x) / 4.0, (1.0 - 2.0 * x) / 4.0),
        |x| (x * (2.0 - x) / 4.0, (2.0 - 2.0 * x) / 4.0),
    ];
    for shape in shapes {
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let (u, ux) = shape(x);
            let disp = Jet2 { v: u, dx: ux, dt: 0.0, dxx: -f / s, dtt: 0.0 };
            let strain = Jet2 { v: ux, dx: -f / s, dt: 0.0, dxx: 0.0, dtt: 0.0 };
            let still = Jet2::<f64>::default();
            for form in [FormId::BarF1, FormId::BarF2a, FormId::BarF2b, FormId::BarF3] {
                let jets: Vec<Jet2> = form
                    .output_names()
                    .iter()
                    .map(|n| match *n {
                        "u" => disp,
                        "zeta_u" => strain,
                        _ => still,
                    })
                    .collect();
                match residuals(form, &jets, s, f, 0.0) {
                    Ok(r) => worst = r.iter().fold(worst, |m, v| m.max(v.abs())),
                    Err(_) => return f64::INFINITY,
                }
            }
        }
    }
    worst
}

/// A loss reading every jet component nonlinearly:
/// `mean(v^2 + v dx + sin(dt) + dxx^2 dtt + 0.5 dtt^2)`.
fn probe_loss(batch: &JetBatch, adj: &mut JetBatch) -> rodpinn::Result<f64> {
    let n = batch.n_points();
    let w = 1.0 / n as f64;
    adj.fill(0.0);
    let mut total = 0.0;
    for p in 0..n {
        let j = batch.get(p, 0);
        total += j.v * j.v + j.v * j.dx + j.dt.sin() + j.dxx * j.dxx * j.dtt + 0.5 * j.dtt * j.dtt;
        adj.set(
            p,
            0,
            Jet2 {
                v: w * (2.0 * j.v + j.dx),
                dx: w * j.v,
                dt: w * j.dt.cos(),
                dxx: w * 2.0 * j.dxx * j.dtt,
                dtt: w * (j.dxx * j.dxx + j.dtt),
            },
        );
    }
    Ok(total * w)
}

/// Maximum relative error of the exact gradient against central differences.
/// Components far below the gradient's scale are compared against that scale.
pub fn gradient_error(widths: Vec<usize>, seed: u64, n_points: usize) -> rodpinn::Result<f64> {
    let mut net = MlpNetwork::initialized(widths, Initializer::new(InitKind::GlorotUniform, seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n_points).map(|_| (rng.random(), rng.random::<f64>() * 4.0)).collect();
    let (_, grad) = loss_gradient(&net, &pts, &probe_loss)?;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let x0 = net.params()[i];
        let h = 1e-5 * x0.abs().max(1.0);
        net.params_mut()[i] = x0 + h;
        let plus = loss_gradient(&net, &pts, &probe_loss)?.0;
        net.params_mut()[i] = x0 - h;
        let minus = loss_gradient(&net, &pts, &probe_loss)?.0;
        net.params_mut()[i] = x0;
        let fd = (plus - minus) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    Ok(worst)
}

fn gradient_check() -> Check {
    let err = [(vec![2, 8, 8, 1], 1), (vec![2, 6, 6, 6, 1], 2)]
        .into_iter()
        .map(|(w, seed)| gradient_error(w, seed, 8).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    check("gradient.central-differences", err, 1e-5)
}

fn schedule_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let lrs4 = Schedule {
        kind: ScheduleKind::Lrs4Piecewise,
        init_lr: vec![0.003],
        cycles: vec![10; 4],
        period: 2500,
        decay: 0.9,
        factors: vec![0.9, 0.8, 0.7],
        extension: 0,
    }
    .validated();
    let err = match lrs4 {
        Ok(s) => [0.003, 2.7e-3, 2.16e-3, 1.512e-3]
            .iter()
            .enumerate()
            .map(|(c, want)| {
                s.lr_at(10 * c).map_or(f64::INFINITY, |lr| (lr - want).abs() / want)
            })
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    out.push(check("schedule.piecewise-sequence", err, 1e-15));

    let err = match Schedule::new(ScheduleKind::Lrs1Ca, 0.01, vec![5000, 5000]) {
        Ok(s) => {
            let at = |k| s.lr_at(k).unwrap_or(f64::NAN);
            let resets = (at(0) - 0.01).abs().max((at(5000) - 0.01).abs());
            let ratio = (at(2500) / at(0) - 0.9).abs().max((at(7500) / at(5000) - 0.9).abs());
            resets.max(ratio)
        }
        Err(_) => f64::INFINITY,
    };
    out.push(check("schedule.cyclic-period-ratio", err, 1e-12));
    out
}

fn checkpoint_check(path: &Path) -> Check {
    let name = "checkpoint.load".to_string();
    match Checkpoint::load(path) {
        Ok(ck) => Check {
            name,
            passed: true,
            detail: format!(
                "step {} widths {:?} ({} parameters)",
                ck.step,
                ck.network.widths(),
                ck.network.params().len()
            ),
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("{}: {e}", path.display()),
        },
    }
}
