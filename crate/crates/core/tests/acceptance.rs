//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line reaches the terminal.
//! Deterministic criteria decide the exit status. The training criteria are
//! stochastic and reported with their measurements; a FAIL there does not
//! fail the build. Set `RODPINN_ACCEPTANCE_QUICK=1` to skip them.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{fd_gradient, fd_jet, gradient_rel_err, jet_rel_err, mixed_loss, random_net, random_points, rng};
use rodpinn::analysis::{
    damping_percent, exact_bar, find_peaks, fit_shift_amp, sample_network, smse_re, BarSupport,
    Probe, TimeSeries,
};
use rodpinn::barriers::{
    acceleration_norm, barrier_value, detect_static, margin, BarrierBasis, BarrierShape,
    BarrierSpec,
};
use rodpinn::problems::residuals;
use rodpinn::training::GridSpec;
use rodpinn::{
    jet_batch, jet_forward, loss_gradient, param_count, train, Error, FormId, GridKind, InitKind,
    Initializer, Jet2, Load, MlpNetwork, Preset, Problem, RunRecord, Schedule, ScheduleKind,
    TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: u8,
    name: &'static str,
    stochastic: bool,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let quick = std::env::var_os("RODPINN_ACCEPTANCE_QUICK").is_some();
    // libtest flags such as `--nocapture` or a name filter are accepted and
    // ignored; `--list` prints nothing, so discovery tools see no tests.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria = [
        Criterion { id: 1, name: "derivative exactness", stochastic: false, budget: Some(secs(5)), run: c1_derivatives },
        Criterion { id: 2, name: "gradient exactness", stochastic: false, budget: Some(secs(30)), run: c2_gradient },
        Criterion { id: 3, name: "parameter counts", stochastic: false, budget: None, run: c3_param_counts },
        Criterion { id: 4, name: "oracle fidelity", stochastic: false, budget: Some(secs(10)), run: c4_oracle },
        Criterion { id: 5, name: "schedule exactness", stochastic: false, budget: None, run: c5_schedules },
        Criterion { id: 6, name: "barrier properties", stochastic: false, budget: None, run: c6_barriers },
        Criterion { id: 7, name: "shift/amplification round trip", stochastic: false, budget: None, run: c7_fit },
        Criterion { id: 8, name: "desk-scale pinned-pinned training", stochastic: true, budget: None, run: c8_training },
        Criterion { id: 9, name: "static-solution filtering", stochastic: true, budget: None, run: c9_static_filter },
        Criterion { id: 10, name: "zero-load sanity", stochastic: true, budget: None, run: c10_zero_load },
        Criterion { id: 11, name: "SMSE and relative error", stochastic: false, budget: None, run: c11_smse },
    ];
    let mut hard_failures = 0;
    for c in &criteria {
        if c.stochastic && quick {
            println!("criterion {:>2} SKIP {}: quick mode", c.id, c.name);
            continue;
        }
        let start = Instant::now();
        let mut out = (c.run)();
        let elapsed = start.elapsed();
        if let Some(budget) = c.budget {
            if elapsed > budget {
                out.pass = false;
                out.detail.push_str(&format!("; over the {}s budget", budget.as_secs()));
            }
        }
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let note = if c.stochastic && !out.pass { " [stochastic, not asserted]" } else { "" };
        println!(
            "criterion {:>2} {tag} {}: {} ({:.1}s){note}",
            c.id,
            c.name,
            out.detail,
            elapsed.as_secs_f64()
        );
        if !out.pass && !c.stochastic {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        println!("{hard_failures} deterministic criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn c1_derivatives() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let net = random_net(&mut r, 3, 16, 1);
        for p in random_points(&mut r, 20, 4.0) {
            let jet = jet_forward(&net, p).expect("jets")[0];
            worst = worst.max(jet_rel_err(&jet, &fd_jet(&net, p, 0, 0.02), 1e-3));
        }
    }
    Outcome::new(worst < 1e-6, format!("max relative error {worst:.2e} over 20 nets x 20 points"))
}

fn c2_gradient() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let mut largest = 0;
    for _ in 0..10 {
        let net = random_net(&mut r, 3, 9, 1);
        if net.params().len() > 200 {
            continue;
        }
        largest = largest.max(net.params().len());
        let pts = random_points(&mut r, 10, 4.0);
        let (_, exact) = loss_gradient(&net, &pts, &mixed_loss).expect("gradient");
        let fd = fd_gradient(&net, |n| loss_gradient(n, &pts, &mixed_loss).expect("loss").0, 1e-5);
        worst = worst.max(gradient_rel_err(&exact, &fd));
    }
    Outcome::new(
        worst < 1e-5,
        format!("max relative error {worst:.2e} (nets up to {largest} parameters)"),
    )
}

fn c3_param_counts() -> Outcome {
    let h4 = |out| vec![2, 64, 64, 64, 64, out];
    let cases: [(Vec<usize>, usize); 9] = [
        (h4(1), 12737),
        (h4(2), 12802),
        (h4(3), 12867),
        (vec![2, 64, 64, 2], 4482),
        (vec![2, 32, 32, 2], 1218),
        (vec![2, 32, 32, 3], 1251),
        (vec![2, 32, 32, 1], 1185),
        (vec![2, 16, 16, 1], 337),
        (vec![2, 8, 8, 1], 105),
    ];
    let wrong: Vec<String> = cases
        .iter()
        .filter_map(|(w, want)| {
            let got = param_count(w).ok()?;
            (got != *want).then(|| format!("{w:?}: {got} != {want}"))
        })
        .collect();
    if wrong.is_empty() {
        Outcome::new(true, "all 9 counts exact")
    } else {
        Outcome::new(false, wrong.join("; "))
    }
}

/// First two maxima of an exact history sampled at 0.01.
fn oracle_maxima(bc: BarSupport, x: f64, t1: f64) -> Vec<(f64, f64)> {
    let n = (t1 / 0.01).round() as usize + 1;
    let ts = TimeSeries::from_fn(0.0, t1, n, |t| exact_bar(bc, x, t, 200).expect("oracle")).expect("series");
    find_peaks(&ts).maxima
}

fn static_residual() -> f64 {
    let (s, f) = (1.0, 0.5);
    let shapes: [fn(f64) -> (f64, f64); 2] = [
        |x| (x * (1.0 - x) / 4.0, (1.0 - 2.0 * x) / 4.0),
        |x| (x * (2.0 - x) / 4.0, (2.0 - 2.0 * x) / 4.0),
    ];
    let mut worst: f64 = 0.0;
    for shape in shapes {
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let (u, ux) = shape(x);
            let disp = Jet2 { v: u, dx: ux, dt: 0.0, dxx: -f / s, dtt: 0.0 };
            let strain = Jet2 { v: ux, dx: -f / s, dt: 0.0, dxx: 0.0, dtt: 0.0 };
            for form in [FormId::BarF1, FormId::BarF2a, FormId::BarF2b, FormId::BarF3] {
                let jets: Vec<Jet2> = form
                    .output_names()
                    .iter()
                    .map(|n| match *n {
                        "u" => disp,
                        "zeta_u" => strain,
                        _ => Jet2::default(),
                    })
                    .collect();
                let r = residuals(form, &jets, s, f, 0.0).expect("residuals");
                worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
            }
        }
    }
    worst
}

fn c4_oracle() -> Outcome {
    let dt = 0.01;
    let near = |m: &[(f64, f64)], want: [(f64, f64); 2], tol: f64| {
        m.len() >= 2
            && want
                .iter()
                .zip(m)
                .all(|((t, v), (pt, pv))| (pt - t).abs() <= dt + 1e-9 && (pv - v).abs() <= tol)
    };
    let pp = oracle_maxima(BarSupport::PinnedPinned, 0.5, 4.0);
    let pf = oracle_maxima(BarSupport::PinnedFree, 1.0, 8.0);
    let stat = static_residual();
    let pass = near(&pp, [(1.0, 0.125), (3.0, 0.125)], 1e-3)
        && near(&pf, [(2.0, 0.5), (6.0, 0.5)], 2e-3)
        && stat < 1e-12;
    let fmt = |m: &[(f64, f64)]| {
        m.iter().take(2).map(|(t, v)| format!("{v:.6}@{t:.2}")).collect::<Vec<_>>().join(", ")
    };
    Outcome::new(
        pass,
        format!("pinned-pinned {}; pinned-free {}; static residual {stat:.1e}", fmt(&pp), fmt(&pf)),
    )
}

fn c5_schedules() -> Outcome {
    let lrs4 = Schedule {
        kind: ScheduleKind::Lrs4Piecewise,
        init_lr: vec![0.003],
        cycles: vec![100; 4],
        period: 2500,
        decay: 0.9,
        factors: vec![0.9, 0.8, 0.7],
        extension: 0,
    }
    .validated()
    .expect("schedule");
    let seq: Vec<f64> = (0..4).map(|c| lrs4.lr_at(100 * c).expect("lr")).collect();
    let want = [0.003, 2.7e-3, 2.16e-3, 1.512e-3];
    let seq_err = seq.iter().zip(want).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);

    let lrs1 = Schedule::new(ScheduleKind::Lrs1Ca, 0.02, vec![5000; 3]).expect("schedule");
    let mut cyc_err: f64 = 0.0;
    for c in 0..3 {
        let start = c * 5000;
        let lr0 = lrs1.lr_at(start).expect("lr");
        cyc_err = cyc_err.max((lr0 - 0.02).abs());
        cyc_err = cyc_err.max((lrs1.lr_at(start + 2500).expect("lr") / lr0 - 0.9).abs());
    }
    Outcome::new(
        seq_err <= 1e-15 && cyc_err <= 1e-12,
        format!("piecewise {seq:?} (rel. error {seq_err:.1e}); cyclic error {cyc_err:.1e}"),
    )
}

fn c6_barriers() -> Outcome {
    let mut monotone = true;
    for shape in [BarrierShape::Inverse, BarrierShape::Log] {
        for depth in [0.0, 0.1, 1.0] {
            let mut prev = f64::INFINITY;
            for i in 1..=400 {
                let m = depth + 1e-3 * 1.03f64.powi(i);
                let b = barrier_value(shape, m, depth).expect("outside buffer");
                monotone &= b < prev;
                prev = b;
            }
        }
    }
    let inside = [1.0, 0.5, -0.2].iter().all(|&m| {
        [BarrierShape::Inverse, BarrierShape::Log]
            .iter()
            .all(|&s| matches!(barrier_value(s, m, 1.0), Err(Error::InsideBuffer { .. })))
    });
    let example = barrier_value(BarrierShape::Inverse, acceleration_norm(&[3.0, 4.0]), 1.0).expect("example");
    Outcome::new(
        monotone && inside && example == 0.25,
        format!("monotone {monotone}, inside-buffer rejected {inside}, (3,4) with depth 1 gives {example}"),
    )
}

fn c7_fit() -> Outcome {
    let at = |t: f64| exact_bar(BarSupport::PinnedPinned, 0.5, t, 200).expect("oracle");
    let reference = TimeSeries::from_fn(0.0, 4.0, 401, at).expect("series");
    let computed = TimeSeries::from_fn(0.0, 4.0, 401, |t| 1.1 * at(t - 0.2) - 0.01).expect("series");
    let f = fit_shift_amp(&computed, &reference).expect("fit");
    let pass = (f.amp - 1.1).abs() < 1e-3 && (f.shift - 0.2).abs() <= 0.01 + 1e-12 && (f.vshift + 0.01).abs() < 1e-3;
    Outcome::new(
        pass,
        format!("recovered amp {:.6}, shift {:.3}, vshift {:.6}", f.amp, f.shift, f.vshift),
    )
}

fn bar_problem(preset: Preset, form: FormId) -> Problem {
    preset
        .build(form, 1.0, Load::Constant(0.5), Load::Constant(0.0))
        .expect("preset")
}

fn run_training(cfg: &TrainConfig) -> Option<RunRecord> {
    train(cfg).ok().filter(|r| r.diverged.is_none())
}

fn history(net: &MlpNetwork, form: FormId, probe: Probe, t1: f64) -> TimeSeries {
    let n = (t1 / 0.01).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * 0.01).collect();
    sample_network(net, form, &probe, &times, t1)
        .and_then(|t| t.series(0))
        .expect("probe")
}

/// Criterion 8 setup. The learning-rate period and decay are not fixed by
/// the criterion; these are the library defaults.
fn c8_config(seed: u64) -> TrainConfig {
    let steps = 25_000;
    let mut cfg = TrainConfig::new(bar_problem(Preset::BarPinnedPinned, FormId::BarF2a), steps).expect("config");
    cfg.grid = GridSpec { kind: GridKind::FixedRandom(seed), n: 51 };
    cfg.widths = vec![2, 32, 32, 2];
    cfg.init = Initializer::new(InitKind::HeUniform, seed);
    cfg.schedule = Schedule::new(ScheduleKind::Lrs3Nca, 0.01, vec![steps]).expect("schedule");
    cfg.log_stride = 1000;
    cfg
}

fn c8_training() -> Outcome {
    let mut reports = Vec::new();
    for seed in 0..3 {
        let start = Instant::now();
        let Some(rec) = run_training(&c8_config(seed)) else {
            reports.push(format!("seed {seed}: diverged"));
            continue;
        };
        let loss = rec.history.last().map_or(f64::NAN, |h| h.total);
        let ts = history(&rec.network, FormId::BarF2a, Probe::MidspanDisp, 4.0);
        let maxima = find_peaks(&ts).maxima;
        let spacing = (maxima.len() >= 2).then(|| maxima[1].0 - maxima[0].0);
        let damping = damping_percent(&ts).ok().map(|d| d.percent);
        let stat = detect_static(&ts).flagged;
        // The runtime target applies to each training run.
        let elapsed = start.elapsed();
        let pass = elapsed <= secs(600)
            && loss < 1e-3
            && spacing.is_some_and(|s| (s - 2.0).abs() <= 0.3)
            && damping.is_some_and(|d| d.abs() < 15.0)
            && !stat;
        reports.push(format!(
            "seed {seed}: loss {loss:.2e}, {} maxima, spacing {}, damping {}, static {stat}, {:.0}s",
            maxima.len(),
            spacing.map_or("n/a".into(), |s| format!("{s:.2}")),
            damping.map_or("n/a".into(), |d| format!("{d:.1}%")),
            elapsed.as_secs_f64()
        ));
        if pass {
            return Outcome::new(true, reports.join("; "));
        }
    }
    Outcome::new(false, reports.join("; "))
}

/// Criterion 9 setup. Grid resolution and schedule kind are not fixed by the
/// criterion; a 31 x 31 regular grid keeps six runs within a desk budget.
fn c9_config(seed: u64, barrier: bool) -> TrainConfig {
    let steps = 10_000;
    let mut cfg = TrainConfig::new(bar_problem(Preset::BarPinnedFree, FormId::BarF1), steps).expect("config");
    cfg.grid = GridSpec { kind: GridKind::Regular, n: 31 };
    cfg.widths = vec![2, 64, 64, 1];
    cfg.init = Initializer::new(InitKind::HeUniform, seed);
    cfg.schedule = Schedule::new(ScheduleKind::Lrs3Nca, 0.01, vec![steps]).expect("schedule");
    cfg.log_stride = 1000;
    if barrier {
        cfg.barrier = Some(
            BarrierSpec::new(BarrierShape::Inverse, BarrierBasis::Acceleration, 1.0, 1.0).expect("barrier"),
        );
    }
    cfg
}

fn final_accel_margin(cfg: &TrainConfig, net: &MlpNetwork) -> f64 {
    let grid = cfg.grid.build(cfg.problem.t_final).expect("grid");
    let (pts, layout) = grid.points();
    let batch = jet_batch(net, &pts).expect("jets");
    margin(BarrierBasis::Acceleration, &cfg.problem, &batch, &pts, &layout).expect("margin")
}

fn c9_static_filter() -> Outcome {
    let mut reports = Vec::new();
    let mut margins = Vec::new();
    for seed in 0..3 {
        let mut flags = [None, None];
        let mut seed_margins = [f64::NAN; 2];
        for (k, barrier) in [false, true].into_iter().enumerate() {
            let cfg = c9_config(seed, barrier);
            if let Some(rec) = run_training(&cfg) {
                let ts = history(&rec.network, FormId::BarF1, Probe::FreeEndDisp, cfg.problem.t_final);
                flags[k] = Some(detect_static(&ts).flagged);
                seed_margins[k] = final_accel_margin(&cfg, &rec.network);
            }
        }
        reports.push(format!(
            "seed {seed}: static without/with barrier {:?}/{:?}, accel margin {:.3}/{:.3}",
            flags[0], flags[1], seed_margins[0], seed_margins[1]
        ));
        margins.push(seed_margins);
        if flags == [Some(true), Some(false)] {
            return Outcome::new(true, reports.join("; "));
        }
    }
    let any_static = reports.iter().any(|r| r.contains("Some(true)/"));
    if any_static {
        return Outcome::new(false, reports.join("; "));
    }
    // No unbarriered run went static: fall back to the margin ratio.
    let ratio = margins
        .iter()
        .map(|[off, on]| on / off)
        .fold(f64::NAN, f64::max);
    Outcome::new(
        ratio >= 2.0,
        format!("{}; no static run, best margin ratio {ratio:.2}", reports.join("; ")),
    )
}

fn c10_zero_load() -> Outcome {
    let problem = bar_problem(Preset::BarPinnedPinned, FormId::BarF2a).unloaded();
    let mut cfg = TrainConfig::new(problem, 5000).expect("config");
    cfg.grid = GridSpec { kind: GridKind::Regular, n: 21 };
    cfg.widths = vec![2, 16, 16, 2];
    cfg.log_stride = 1000;
    let Some(rec) = run_training(&cfg) else {
        return Outcome::new(false, "diverged");
    };
    let (pts, _) = rec.grid.points();
    let batch = jet_batch(&rec.network, &pts).expect("jets");
    let mean = (0..pts.len()).map(|p| batch.get(p, 0).v.abs()).sum::<f64>() / pts.len() as f64;
    Outcome::new(mean < 1e-2, format!("mean |u| over the grid {mean:.2e}"))
}

fn c11_smse() -> Outcome {
    let exact = TimeSeries::from_fn(0.0, 4.0, 401, |t| exact_bar(BarSupport::PinnedPinned, 0.5, t, 200).expect("oracle"))
        .expect("series");
    let shifted = TimeSeries::new(exact.times().to_vec(), exact.values().iter().map(|v| v + 8e-3).collect())
        .expect("series");
    let (smse, re) = smse_re(&shifted, &exact, 0.25).expect("smse");
    let same = smse_re(&exact, &exact, 0.25).expect("smse");
    let pass = (smse - 8e-3).abs() < 1e-12 && (re - 0.032).abs() < 1e-12 && same == (0.0, 0.0);
    Outcome::new(
        pass,
        format!("smse {smse:.4e} gives RE {:.2}%; identical series give {same:?}", 100.0 * re),
    )
}
