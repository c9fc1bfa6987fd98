mod common;

use common::{fd_gradient, gradient_rel_err, mixed_loss, random_net, random_points, rng};
use rodpinn::barriers::{barrier_term, BarrierBasis, BarrierShape, BarrierSpec};
use rodpinn::{
    jet_batch, loss_gradient, regular_grid, Evaluator, FormId, InitKind, Initializer, JetBatch,
    Load, MlpNetwork, Preset, Problem,
};

#[test]
fn loss_gradient_matches_central_differences() {
    let mut r = rng(21);
    for _ in 0..6 {
        let net = random_net(&mut r, 3, 8, 2);
        assert!(net.params().len() <= 200);
        let pts = random_points(&mut r, 12, 4.0);
        let (_, exact) = loss_gradient(&net, &pts, &mixed_loss).unwrap();
        let fd = fd_gradient(&net, |n| loss_gradient(n, &pts, &mixed_loss).unwrap().0, 1e-5);
        let err = gradient_rel_err(&exact, &fd);
        assert!(err < 1e-5, "{:?}: {err:e}", net.widths());
    }
}

#[test]
fn gradient_is_independent_of_worker_count() {
    let mut r = rng(22);
    let net = random_net(&mut r, 2, 16, 2);
    let pts = random_points(&mut r, 2000, 4.0);
    let (l1, g1) = Evaluator::new(1).unwrap().loss_gradient(&net, &pts, &mixed_loss).unwrap();
    let (l3, g3) = Evaluator::new(3).unwrap().loss_gradient(&net, &pts, &mixed_loss).unwrap();
    assert_eq!(l1.to_bits(), l3.to_bits());
    assert!(g1.iter().zip(&g3).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn problem_loss(problem: &Problem, net: &MlpNetwork, n: usize, barrier: Option<&BarrierSpec>) -> (f64, Vec<f64>) {
    let grid = regular_grid(n, problem.t_final).unwrap();
    let (pts, layout) = grid.points();
    let loss = |batch: &JetBatch, adj: &mut JetBatch| {
        adj.fill(0.0);
        let mut total = problem.loss(batch, &pts, &layout, adj)?.total;
        if let Some(spec) = barrier {
            total += barrier_term(spec, problem, batch, &pts, &layout, adj)?.penalty;
        }
        Ok(total)
    };
    loss_gradient(net, &pts, &loss).unwrap()
}

fn check_problem(problem: Problem, barrier: Option<BarrierSpec>, seed: u64) {
    let widths = vec![2, 6, 6, problem.form.n_outputs()];
    let mut net = MlpNetwork::initialized(widths, Initializer::new(InitKind::GlorotUniform, seed)).unwrap();
    // Rod forms divide by the extension output; keep it near one.
    if let Some(c) = problem.form.output_index("c") {
        let last = *net.layers().last().unwrap();
        net.params_mut()[last.biases + c] = 1.0;
    }
    if let Some(k) = problem.form.output_index("k") {
        let last = *net.layers().last().unwrap();
        net.params_mut()[last.biases + k] = 1.0;
    }
    let (_, exact) = problem_loss(&problem, &net, 5, barrier.as_ref());
    let fd = fd_gradient(&net, |n| problem_loss(&problem, n, 5, barrier.as_ref()).0, 1e-6);
    let err = gradient_rel_err(&exact, &fd);
    assert!(err < 1e-5, "{} {:?}: {err:e}", problem.form, barrier.map(|b| b.basis));
}

#[test]
fn every_form_has_an_exact_gradient() {
    for preset in Preset::ALL {
        for form in FormId::ALL.into_iter().filter(|f| f.is_rod() == preset.is_rod()) {
            let p = preset
                .build(form, 1.3, Load::Constant(0.5), Load::Constant(0.2))
                .unwrap();
            check_problem(p, None, 31);
        }
    }
}

#[test]
fn barrier_terms_have_exact_gradients() {
    let bar = || {
        Preset::BarPinnedFree
            .build(FormId::BarF2a, 1.0, Load::Constant(0.5), Load::Constant(0.0))
            .unwrap()
    };
    for basis in [BarrierBasis::StaticSolution, BarrierBasis::StaticOperator, BarrierBasis::Acceleration] {
        for shape in [BarrierShape::Inverse, BarrierShape::Log] {
            let spec = BarrierSpec::new(shape, basis, 1e-4, 0.7).unwrap();
            check_problem(bar(), Some(spec), 41);
        }
    }
    let f1 = Preset::BarPinnedPinned
        .build(FormId::BarF1, 1.0, Load::Constant(0.5), Load::Constant(0.0))
        .unwrap();
    let spec = BarrierSpec::new(BarrierShape::Inverse, BarrierBasis::Acceleration, 1e-4, 1.0).unwrap();
    check_problem(f1, Some(spec), 42);
}

#[test]
fn straight_unloaded_rod_has_zero_loss() {
    let p = Preset::RodSimplySupported
        .build(FormId::RodF4, 1.0, Load::Constant(0.5), Load::Constant(0.5))
        .unwrap()
        .unloaded();
    let mut net = MlpNetwork::zeros(vec![2, 4, 11]).unwrap();
    // The straight, unstretched rod: unit extension and inverse extension.
    let last = *net.layers().last().unwrap();
    net.params_mut()[last.biases + 3] = 1.0;
    let grid = regular_grid(5, 1.0).unwrap();
    let (pts, layout) = grid.points();
    let batch = jet_batch(&net, &pts).unwrap();
    let mut adj = JetBatch::zeros(batch.n_points(), batch.n_outputs());
    let l = p.loss(&batch, &pts, &layout, &mut adj).unwrap();
    assert!(l.total.abs() < 1e-24, "{}", l.total);
}
