//! Fixtures shared by the benchmarks.

use rodpinn::{
    random_grid, FormId, GridLayout, InitKind, Initializer, Load, MlpNetwork, Preset, Problem,
};

/// A pinned-pinned bar problem in `form` with its network and a random grid.
pub struct Fixture {
    pub problem: Problem,
    pub net: MlpNetwork,
    pub points: Vec<(f64, f64)>,
    pub layout: GridLayout,
}

/// `hidden` layers of `width` neurons over an `n x n` random grid.
pub fn fixture(form: FormId, width: usize, hidden: usize, n: usize) -> Fixture {
    let problem = Preset::BarPinnedPinned
        .build(form, 1.0, Load::Constant(0.5), Load::Constant(0.0))
        .expect("bar preset accepts bar forms");
    let mut widths = vec![2];
    widths.extend(std::iter::repeat_n(width, hidden));
    widths.push(form.n_outputs());
    let net = MlpNetwork::initialized(widths, Initializer::new(InitKind::HeUniform, 7))
        .expect("valid widths");
    let grid = random_grid(n, problem.t_final, Some(7)).expect("valid grid");
    let (points, layout) = grid.points();
    Fixture {
        problem,
        net,
        points,
        layout,
    }
}
