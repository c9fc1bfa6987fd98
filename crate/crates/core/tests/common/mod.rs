//! Finite-difference oracles shared by the integration tests. They only use
//! the plain scalar forward pass, never the jet machinery under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rodpinn::{InitKind, Initializer, Jet2, JetBatch, MlpNetwork};

/// Richardson table over central differences with steps `h, h/2, h/4`;
/// both first and second differences have even error expansions, so each
/// level removes one more power of `h^2`.
fn richardson(d: impl Fn(f64) -> f64, h: f64) -> f64 {
    let a = [d(h), d(h / 2.0), d(h / 4.0)];
    let b = [(4.0 * a[1] - a[0]) / 3.0, (4.0 * a[2] - a[1]) / 3.0];
    (16.0 * b[1] - b[0]) / 15.0
}

/// Value and the four input derivatives of output `k`, by differences.
pub fn fd_jet(net: &MlpNetwork, (x, t): (f64, f64), k: usize, h: f64) -> Jet2 {
    let f = |x: f64, t: f64| net.forward(&[x, t]).expect("forward")[k];
    let f0 = f(x, t);
    Jet2 {
        v: f0,
        dx: richardson(|h| (f(x + h, t) - f(x - h, t)) / (2.0 * h), h),
        dt: richardson(|h| (f(x, t + h) - f(x, t - h)) / (2.0 * h), h),
        dxx: richardson(|h| (f(x + h, t) - 2.0 * f0 + f(x - h, t)) / (h * h), h),
        dtt: richardson(|h| (f(x, t + h) - 2.0 * f0 + f(x, t - h)) / (h * h), h),
    }
}

/// Relative error with a floor so components that vanish compare in
/// absolute terms.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn jet_rel_err(a: &Jet2, b: &Jet2, floor: f64) -> f64 {
    [
        rel_err(a.v, b.v, floor),
        rel_err(a.dx, b.dx, floor),
        rel_err(a.dt, b.dt, floor),
        rel_err(a.dxx, b.dxx, floor),
        rel_err(a.dtt, b.dtt, floor),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// A random architecture with 1..=`max_hidden` hidden layers of width
/// 1..=`max_width`.
pub fn random_net(rng: &mut ChaCha8Rng, max_hidden: usize, max_width: usize, n_out: usize) -> MlpNetwork {
    let hidden = rng.random_range(1..=max_hidden);
    let mut widths = vec![2];
    widths.extend((0..hidden).map(|_| rng.random_range(1..=max_width)));
    widths.push(n_out);
    let kind = if rng.random_bool(0.5) {
        InitKind::HeUniform
    } else {
        InitKind::GlorotUniform
    };
    let mut net = MlpNetwork::initialized(widths, Initializer::new(kind, rng.random())).expect("valid widths");
    // Initialisers zero the biases; random ones exercise that path too.
    for s in net.layers().to_vec() {
        for b in &mut net.params_mut()[s.biases..s.biases + s.fan_out] {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    net
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, t_max: f64) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.random(), rng.random::<f64>() * t_max)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central-difference gradient of `loss` with respect to every parameter.
pub fn fd_gradient(net: &MlpNetwork, mut loss: impl FnMut(&MlpNetwork) -> f64, h: f64) -> Vec<f64> {
    let mut net = net.clone();
    (0..net.params().len())
        .map(|i| {
            let x0 = net.params()[i];
            let step = h * x0.abs().max(1.0);
            net.params_mut()[i] = x0 + step;
            let plus = loss(&net);
            net.params_mut()[i] = x0 - step;
            let minus = loss(&net);
            net.params_mut()[i] = x0;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Largest relative gradient error, floored at a thousandth of the largest
/// component.
pub fn gradient_rel_err(exact: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    exact
        .iter()
        .zip(fd)
        .map(|(a, b)| rel_err(*a, *b, 1e-3 * scale))
        .fold(0.0, f64::max)
}

/// `mean over points and outputs of (v^2 + v dx + sin dt + dxx^2 dtt + dtt^2/2)`,
/// which reads every jet component nonlinearly; returns the loss and fills
/// the adjoint.
pub fn mixed_loss(batch: &JetBatch, adj: &mut JetBatch) -> rodpinn::Result<f64> {
    let n = batch.n_points();
    let w = 1.0 / (n * batch.n_outputs()) as f64;
    let mut total = 0.0;
    for p in 0..n {
        for k in 0..batch.n_outputs() {
            let j = batch.get(p, k);
            total += j.v * j.v + j.v * j.dx + j.dt.sin() + j.dxx * j.dxx * j.dtt + 0.5 * j.dtt * j.dtt;
            adj.set(
                p,
                k,
                Jet2 {
                    v: w * (2.0 * j.v + j.dx),
                    dx: w * j.v,
                    dt: w * j.dt.cos(),
                    dxx: w * 2.0 * j.dxx * j.dtt,
                    dtt: w * (j.dxx * j.dxx + j.dtt),
                },
            );
        }
    }
    Ok(total * w)
}
