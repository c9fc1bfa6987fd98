//! Taylor jets of the network outputs with respect to the inputs `(x, t)`,
//! and reverse accumulation of a jet-valued loss back to the parameters.
//!
//! Jets carry the value, both first derivatives and the two pure second
//! derivatives. Every residual in the crate is expressible with these five
//! components; the mixed derivative `d2/dxdt` is never needed.
//!
//! Two forward paths exist. [`jet_forward`] walks one point through the
//! network with [`Jet2`] arithmetic. [`Evaluator`] pushes a whole batch of
//! points through dense matrix products and keeps a [`Tape`] for the backward
//! sweep. The tests check the two against each other and against finite
//! differences.

use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::MlpNetwork;

/// Number of jet components.
pub const N_COMP: usize = 5;

/// Points per evaluation chunk. Fixed so that results never depend on the
/// number of workers.
pub const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    V = 0,
    Dx = 1,
    Dt = 2,
    Dxx = 3,
    Dtt = 4,
}

impl Component {
    pub const ALL: [Component; N_COMP] = [
        Component::V,
        Component::Dx,
        Component::Dt,
        Component::Dxx,
        Component::Dtt,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Value and input derivatives of a scalar field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2<T = f64> {
    pub v: T,
    pub dx: T,
    pub dt: T,
    pub dxx: T,
    pub dtt: T,
}

impl<T: Copy> Jet2<T> {
    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Jet2<U> {
        Jet2 {
            v: f(self.v),
            dx: f(self.dx),
            dt: f(self.dt),
            dxx: f(self.dxx),
            dtt: f(self.dtt),
        }
    }

    pub fn get(&self, c: Component) -> T {
        match c {
            Component::V => self.v,
            Component::Dx => self.dx,
            Component::Dt => self.dt,
            Component::Dxx => self.dxx,
            Component::Dtt => self.dtt,
        }
    }
}

impl Jet2<f64> {
    pub fn constant(c: f64) -> Self {
        Self {
            v: c,
            ..Self::default()
        }
    }

    /// The input coordinate `x` itself.
    pub fn seed_x(x: f64) -> Self {
        Self {
            v: x,
            dx: 1.0,
            ..Self::default()
        }
    }

    /// The input coordinate `t` itself.
    pub fn seed_t(t: f64) -> Self {
        Self {
            v: t,
            dt: 1.0,
            ..Self::default()
        }
    }

    /// `phi(self)` given `phi`, `phi'` and `phi''` at `self.v`.
    pub fn compose(self, f: f64, df: f64, d2f: f64) -> Self {
        Self {
            v: f,
            dx: df * self.dx,
            dt: df * self.dt,
            dxx: d2f * self.dx * self.dx + df * self.dxx,
            dtt: d2f * self.dt * self.dt + df * self.dtt,
        }
    }

    pub fn tanh(self) -> Self {
        let h = self.v.tanh();
        let d1 = 1.0 - h * h;
        self.compose(h, d1, -2.0 * h * d1)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn is_finite(&self) -> bool {
        [self.v, self.dx, self.dt, self.dxx, self.dtt]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Zeroes the time derivatives, leaving the spatial part intact.
    pub fn without_time(mut self) -> Self {
        self.dt = 0.0;
        self.dtt = 0.0;
        self
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Self {
            v: self.v + r.v,
            dx: self.dx + r.dx,
            dt: self.dt + r.dt,
            dxx: self.dxx + r.dxx,
            dtt: self.dtt + r.dtt,
        }
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        self + (-r)
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Self;
    fn mul(self, r: f64) -> Self {
        self.map(|v| v * r)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Self {
            v: self.v * r.v,
            dx: self.dx * r.v + self.v * r.dx,
            dt: self.dt * r.v + self.v * r.dt,
            dxx: self.dxx * r.v + 2.0 * self.dx * r.dx + self.v * r.dxx,
            dtt: self.dtt * r.v + 2.0 * self.dt * r.dt + self.v * r.dtt,
        }
    }
}

/// Jets of every network output at one point, propagated neuron by neuron.
pub fn jet_forward(net: &MlpNetwork, point: (f64, f64)) -> Result<Vec<Jet2>> {
    if net.n_inputs() != 2 {
        return Err(Error::invalid(format!(
            "jets need a 2-input network, got {}",
            net.n_inputs()
        )));
    }
    if !(point.0.is_finite() && point.1.is_finite()) {
        return Err(Error::invalid(format!("non-finite point {point:?}")));
    }
    let mut a = vec![Jet2::seed_x(point.0), Jet2::seed_t(point.1)];
    let last = net.layers().len() - 1;
    for (l, shape) in net.layers().iter().enumerate() {
        let w = net.weights(l);
        let b = net.biases(l);
        a = (0..shape.fan_out)
            .map(|o| {
                let row = &w[o * shape.fan_in..(o + 1) * shape.fan_in];
                let z = row
                    .iter()
                    .zip(&a)
                    .fold(Jet2::constant(b[o]), |acc, (&wi, ai)| acc + *ai * wi);
                if l == last {
                    z
                } else {
                    z.tanh()
                }
            })
            .collect();
    }
    Ok(a)
}

/// Jets of all network outputs over a batch of points.
///
/// Storage is component-major: the slice for output `o` and component `c`
/// holds one value per point, in the batch's point order.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    n_points: usize,
    n_outputs: usize,
    data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(n_points: usize, n_outputs: usize) -> Self {
        Self {
            n_points,
            n_outputs,
            data: vec![0.0; n_points * n_outputs * N_COMP],
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn offset(&self, output: usize, c: Component) -> usize {
        (output * N_COMP + c.index()) * self.n_points
    }

    pub fn component(&self, output: usize, c: Component) -> &[f64] {
        let o = self.offset(output, c);
        &self.data[o..o + self.n_points]
    }

    pub fn component_mut(&mut self, output: usize, c: Component) -> &mut [f64] {
        let o = self.offset(output, c);
        let n = self.n_points;
        &mut self.data[o..o + n]
    }

    pub fn get(&self, point: usize, output: usize) -> Jet2 {
        let at = |c: Component| self.data[self.offset(output, c) + point];
        Jet2 {
            v: at(Component::V),
            dx: at(Component::Dx),
            dt: at(Component::Dt),
            dxx: at(Component::Dxx),
            dtt: at(Component::Dtt),
        }
    }

    /// Jets of every output at `point`.
    pub fn point(&self, point: usize) -> Vec<Jet2> {
        (0..self.n_outputs).map(|o| self.get(point, o)).collect()
    }

    /// Adds `jet` into the entry for `(point, output)`.
    pub fn accumulate(&mut self, point: usize, output: usize, jet: Jet2) {
        for c in Component::ALL {
            let o = self.offset(output, c) + point;
            self.data[o] += jet.get(c);
        }
    }

    pub fn set(&mut self, point: usize, output: usize, jet: Jet2) {
        for c in Component::ALL {
            let o = self.offset(output, c) + point;
            self.data[o] = jet.get(c);
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// First point at which any component is non-finite.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.n_points).find(|&p| (0..self.n_outputs).any(|o| !self.get(p, o).is_finite()))
    }

    fn copy_chunk_from(&mut self, start: usize, chunk: &[f64], n: usize) {
        for o in 0..self.n_outputs {
            for c in 0..N_COMP {
                let src = &chunk[(o * N_COMP + c) * n..(o * N_COMP + c + 1) * n];
                let dst = (o * N_COMP + c) * self.n_points + start;
                self.data[dst..dst + n].copy_from_slice(src);
            }
        }
    }

    /// Copies points `start..start + n` into `m` as an `(outputs * 5, n)`
    /// matrix.
    fn copy_chunk_to(&self, start: usize, n: usize, m: &mut Vec<f64>) {
        m.resize(self.n_outputs * N_COMP * n, 0.0);
        for o in 0..self.n_outputs {
            for c in 0..N_COMP {
                let src = (o * N_COMP + c) * self.n_points + start;
                m[(o * N_COMP + c) * n..(o * N_COMP + c + 1) * n]
                    .copy_from_slice(&self.data[src..src + n]);
            }
        }
    }

    fn reshape(&mut self, n_points: usize, n_outputs: usize) {
        self.n_points = n_points;
        self.n_outputs = n_outputs;
        self.data.resize(n_points * n_outputs * N_COMP, 0.0);
    }
}

/// A scalar loss over a jet batch that also supplies its adjoint, i.e. the
/// derivative of the loss with respect to every jet component.
pub trait JetLoss {
    /// Returns the loss and overwrites `adjoint` with `d loss / d batch`.
    fn evaluate(&self, batch: &JetBatch, adjoint: &mut JetBatch) -> Result<f64>;
}

impl<F> JetLoss for F
where
    F: Fn(&JetBatch, &mut JetBatch) -> Result<f64>,
{
    fn evaluate(&self, batch: &JetBatch, adjoint: &mut JetBatch) -> Result<f64> {
        self(batch, adjoint)
    }
}

/// Per-chunk buffers. Kept in the [`Tape`] and reused across calls, so a
/// training loop does not reallocate them every step.
#[derive(Default)]
struct ChunkTape {
    start: usize,
    n: usize,
    /// Input jets `(2, 5n)`.
    input: Vec<f64>,
    /// Pre-activation jets `(fan_out, 5n)` per layer; the last one is the
    /// network output.
    z: Vec<Vec<f64>>,
    /// Post-activation jets of each hidden layer.
    a: Vec<Vec<f64>>,
    // Backward scratch.
    bar: Vec<f64>,
    bar_next: Vec<f64>,
    grad: Vec<f64>,
}

/// Intermediate values retained by a batched forward pass.
#[derive(Default)]
pub struct Tape {
    n_points: usize,
    chunks: Vec<ChunkTape>,
}

impl Tape {
    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

/// Row-major `c = a * b + beta * c` with explicit strides. With `beta = 0`
/// the prior contents of `c` are never read.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the assertions above keep every strided access inside the
    // three slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Batched jet evaluation with an optional worker pool.
///
/// Points are split into fixed chunks of [`CHUNK`] and per-chunk gradient
/// contributions are summed in chunk order, so results are bit-identical for
/// any worker count.
#[derive(Default)]
pub struct Evaluator {
    pool: Option<rayon::ThreadPool>,
}

impl Evaluator {
    pub fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Self::default());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    fn each_chunk<F>(&self, chunks: &mut [ChunkTape], f: F)
    where
        F: Fn(usize, &mut ChunkTape) + Sync + Send,
    {
        match &self.pool {
            None => chunks.iter_mut().enumerate().for_each(|(i, c)| f(i, c)),
            Some(pool) => {
                pool.install(|| chunks.par_iter_mut().enumerate().for_each(|(i, c)| f(i, c)))
            }
        }
    }

    /// Forward pass over `points`, returning the output jets and the tape
    /// needed by [`Evaluator::backward`].
    pub fn forward(&self, net: &MlpNetwork, points: &[(f64, f64)]) -> Result<(JetBatch, Tape)> {
        let mut tape = Tape::default();
        let mut batch = JetBatch::zeros(0, 0);
        self.forward_into(net, points, &mut tape, &mut batch)?;
        Ok((batch, tape))
    }

    /// [`Evaluator::forward`] reusing the storage of an earlier tape and batch.
    pub fn forward_into(
        &self,
        net: &MlpNetwork,
        points: &[(f64, f64)],
        tape: &mut Tape,
        batch: &mut JetBatch,
    ) -> Result<()> {
        if net.n_inputs() != 2 {
            return Err(Error::invalid(format!(
                "jets need a 2-input network, got {}",
                net.n_inputs()
            )));
        }
        if let Some(p) = points.iter().position(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::invalid(format!("non-finite point at index {p}")));
        }
        tape.n_points = points.len();
        tape.chunks.resize_with(points.len().div_ceil(CHUNK), ChunkTape::default);
        self.each_chunk(&mut tape.chunks, |i, ch| {
            let start = i * CHUNK;
            let end = (start + CHUNK).min(points.len());
            forward_chunk(net, &points[start..end], start, ch);
        });
        batch.reshape(points.len(), net.n_outputs());
        for ch in &tape.chunks {
            batch.copy_chunk_from(ch.start, ch.z.last().unwrap(), ch.n);
        }
        Ok(())
    }

    /// Gradient of the loss with respect to the parameters, given the loss
    /// adjoint on the output jets.
    pub fn backward(&self, net: &MlpNetwork, tape: &mut Tape, adjoint: &JetBatch) -> Vec<f64> {
        assert_eq!(adjoint.n_points(), tape.n_points, "adjoint/tape size mismatch");
        self.each_chunk(&mut tape.chunks, |_, ch| backward_chunk(net, ch, adjoint));
        let mut grad = vec![0.0; net.params().len()];
        for ch in &tape.chunks {
            grad.iter_mut().zip(&ch.grad).for_each(|(g, p)| *g += p);
        }
        grad
    }

    /// Loss and parameter gradient in one call.
    pub fn loss_gradient<L: JetLoss + ?Sized>(
        &self,
        net: &MlpNetwork,
        points: &[(f64, f64)],
        loss: &L,
    ) -> Result<(f64, Vec<f64>)> {
        let (batch, mut tape) = self.forward(net, points)?;
        let mut adjoint = JetBatch::zeros(batch.n_points(), batch.n_outputs());
        let value = loss.evaluate(&batch, &mut adjoint)?;
        if !value.is_finite() {
            let point = batch.first_non_finite().or_else(|| adjoint.first_non_finite());
            return Err(Error::Diverged { point });
        }
        let grad = self.backward(net, &mut tape, &adjoint);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                point: adjoint.first_non_finite(),
            });
        }
        Ok((value, grad))
    }
}

/// Output jets over a batch, single-threaded.
pub fn jet_batch(net: &MlpNetwork, points: &[(f64, f64)]) -> Result<JetBatch> {
    Evaluator::default().forward(net, points).map(|(b, _)| b)
}

/// Loss and its exact parameter gradient, single-threaded.
pub fn loss_gradient<L: JetLoss + ?Sized>(
    net: &MlpNetwork,
    points: &[(f64, f64)],
    loss: &L,
) -> Result<(f64, Vec<f64>)> {
    Evaluator::default().loss_gradient(net, points, loss)
}

/// Resizes without touching retained contents; new slots are zero.
fn fit(v: &mut Vec<f64>, len: usize) {
    v.resize(len, 0.0);
}

fn forward_chunk(net: &MlpNetwork, points: &[(f64, f64)], start: usize, ch: &mut ChunkTape) {
    let n = points.len();
    let cols = N_COMP * n;
    ch.start = start;
    ch.n = n;
    ch.input.clear();
    ch.input.resize(2 * cols, 0.0);
    for (p, &(x, t)) in points.iter().enumerate() {
        ch.input[p] = x;
        ch.input[n + p] = 1.0;
        ch.input[cols + p] = t;
        ch.input[cols + 2 * n + p] = 1.0;
    }

    let n_layers = net.layers().len();
    ch.z.resize_with(n_layers, Vec::new);
    ch.a.resize_with(n_layers - 1, Vec::new);
    for (l, shape) in net.layers().iter().enumerate() {
        let mut z = std::mem::take(&mut ch.z[l]);
        fit(&mut z, shape.fan_out * cols);
        let prev = if l == 0 { &ch.input } else { &ch.a[l - 1] };
        gemm(
            shape.fan_out,
            shape.fan_in,
            cols,
            net.weights(l),
            (shape.fan_in, 1),
            prev,
            (cols, 1),
            0.0,
            &mut z,
        );
        for (r, &b) in net.biases(l).iter().enumerate() {
            z[r * cols..r * cols + n].iter_mut().for_each(|v| *v += b);
        }
        if l + 1 < n_layers {
            let a = &mut ch.a[l];
            fit(a, shape.fan_out * cols);
            for (zr, ar) in z.chunks_exact(cols).zip(a.chunks_exact_mut(cols)) {
                let (zv, rest) = zr.split_at(n);
                let (zx, rest) = rest.split_at(n);
                let (zt, rest) = rest.split_at(n);
                let (zxx, ztt) = rest.split_at(n);
                let (av, rest) = ar.split_at_mut(n);
                let (ax, rest) = rest.split_at_mut(n);
                let (at, rest) = rest.split_at_mut(n);
                let (axx, att) = rest.split_at_mut(n);
                for p in 0..n {
                    let h = zv[p].tanh();
                    let s1 = 1.0 - h * h;
                    let s2 = -2.0 * h * s1;
                    av[p] = h;
                    ax[p] = s1 * zx[p];
                    at[p] = s1 * zt[p];
                    axx[p] = s2 * zx[p] * zx[p] + s1 * zxx[p];
                    att[p] = s2 * zt[p] * zt[p] + s1 * ztt[p];
                }
            }
        }
        ch.z[l] = z;
    }
}

fn backward_chunk(net: &MlpNetwork, ch: &mut ChunkTape, adjoint: &JetBatch) {
    let n = ch.n;
    let cols = N_COMP * n;
    fit(&mut ch.grad, net.params().len());
    let mut zbar = std::mem::take(&mut ch.bar);
    let mut abar = std::mem::take(&mut ch.bar_next);
    adjoint.copy_chunk_to(ch.start, n, &mut zbar);

    for l in (0..net.layers().len()).rev() {
        let shape = net.layers()[l];
        let prev = if l == 0 { &ch.input } else { &ch.a[l - 1] };

        // dW = Zbar * prev^T
        gemm(
            shape.fan_out,
            cols,
            shape.fan_in,
            &zbar,
            (cols, 1),
            prev,
            (1, cols),
            0.0,
            &mut ch.grad[shape.weights..shape.biases],
        );
        for r in 0..shape.fan_out {
            ch.grad[shape.biases + r] = zbar[r * cols..r * cols + n].iter().sum();
        }
        if l == 0 {
            break;
        }

        // Abar = W^T * Zbar, then back through the tanh jet map.
        fit(&mut abar, shape.fan_in * cols);
        gemm(
            shape.fan_in,
            shape.fan_out,
            cols,
            net.weights(l),
            (1, shape.fan_in),
            &zbar,
            (cols, 1),
            0.0,
            &mut abar,
        );
        for ((zr, ar), br) in ch.z[l - 1]
            .chunks_exact(cols)
            .zip(ch.a[l - 1].chunks_exact(cols))
            .zip(abar.chunks_exact_mut(cols))
        {
            let (zx, rest) = zr[n..].split_at(n);
            let (zt, rest) = rest.split_at(n);
            let (zxx, ztt) = rest.split_at(n);
            let h = &ar[..n];
            let (bv, rest) = br.split_at_mut(n);
            let (bx, rest) = rest.split_at_mut(n);
            let (bt, rest) = rest.split_at_mut(n);
            let (bxx, btt) = rest.split_at_mut(n);
            for p in 0..n {
                let h = h[p];
                let s1 = 1.0 - h * h;
                let s2 = -2.0 * h * s1;
                let s3 = s1 * (6.0 * h * h - 2.0);
                let (gv, gx, gt, gxx, gtt) = (bv[p], bx[p], bt[p], bxx[p], btt[p]);
                let first = gx * zx[p] + gt * zt[p] + gxx * zxx[p] + gtt * ztt[p];
                let second = gxx * zx[p] * zx[p] + gtt * zt[p] * zt[p];
                bv[p] = gv * s1 + s2 * first + s3 * second;
                bx[p] = gx * s1 + 2.0 * gxx * s2 * zx[p];
                bt[p] = gt * s1 + 2.0 * gtt * s2 * zt[p];
                bxx[p] = gxx * s1;
                btt[p] = gtt * s1;
            }
        }
        std::mem::swap(&mut zbar, &mut abar);
    }
    ch.bar = zbar;
    ch.bar_next = abar;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{InitKind, Initializer};

    fn random_net(widths: Vec<usize>, seed: u64) -> MlpNetwork {
        let mut net =
            MlpNetwork::initialized(widths, Initializer::new(InitKind::GlorotUniform, seed)).unwrap();
        // Non-zero biases exercise the bias path too.
        let shapes = net.layers().to_vec();
        let params = net.params_mut();
        for (i, s) in shapes.iter().enumerate() {
            for (j, b) in params[s.biases..s.biases + s.fan_out].iter_mut().enumerate() {
                *b = 0.1 * ((i + 3 * j) as f64).sin();
            }
        }
        net
    }

    #[test]
    fn seeds_are_coordinates() {
        let x = Jet2::seed_x(0.25);
        assert_eq!((x.v, x.dx, x.dt, x.dxx, x.dtt), (0.25, 1.0, 0.0, 0.0, 0.0));
        let t = Jet2::seed_t(2.0);
        assert_eq!((t.v, t.dx, t.dt, t.dxx, t.dtt), (2.0, 0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn product_rule_matches_closed_form() {
        // f = x^2 * sin(t)
        let x = Jet2::seed_x(0.7);
        let t = Jet2::seed_t(1.3);
        let f = x * x * t.sin();
        let (s, c) = 1.3f64.sin_cos();
        assert!((f.v - 0.49 * s).abs() < 1e-15);
        assert!((f.dx - 1.4 * s).abs() < 1e-15);
        assert!((f.dxx - 2.0 * s).abs() < 1e-15);
        assert!((f.dt - 0.49 * c).abs() < 1e-15);
        assert!((f.dtt + 0.49 * s).abs() < 1e-15);
    }

    #[test]
    fn zero_net_gives_zero_jets() {
        let net = MlpNetwork::zeros(vec![2, 6, 6, 3]).unwrap();
        for j in jet_forward(&net, (0.4, 1.1)).unwrap() {
            assert_eq!(j, Jet2::default());
        }
        let b = jet_batch(&net, &[(0.1, 0.2), (0.9, 3.0)]).unwrap();
        assert!(b.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tanh_of_x_second_derivative() {
        // u(x, t) = tanh(x): [2,1,1] with w = (1, 0), then identity output.
        let net = MlpNetwork::new(vec![2, 1, 1], vec![1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let j = jet_forward(&net, (0.3, 0.8)).unwrap()[0];
        let h = 0.3f64.tanh();
        assert!((j.dxx - (-2.0 * h * (1.0 - h * h))).abs() < 1e-15);
        assert_eq!(j.dt, 0.0);
        assert_eq!(j.dtt, 0.0);
    }

    #[test]
    fn value_matches_plain_forward() {
        let net = random_net(vec![2, 7, 5, 3], 11);
        for &(x, t) in &[(0.0, 0.0), (0.3, 1.9), (1.0, 4.0)] {
            let plain = net.forward(&[x, t]).unwrap();
            let jets = jet_forward(&net, (x, t)).unwrap();
            for (p, j) in plain.iter().zip(&jets) {
                assert_eq!(*p, j.v);
            }
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let net = random_net(vec![2, 9, 9, 2], 5);
        let points: Vec<(f64, f64)> = (0..1100)
            .map(|i| ((i as f64 * 0.37).fract(), (i as f64 * 0.11).fract() * 4.0))
            .collect();
        let batch = jet_batch(&net, &points).unwrap();
        for p in [0, 1, 511, 512, 1099] {
            let single = jet_forward(&net, points[p]).unwrap();
            for o in 0..2 {
                let b = batch.get(p, o);
                for c in Component::ALL {
                    assert!((b.get(c) - single[o].get(c)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn bias_gradient_of_value_is_one() {
        let net = random_net(vec![2, 4, 1], 2);
        let loss = |b: &JetBatch, adj: &mut JetBatch| -> Result<f64> {
            adj.component_mut(0, Component::V)[0] = 1.0;
            Ok(b.get(0, 0).v)
        };
        let (_, grad) = loss_gradient(&net, &[(0.5, 0.5)], &loss).unwrap();
        let out = net.layers()[1];
        assert_eq!(grad[out.biases], 1.0);
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        let net = random_net(vec![2, 5, 2], 9);
        let loss = |_: &JetBatch, _: &mut JetBatch| -> Result<f64> { Ok(0.0) };
        let (l, g) = loss_gradient(&net, &[(0.1, 0.1), (0.2, 0.3)], &loss).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_loss_reports_point() {
        let net = random_net(vec![2, 3, 1], 1);
        let loss = |_: &JetBatch, adj: &mut JetBatch| -> Result<f64> {
            adj.component_mut(0, Component::Dx)[2] = f64::NAN;
            Ok(f64::NAN)
        };
        let err = loss_gradient(&net, &[(0.1, 0.1), (0.2, 0.3), (0.4, 0.4)], &loss).unwrap_err();
        assert!(matches!(err, Error::Diverged { point: Some(2) }));
    }

    #[test]
    fn worker_count_does_not_change_gradient() {
        let net = random_net(vec![2, 8, 8, 2], 3);
        let points: Vec<(f64, f64)> = (0..1300)
            .map(|i| ((i as f64 * 0.713).fract(), (i as f64 * 0.291).fract() * 2.0))
            .collect();
        let loss = |b: &JetBatch, adj: &mut JetBatch| -> Result<f64> {
            let n = b.n_points() as f64;
            let mut total = 0.0;
            for c in Component::ALL {
                let vals = b.component(1, c).to_vec();
                for (a, v) in adj.component_mut(1, c).iter_mut().zip(&vals) {
                    *a = 2.0 * v / n;
                    total += v * v / n;
                }
            }
            Ok(total)
        };
        let (l1, g1) = Evaluator::new(1).unwrap().loss_gradient(&net, &points, &loss).unwrap();
        let (l3, g3) = Evaluator::new(3).unwrap().loss_gradient(&net, &points, &loss).unwrap();
        assert_eq!(l1.to_bits(), l3.to_bits());
        assert!(g1.iter().zip(&g3).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
