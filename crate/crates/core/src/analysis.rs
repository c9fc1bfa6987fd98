//! Exact bar solutions and the diagnostics that compare trained histories
//! against them: peaks, damping percentage, shift and amplification, and
//! root-mean-square error.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{jet_forward, Jet2};
use crate::network::MlpNetwork;
use crate::problems::{FormId, Preset};

/// Sampled scalar history with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::invalid("empty time series"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("times must be finite and strictly increasing"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at sample {i}")));
        }
        Ok(Self { times, values })
    }

    /// Samples `f` at `n` evenly spaced times on `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        let times: Vec<f64> = (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Linear interpolation; `None` outside the sampled span.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let (t0, t1) = self.span();
        if !(t0..=t1).contains(&t) {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return Some(self.values[0]);
        }
        if i == self.len() {
            return Some(self.values[i - 1]);
        }
        let (ta, tb) = (self.times[i - 1], self.times[i]);
        let w = (t - ta) / (tb - ta);
        Some(self.values[i - 1] * (1.0 - w) + self.values[i] * w)
    }
}

// ---------------------------------------------------------------------------
// Exact modal solution
// ---------------------------------------------------------------------------

/// Supports of the bar, fixed at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarSupport {
    PinnedPinned,
    PinnedFree,
}

impl BarSupport {
    pub fn from_preset(p: Preset) -> Option<Self> {
        match p {
            Preset::BarPinnedPinned => Some(Self::PinnedPinned),
            Preset::BarPinnedFree => Some(Self::PinnedFree),
            _ => None,
        }
    }

    /// Wavenumber of mode `n >= 1`.
    fn wavenumber(self, n: usize) -> f64 {
        match self {
            Self::PinnedPinned => n as f64 * PI,
            Self::PinnedFree => (2 * n - 1) as f64 * PI / 2.0,
        }
    }

    /// Sine coefficient of `x(1-x)/4` (resp. `x(2-x)/4`) for mode `n`.
    fn coefficient(self, n: usize) -> f64 {
        let k = self.wavenumber(n);
        match self {
            Self::PinnedPinned if n % 2 == 0 => 0.0,
            Self::PinnedPinned => 2.0 / (k * k * k),
            Self::PinnedFree => 1.0 / (k * k * k),
        }
    }

    fn static_shape(self, x: f64) -> Jet2 {
        match self {
            Self::PinnedPinned => Jet2 {
                v: x * (1.0 - x) / 4.0,
                dx: (1.0 - 2.0 * x) / 4.0,
                dxx: -0.5,
                ..Jet2::default()
            },
            Self::PinnedFree => Jet2 {
                v: x * (2.0 - x) / 4.0,
                dx: (1.0 - x) / 2.0,
                dxx: -0.5,
                ..Jet2::default()
            },
        }
    }
}

/// Exact displacement jet of a bar at rest at `t = 0` when the load `f` is
/// switched on, by modal superposition of `n_terms` modes:
/// `u = u_st(x) - sum_n c_n sin(k_n x) cos(sqrt(s) k_n t)`.
pub fn exact_bar_jet(bc: BarSupport, s: f64, f: f64, x: f64, t: f64, n_terms: usize) -> Result<Jet2> {
    if n_terms == 0 {
        return Err(Error::invalid("need at least one mode"));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("slenderness must be positive, got {s}")));
    }
    // The unit problem has s = 1 and f = 1/2.
    let a = 2.0 * f / s;
    let c = s.sqrt();
    let mut out = bc.static_shape(x);
    for n in 1..=n_terms {
        let b = bc.coefficient(n);
        if b == 0.0 {
            continue;
        }
        let k = bc.wavenumber(n);
        let w = c * k;
        let (sx, cx) = (k * x).sin_cos();
        let (st, ct) = (w * t).sin_cos();
        out.v -= b * sx * ct;
        out.dx -= b * k * cx * ct;
        out.dt += b * w * sx * st;
        out.dxx += b * k * k * sx * ct;
        out.dtt += b * w * w * sx * ct;
    }
    Ok(out * a)
}

pub fn exact_bar_general(bc: BarSupport, s: f64, f: f64, x: f64, t: f64, n_terms: usize) -> Result<f64> {
    Ok(exact_bar_jet(bc, s, f, x, t, n_terms)?.v)
}

/// The unit configuration `s = 1`, `f = 1/2`.
pub fn exact_bar(bc: BarSupport, x: f64, t: f64, n_terms: usize) -> Result<f64> {
    exact_bar_general(bc, 1.0, 0.5, x, t, n_terms)
}

// ---------------------------------------------------------------------------
// Peaks and damping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Peaks {
    pub maxima: Vec<(f64, f64)>,
    pub minima: Vec<(f64, f64)>,
}

/// Strict local extrema by three-point comparison. A run of equal samples
/// counts as one sample located at its first element; the series ends are
/// never extrema.
pub fn find_peaks(ts: &TimeSeries) -> Peaks {
    let mut runs: Vec<usize> = Vec::new();
    for (i, v) in ts.values.iter().enumerate() {
        if runs.last().is_none_or(|&r| ts.values[r] != *v) {
            runs.push(i);
        }
    }
    let mut peaks = Peaks::default();
    for w in runs.windows(3) {
        let (a, b, c) = (ts.values[w[0]], ts.values[w[1]], ts.values[w[2]]);
        let sample = (ts.times[w[1]], b);
        if b > a && b > c {
            peaks.maxima.push(sample);
        } else if b < a && b < c {
            peaks.minima.push(sample);
        }
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingQuality {
    QuasiPerfect,
    VeryGood,
    Good,
    HighDamping,
}

impl DampingQuality {
    pub fn classify(pct: f64) -> Self {
        match pct.abs() {
            a if a < 0.5 => Self::QuasiPerfect,
            a if a < 1.5 => Self::VeryGood,
            a if a < 3.0 => Self::Good,
            _ => Self::HighDamping,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::QuasiPerfect => "quasi-perfect",
            Self::VeryGood => "very good",
            Self::Good => "good",
            Self::HighDamping => "high damping",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub percent: f64,
    pub quality: DampingQuality,
}

/// `100 (max_1 / max_2 - 1)` over the first two local maxima.
pub fn damping_percent(ts: &TimeSeries) -> Result<Damping> {
    let peaks = find_peaks(ts);
    match peaks.maxima.as_slice() {
        [(_, m1), (_, m2), ..] => {
            let percent = 100.0 * (m1 / m2 - 1.0);
            Ok(Damping {
                percent,
                quality: DampingQuality::classify(percent),
            })
        }
        other => Err(Error::InsufficientPeaks { found: other.len() }),
    }
}

// ---------------------------------------------------------------------------
// Shift and amplification
// ---------------------------------------------------------------------------

/// Parameters of `computed(t) ~ amp * reference(t - shift) + vshift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftAmpFit {
    pub shift: f64,
    pub vshift: f64,
    pub amp: f64,
    /// Peak-to-peak amplitude of the reference.
    pub reference_ptp: f64,
}

impl ShiftAmpFit {
    /// Peak-to-peak amplitude of the computed history, `amp * reference_ptp`.
    pub fn amp_ptp(&self) -> f64 {
        self.amp * self.reference_ptp
    }
}

fn first_max_time(ts: &TimeSeries) -> f64 {
    match find_peaks(ts).maxima.first() {
        Some(&(t, _)) => t,
        None => {
            let i = ts
                .values
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > ts.values[best] { i } else { best });
            ts.times[i]
        }
    }
}

/// Estimates the shift-amplification model from peaks and a mean residual:
/// `amp` is the ratio of peak-to-peak amplitudes, `shift` the offset between
/// first maxima, and `vshift` the mean of `computed - amp * reference(t - shift)`
/// over the samples where the shifted reference is defined.
pub fn fit_shift_amp(computed: &TimeSeries, reference: &TimeSeries) -> Result<ShiftAmpFit> {
    let reference_ptp = reference.peak_to_peak();
    if reference_ptp <= 0.0 {
        return Err(Error::invalid("reference history has zero peak-to-peak amplitude"));
    }
    let (c0, c1) = computed.span();
    let (r0, r1) = reference.span();
    if c1 < r0 || r1 < c0 {
        return Err(Error::invalid("histories do not overlap in time"));
    }
    let amp = computed.peak_to_peak() / reference_ptp;
    let shift = first_max_time(computed) - first_max_time(reference);
    let residuals: Vec<f64> = computed
        .times
        .iter()
        .zip(&computed.values)
        .filter_map(|(&t, &v)| reference.interpolate(t - shift).map(|r| v - amp * r))
        .collect();
    if residuals.is_empty() {
        return Err(Error::invalid("shifted reference does not overlap the computed history"));
    }
    let vshift = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok(ShiftAmpFit {
        shift,
        vshift,
        amp,
        reference_ptp,
    })
}

/// Root-mean-square error against `exact` and its ratio to `peak_to_peak`.
/// Samples of `computed` outside the span of `exact` are ignored; inside it
/// `exact` is interpolated linearly.
pub fn smse_re(computed: &TimeSeries, exact: &TimeSeries, peak_to_peak: f64) -> Result<(f64, f64)> {
    if !(peak_to_peak > 0.0) {
        return Err(Error::invalid(format!(
            "peak-to-peak amplitude must be positive, got {peak_to_peak}"
        )));
    }
    let (sum, n) = computed
        .times
        .iter()
        .zip(&computed.values)
        .filter_map(|(&t, &v)| exact.interpolate(t).map(|e| (v - e).powi(2)))
        .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    if n == 0 {
        return Err(Error::invalid("histories have no common support"));
    }
    let smse = (sum / n as f64).sqrt();
    Ok((smse, smse / peak_to_peak))
}

// ---------------------------------------------------------------------------
// Probing a trained network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// Axial displacement at `x = 0.5`.
    MidspanDisp,
    /// Axial displacement at `x = 1`.
    FreeEndDisp,
    /// Displacement at several stations, one column each.
    Shape(Vec<f64>),
    /// Axial velocity at a station: the momentum output when the form splits
    /// time, otherwise `du/dt`.
    Velocity(f64),
    /// Slope at a station: `alpha` for rods, `du/dx` for bars.
    Slope(f64),
}

impl Probe {
    pub fn name(&self) -> &'static str {
        match self {
            Probe::MidspanDisp => "midspan",
            Probe::FreeEndDisp => "free_end",
            Probe::Shape(_) => "shape",
            Probe::Velocity(_) => "velocity",
            Probe::Slope(_) => "slope",
        }
    }

    fn stations(&self) -> Vec<f64> {
        match self {
            Probe::MidspanDisp => vec![0.5],
            Probe::FreeEndDisp => vec![1.0],
            Probe::Shape(xs) => xs.clone(),
            Probe::Velocity(x) | Probe::Slope(x) => vec![*x],
        }
    }

    fn read(&self, form: FormId, jets: &[Jet2]) -> f64 {
        match self {
            Probe::MidspanDisp | Probe::FreeEndDisp | Probe::Shape(_) => jets[0].v,
            Probe::Velocity(_) => match form.momentum_outputs() {
                Some((p, _)) => jets[p].v,
                None => jets[0].dt,
            },
            Probe::Slope(_) if form.is_rod() => jets[2].v,
            Probe::Slope(_) => jets[0].dx,
        }
    }
}

/// Probe values over time, one column per station.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTable {
    pub probe: String,
    pub stations: Vec<f64>,
    pub times: Vec<f64>,
    /// `true` for times beyond the training horizon.
    pub extrapolated: Vec<bool>,
    /// `columns[k][i]` is station `k` at `times[i]`.
    pub columns: Vec<Vec<f64>>,
}

impl ProbeTable {
    /// History of one station.
    pub fn series(&self, station: usize) -> Result<TimeSeries> {
        let col = self
            .columns
            .get(station)
            .ok_or_else(|| Error::invalid(format!("no station {station}")))?;
        TimeSeries::new(self.times.clone(), col.clone())
    }

    /// Header `t,extrapolated,<probe>@<x>...` then one row per time.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "extrapolated".to_string()];
        header.extend(self.stations.iter().map(|x| format!("{}@{x}", self.probe)));
        wr.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string(), u8::from(self.extrapolated[i]).to_string()];
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let bad = |m: &str| Error::invalid(format!("probe csv: {m}"));
        if header.len() < 3 || &header[0] != "t" || &header[1] != "extrapolated" {
            return Err(bad("unexpected header"));
        }
        let mut probe = String::new();
        let mut stations = Vec::new();
        for h in header.iter().skip(2) {
            let (name, x) = h.split_once('@').ok_or_else(|| bad(h))?;
            probe = name.to_string();
            stations.push(x.parse::<f64>().map_err(|_| bad(h))?);
        }
        let mut table = ProbeTable {
            probe,
            columns: vec![Vec::new(); stations.len()],
            stations,
            times: Vec::new(),
            extrapolated: Vec::new(),
        };
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&rec[i]));
            table.times.push(num(0)?);
            table.extrapolated.push(&rec[1] == "1");
            for k in 0..table.stations.len() {
                table.columns[k].push(num(k + 2)?);
            }
        }
        Ok(table)
    }
}

/// Evaluates `probe` on `net` at each time. Times past `t_final` are allowed
/// and flagged as extrapolated.
pub fn sample_network(
    net: &MlpNetwork,
    form: FormId,
    probe: &Probe,
    times: &[f64],
    t_final: f64,
) -> Result<ProbeTable> {
    if net.n_outputs() != form.n_outputs() {
        return Err(Error::invalid(format!(
            "{form} needs {} outputs, network has {}",
            form.n_outputs(),
            net.n_outputs()
        )));
    }
    let stations = probe.stations();
    if stations.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::invalid("probe stations must lie in [0, 1]"));
    }
    let mut columns = vec![Vec::with_capacity(times.len()); stations.len()];
    for &t in times {
        for (k, &x) in stations.iter().enumerate() {
            let jets = jet_forward(net, (x, t))?;
            columns[k].push(probe.read(form, &jets));
        }
    }
    Ok(ProbeTable {
        probe: probe.name().to_string(),
        stations,
        times: times.to_vec(),
        extrapolated: times.iter().map(|&t| t > t_final).collect(),
        columns,
    })
}

/// One line of the diagnostics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub damping_pct: Option<f64>,
    pub quality: Option<String>,
    pub shift: Option<f64>,
    pub vshift: Option<f64>,
    pub amp_ptp: Option<f64>,
    pub smse: Option<f64>,
    pub re: Option<f64>,
    pub static_flag: bool,
}

pub fn write_diagnostics<W: Write>(w: W, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_diagnostics<R: Read>(r: R) -> Result<Vec<DiagnosticsRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
