//! Dense feed-forward network with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat vector. For every connection layer, in order
//! from input to output, the layout is the weight matrix of shape
//! `(fan_out, fan_in)` stored row-major, followed by the `fan_out` biases.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weight initialization law. Biases are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitKind {
    /// Uniform in `±sqrt(6 / fan_in)`.
    HeUniform,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    GlorotUniform,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::HeUniform => "he_uniform",
            InitKind::GlorotUniform => "glorot_uniform",
        }
    }

    fn code(self) -> u8 {
        match self {
            InitKind::HeUniform => 0,
            InitKind::GlorotUniform => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(InitKind::HeUniform),
            1 => Some(InitKind::GlorotUniform),
            _ => None,
        }
    }

    fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitKind::HeUniform => (6.0 / fan_in as f64).sqrt(),
            InitKind::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "he_uniform" | "he" => Ok(InitKind::HeUniform),
            "glorot_uniform" | "glorot" => Ok(InitKind::GlorotUniform),
            other => Err(Error::invalid(format!("unknown initializer `{other}`"))),
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Initializer {
    pub kind: InitKind,
    pub seed: u64,
}

impl Initializer {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// Shape of one connection layer and where its parameters start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the weight matrix in the flat parameter vector.
    pub weights: usize,
    /// Offset of the bias vector in the flat parameter vector.
    pub biases: usize,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::invalid(format!(
            "network needs at least 2 layer widths, got {}",
            widths.len()
        )));
    }
    if let Some(i) = widths.iter().position(|&w| w == 0) {
        return Err(Error::invalid(format!("layer {i} has zero width")));
    }
    Ok(())
}

/// Total number of weights and biases for the given layer widths.
pub fn param_count(widths: &[usize]) -> Result<usize> {
    check_widths(widths)?;
    Ok(widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum())
}

/// Layer shapes and parameter offsets for `widths`.
pub fn layer_shapes(widths: &[usize]) -> Result<Vec<LayerShape>> {
    check_widths(widths)?;
    let mut offset = 0;
    Ok(widths
        .windows(2)
        .map(|w| {
            let shape = LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                weights: offset,
                biases: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            shape
        })
        .collect())
}

/// Draws a fresh parameter vector. Identical `(widths, init)` give
/// bit-identical results on every platform.
pub fn init_params(widths: &[usize], init: Initializer) -> Result<Vec<f64>> {
    let shapes = layer_shapes(widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    let mut params = vec![0.0; param_count(widths)?];
    for shape in &shapes {
        let bound = init.kind.bound(shape.fan_in, shape.fan_out);
        for w in &mut params[shape.weights..shape.biases] {
            let u: f64 = rng.random();
            *w = bound * (2.0 * u - 1.0);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    widths: Vec<usize>,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl MlpNetwork {
    pub fn new(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let expected = param_count(&widths)?;
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "widths {widths:?} need {expected} parameters, got {}",
                params.len()
            )));
        }
        let layers = layer_shapes(&widths)?;
        Ok(Self {
            widths,
            layers,
            params,
        })
    }

    pub fn initialized(widths: Vec<usize>, init: Initializer) -> Result<Self> {
        let params = init_params(&widths, init)?;
        Self::new(widths, params)
    }

    pub fn zeros(widths: Vec<usize>) -> Result<Self> {
        let n = param_count(&widths)?;
        Self::new(widths, vec![0.0; n])
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Weight matrix of layer `l`, row-major `(fan_out, fan_in)`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let s = &self.layers[l];
        &self.params[s.weights..s.biases]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        let s = &self.layers[l];
        &self.params[s.biases..s.biases + s.fan_out]
    }

    /// Plain forward pass for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.n_inputs() {
            return Err(Error::invalid(format!(
                "network takes {} inputs, got {}",
                self.n_inputs(),
                input.len()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite network input {input:?}")));
        }
        let mut a = input.to_vec();
        let last = self.layers.len() - 1;
        for (l, shape) in self.layers.iter().enumerate() {
            let w = self.weights(l);
            let b = self.biases(l);
            let mut z: Vec<f64> = (0..shape.fan_out)
                .map(|o| {
                    let row = &w[o * shape.fan_in..(o + 1) * shape.fan_in];
                    row.iter().zip(&a).fold(b[o], |acc, (wi, ai)| acc + wi * ai)
                })
                .collect();
            if l != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(a)
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"RODPINN\0";
const FORMAT_VERSION: u32 = 1;
const ACTIVATION: &str = "tanh";

/// A network snapshot with the metadata needed to resume or audit a run.
///
/// Binary layout, all integers and floats little-endian:
///
/// ```text
/// offset   size   field
/// 0        8      magic "RODPINN\0"
/// 8        4      format version (u32) = 1
/// 12       4      number of layer widths L (u32)
/// 16       4*L    widths (u32 each)
/// ..       1      activation name length n (u8)
/// ..       n      activation name, ASCII ("tanh")
/// ..       1      initializer kind (u8: 0 = he_uniform, 1 = glorot_uniform)
/// ..       8      initializer seed (u64)
/// ..       8      training step (u64)
/// ..       8      parameter count P (u64)
/// ..       8*P    parameters (IEEE-754 binary64)
/// ..       4      CRC-32 (IEEE) of every preceding byte
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: MlpNetwork,
    pub init: Initializer,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let mut buf = Vec::with_capacity(64 + 8 * net.params.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(net.widths.len() as u32).to_le_bytes());
        for &w in &net.widths {
            buf.extend_from_slice(&(w as u32).to_le_bytes());
        }
        buf.push(ACTIVATION.len() as u8);
        buf.extend_from_slice(ACTIVATION.as_bytes());
        buf.push(self.init.kind.code());
        buf.extend_from_slice(&self.init.seed.to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
        for p in &net.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::Checkpoint(what.to_string());
        if bytes.len() < MAGIC.len() + 4 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(corrupt("CRC mismatch"));
        }

        let mut r = ByteReader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n_widths = r.u32()? as usize;
        let widths = (0..n_widths)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let name_len = r.take(1)?[0] as usize;
        let name = r.take(name_len)?;
        if name != ACTIVATION.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "unsupported activation `{}`",
                String::from_utf8_lossy(name)
            )));
        }
        let kind = InitKind::from_code(r.take(1)?[0]).ok_or_else(|| corrupt("bad initializer"))?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let n_params = r.u64()? as usize;
        let params = (0..n_params)
            .map(|_| r.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        let network = MlpNetwork::new(widths, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            network,
            init: Initializer { kind, seed },
            step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
