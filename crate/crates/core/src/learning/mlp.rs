use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::StateVec;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How a state is turned into network features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// The state as is.
    Raw,
    /// `[x, y, cos θ, sin θ, v]`: removes the ±π seam of the heading.
    HeadingSinCos,
}

impl InputEncoding {
    pub fn feature_dim(self) -> usize {
        match self {
            InputEncoding::Raw => 4,
            InputEncoding::HeadingSinCos => 5,
        }
    }

    pub fn encode_into(self, x: &StateVec, out: &mut [f64]) {
        match self {
            InputEncoding::Raw => out.copy_from_slice(x.as_slice()),
            InputEncoding::HeadingSinCos => {
                let (s, c) = x[2].sin_cos();
                out.copy_from_slice(&[x[0], x[1], c, s, x[3]]);
            }
        }
    }
}

/// Per-dimension affine normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Statistics of the columns of `data` (one sample per column). Constant
    /// dimensions get unit scale.
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let n = data.ncols().max(1) as f64;
        let mut mean = Vec::with_capacity(data.nrows());
        let mut std = Vec::with_capacity(data.nrows());
        for row in data.row_iter() {
            let m = row.sum() / n;
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 });
        }
        Self { mean, std }
    }

    fn forward(&self, m: &mut DMatrix<f64>) {
        for (i, mut row) in m.row_iter_mut().enumerate() {
            let (mu, s) = (self.mean[i], self.std[i]);
            row.apply(|v| *v = (*v - mu) / s);
        }
    }
}

/// A dense layer, `weights` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub biases: DVector<f64>,
}

/// Feed-forward network: tanh hidden layers, identity output, with input and
/// output normalization baked in.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub encoding: InputEncoding,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

/// Intermediate activations of a batch forward pass.
pub(crate) struct Activations {
    /// `acts[0]` is the normalized input; `acts[i]` the output of layer `i`.
    pub acts: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// Xavier-uniform initialization.
    pub fn new(layer_dims: &[usize], encoding: InputEncoding, rng: &mut impl Rng) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|d| *d == 0) {
            return Err(Error::Contract("an MLP needs at least two non-empty layers".into()));
        }
        if layer_dims[0] != encoding.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: encoding.feature_dim(),
                got: layer_dims[0],
            });
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-limit..limit)),
                    biases: DVector::zeros(w[1]),
                }
            })
            .collect();
        let out = *layer_dims.last().unwrap();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            encoding,
            input_norm: Normalizer::identity(layer_dims[0]),
            output_norm: Normalizer::identity(out),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Encoded features of `states`, one column per state (not normalized).
    pub fn features(&self, states: &[StateVec]) -> DMatrix<f64> {
        let d = self.input_dim();
        let mut m = DMatrix::zeros(d, states.len());
        let mut buf = vec![0.0; d];
        for (j, x) in states.iter().enumerate() {
            self.encoding.encode_into(x, &mut buf);
            m.column_mut(j).copy_from_slice(&buf);
        }
        m
    }

    /// Forward pass on normalized features; outputs stay in normalized units.
    pub(crate) fn forward_normalized(&self, input: DMatrix<f64>) -> Activations {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.biases;
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Activations { acts }
    }

    /// Mean-squared error (normalized units) and its gradient, flattened in
    /// [`Self::params`] order. `input` holds normalized features and
    /// `targets` normalized outputs, one column per sample.
    pub fn loss_and_grad(&self, input: DMatrix<f64>, targets: &DMatrix<f64>) -> (f64, Vec<f64>) {
        let act = self.forward_normalized(input);
        let out = act.acts.last().unwrap();
        let scale = 1.0 / (targets.len() as f64);
        let diff = out - targets;
        let loss = diff.norm_squared() * scale;
        let mut delta = diff * (2.0 * scale);
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let prev = &act.acts[i];
            let gw = &delta * prev.transpose();
            let gb = delta.column_sum();
            if i > 0 {
                let mut back = self.layers[i].weights.tr_mul(&delta);
                back.zip_apply(prev, |g, a| *g *= 1.0 - a * a);
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (gw, gb) in grads {
            flat.extend_from_slice(gw.as_slice());
            flat.extend_from_slice(gb.as_slice());
        }
        (loss, flat)
    }

    /// Loss only (normalized units).
    pub fn loss(&self, input: DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
        let act = self.forward_normalized(input);
        (act.acts.last().unwrap() - targets).norm_squared() / targets.len() as f64
    }

    /// All parameters flattened: per layer, weights (column-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(l.weights.as_slice());
            p.extend_from_slice(l.biases.as_slice());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
            let n = l.biases.len();
            l.biases.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }

    /// Network output for one state, in physical units.
    pub fn predict(&self, x: &StateVec) -> Vec<f64> {
        let d = self.input_dim();
        let mut buf = [0.0; 8];
        self.encoding.encode_into(x, &mut buf[..d]);
        let mut h: Vec<f64> = buf[..d]
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.input_norm.mean[i]) / self.input_norm.std[i])
            .collect();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = &layer.weights;
            let mut next = layer.biases.as_slice().to_vec();
            // column-major: accumulate column by column
            for (j, hj) in h.iter().enumerate() {
                let col = w.column(j);
                for (o, wv) in next.iter_mut().zip(col.iter()) {
                    *o += wv * hj;
                }
            }
            if i < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = next;
        }
        h.iter()
            .enumerate()
            .map(|(i, v)| v * self.output_norm.std[i] + self.output_norm.mean[i])
            .collect()
    }

    pub fn normalize_inputs(&self, features: &mut DMatrix<f64>) {
        self.input_norm.forward(features);
    }

    pub fn normalize_outputs(&self, targets: &mut DMatrix<f64>) {
        self.output_norm.forward(targets);
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, &ModelFile::from(self))?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(input)?;
        file.try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// On-disk model: weights are row-major `out × in`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: String,
    encoding: InputEncoding,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    output_mean: Vec<f64>,
    output_std: Vec<f64>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for ModelFile {
    fn from(m: &Mlp) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: m.layer_dims.clone(),
            activation: "tanh".into(),
            encoding: m.encoding,
            input_mean: m.input_norm.mean.clone(),
            input_std: m.input_norm.std.clone(),
            output_mean: m.output_norm.mean.clone(),
            output_std: m.output_norm.std.clone(),
            weights: m
                .layers
                .iter()
                .map(|l| l.weights.transpose().as_slice().to_vec())
                .collect(),
            biases: m.layers.iter().map(|l| l.biases.as_slice().to_vec()).collect(),
        }
    }
}

impl TryFrom<ModelFile> for Mlp {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("model file: {msg}"));
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(bad("unsupported format version"));
        }
        if f.activation != "tanh" {
            return Err(bad("only tanh activations are supported"));
        }
        let dims = &f.layer_dims;
        if dims.len() < 2 || dims.len() > 16 || dims.iter().any(|d| *d == 0 || *d > 4096) {
            return Err(bad("invalid layer dimensions"));
        }
        if dims[0] != f.encoding.feature_dim() {
            return Err(bad("input dimension does not match the encoding"));
        }
        let (din, dout) = (dims[0], *dims.last().unwrap());
        let norm_ok = |mean: &[f64], std: &[f64], d: usize| {
            mean.len() == d
                && std.len() == d
                && mean.iter().all(|v| v.is_finite())
                && std.iter().all(|s| s.is_finite() && *s > 0.0)
        };
        if !norm_ok(&f.input_mean, &f.input_std, din) || !norm_ok(&f.output_mean, &f.output_std, dout) {
            return Err(bad("normalization statistics must match dims and have std > 0"));
        }
        if f.weights.len() != dims.len() - 1 || f.biases.len() != dims.len() - 1 {
            return Err(bad("layer count mismatch"));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wv = &f.weights[i];
            let bv = &f.biases[i];
            if wv.len() != fan_in * fan_out || bv.len() != fan_out {
                return Err(bad("weight shape mismatch"));
            }
            if !wv.iter().chain(bv).all(|v| v.is_finite()) {
                return Err(bad("non-finite parameter"));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_slice(fan_out, fan_in, wv),
                biases: DVector::from_column_slice(bv),
            });
        }
        Ok(Mlp {
            layer_dims: f.layer_dims,
            layers,
            encoding: f.encoding,
            input_norm: Normalizer {
                mean: f.input_mean,
                std: f.input_std,
            },
            output_norm: Normalizer {
                mean: f.output_mean,
                std: f.output_std,
            },
        })
    }
}
