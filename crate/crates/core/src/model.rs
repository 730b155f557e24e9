//! Piecewise-linear classifiers over concatenated word embeddings.
//!
//! A [`Network`] is an ordered list of affine, ReLU and 1-D convolution
//! layers ending in an affine layer that produces one logit per label.
//! Softmax is never represented: the predicted label is the argmax of the
//! logits, with ties going to the smallest label index.
//!
//! Convolutions are kept in their stored form so that model files round-trip,
//! and are lowered to dense affine maps (see [`lower_conv`]) before
//! verification.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense affine map `y = W x + b` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Affine {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let rows = weights.len();
        let cols = weights.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(
                "affine layer with empty weights".into(),
            ));
        }
        if let Some(r) = weights.iter().position(|row| row.len() != cols) {
            return Err(Error::InvalidShape(format!(
                "row {r} has {} columns, expected {cols}",
                weights[r].len()
            )));
        }
        Self::from_flat(rows, cols, weights.into_iter().flatten().collect(), bias)
    }

    pub fn from_flat(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{} weights for a {rows}x{cols} matrix",
                weights.len()
            )));
        }
        if bias.len() != rows {
            return Err(Error::InvalidShape(format!(
                "bias has length {}, expected {rows}",
                bias.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            weights,
            bias: vec![0.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(self.bias[i], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }

    /// `W^T g`, the pull-back of an output covector.
    pub fn transpose_apply(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += gi * w;
            }
        }
        out
    }

    fn nested_weights(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// One-dimensional convolution over a position-major sequence.
///
/// The input of length `len * in_channels` is laid out position by position
/// (the same layout as concatenated word embeddings); the output uses the
/// same layout with `out_channels` values per output position.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    out_channels: usize,
    width: usize,
    in_channels: usize,
    stride: usize,
    /// Indexed `[out][tap][in]`.
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv1d {
    pub fn new(kernel: Vec<Vec<Vec<f64>>>, stride: usize, bias: Option<Vec<f64>>) -> Result<Self> {
        let out_channels = kernel.len();
        let width = kernel.first().map_or(0, Vec::len);
        let in_channels = kernel
            .first()
            .and_then(|taps| taps.first())
            .map_or(0, Vec::len);
        if out_channels == 0 || width == 0 || in_channels == 0 {
            return Err(Error::InvalidShape("convolution kernel is empty".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidShape(
                "convolution stride must be at least 1".into(),
            ));
        }
        for taps in &kernel {
            if taps.len() != width || taps.iter().any(|t| t.len() != in_channels) {
                return Err(Error::InvalidShape("ragged convolution kernel".into()));
            }
        }
        let bias = bias.unwrap_or_else(|| vec![0.0; out_channels]);
        if bias.len() != out_channels {
            return Err(Error::InvalidShape(format!(
                "convolution bias has length {}, expected {out_channels}",
                bias.len()
            )));
        }
        Ok(Self {
            out_channels,
            width,
            in_channels,
            stride,
            kernel: kernel.into_iter().flatten().flatten().collect(),
            bias,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn tap(&self, o: usize, k: usize, c: usize) -> f64 {
        self.kernel[(o * self.width + k) * self.in_channels + c]
    }

    /// Number of output positions for an input of `in_len` positions.
    pub fn output_len(&self, in_len: usize) -> Result<usize> {
        if self.width > in_len {
            return Err(Error::InvalidShape(format!(
                "kernel width {} exceeds input length {in_len}",
                self.width
            )));
        }
        Ok((in_len - self.width) / self.stride + 1)
    }

    /// Input positions for a flattened input of `in_dim` values.
    pub fn input_len(&self, in_dim: usize) -> Result<usize> {
        if !in_dim.is_multiple_of(self.in_channels) {
            return Err(Error::InvalidShape(format!(
                "input of {in_dim} values is not a multiple of {} channels",
                self.in_channels
            )));
        }
        Ok(in_dim / self.in_channels)
    }

    /// Direct (sliding window) evaluation.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let in_len = self.input_len(x.len())?;
        let out_len = self.output_len(in_len)?;
        let mut out = Vec::with_capacity(out_len * self.out_channels);
        for p in 0..out_len {
            let start = p * self.stride;
            for o in 0..self.out_channels {
                let mut acc = self.bias[o];
                for k in 0..self.width {
                    for c in 0..self.in_channels {
                        acc += self.tap(o, k, c) * x[(start + k) * self.in_channels + c];
                    }
                }
                out.push(acc);
            }
        }
        Ok(out)
    }

    fn nested_kernel(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.out_channels)
            .map(|o| {
                (0..self.width)
                    .map(|k| (0..self.in_channels).map(|c| self.tap(o, k, c)).collect())
                    .collect()
            })
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.kernel.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Lowers a convolution applied to `in_len` input positions to the dense
/// affine map computing the same function.
pub fn lower_conv(conv: &Conv1d, in_len: usize) -> Result<Affine> {
    let out_len = conv.output_len(in_len)?;
    let rows = out_len * conv.out_channels;
    let cols = in_len * conv.in_channels;
    let mut weights = vec![0.0; rows * cols];
    let mut bias = Vec::with_capacity(rows);
    for p in 0..out_len {
        let start = p * conv.stride;
        for o in 0..conv.out_channels {
            let r = p * conv.out_channels + o;
            for k in 0..conv.width {
                for c in 0..conv.in_channels {
                    weights[r * cols + (start + k) * conv.in_channels + c] = conv.tap(o, k, c);
                }
            }
            bias.push(conv.bias[o]);
        }
    }
    Affine::from_flat(rows, cols, weights, bias)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(Affine),
    Relu,
    Conv1d(Conv1d),
}

impl Layer {
    /// Output dimension given the input dimension.
    fn out_dim(&self, in_dim: usize) -> Result<usize> {
        match self {
            Layer::Affine(a) => {
                if a.cols != in_dim {
                    return Err(Error::InvalidShape(format!(
                        "affine layer expects {} inputs, got {in_dim}",
                        a.cols
                    )));
                }
                Ok(a.rows)
            }
            Layer::Relu => Ok(in_dim),
            Layer::Conv1d(c) => {
                let in_len = c.input_len(in_dim)?;
                Ok(c.output_len(in_len)? * c.out_channels)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub logits: Vec<f64>,
}

/// Index of the largest logit; ties go to the smallest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate().skip(1) {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_words: usize,
    embedding_dim: usize,
    labels: Vec<String>,
    layers: Vec<Layer>,
    dropped_layers: usize,
}

impl Network {
    pub fn new(
        input_words: usize,
        embedding_dim: usize,
        labels: Vec<String>,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let net = Self {
            input_words,
            embedding_dim,
            labels,
            layers,
            dropped_layers: 0,
        };
        net.validate().map_err(|e| match e {
            Error::InvalidShape(m) => Error::format("layers", m),
            other => other,
        })?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.input_words == 0 || self.embedding_dim == 0 {
            return Err(Error::format(
                "input_words",
                "input_words and embedding_dim must be positive",
            ));
        }
        if self.labels.len() < 2 {
            return Err(Error::format("labels", "at least two labels are required"));
        }
        let mut dim = self.input_dim();
        for (i, layer) in self.layers.iter().enumerate() {
            let finite = match layer {
                Layer::Affine(a) => a.all_finite(),
                Layer::Conv1d(c) => c.all_finite(),
                Layer::Relu => true,
            };
            if !finite {
                return Err(Error::format(format!("layers[{i}]"), "non-finite weight"));
            }
            dim = layer
                .out_dim(dim)
                .map_err(|e| Error::format(format!("layers[{i}]"), e.to_string()))?;
        }
        match self.layers.last() {
            Some(Layer::Affine(_)) => {}
            _ => {
                return Err(Error::format(
                    "layers",
                    "the final layer must be affine (logits)",
                ))
            }
        }
        if dim != self.labels.len() {
            return Err(Error::format(
                "layers",
                format!(
                    "network produces {dim} logits for {} labels",
                    self.labels.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn input_words(&self) -> usize {
        self.input_words
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_words * self.embedding_dim
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of dropout layers discarded while loading.
    pub fn dropped_layers(&self) -> usize {
        self.dropped_layers
    }

    pub fn has_conv(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Conv1d(_)))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} input values, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite input value".into()));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut v = x.to_vec();
        for layer in &self.layers {
            v = match layer {
                Layer::Affine(a) => a.apply(&v),
                Layer::Relu => v.into_iter().map(|z| z.max(0.0)).collect(),
                Layer::Conv1d(c) => c.apply(&v)?,
            };
        }
        Ok(v)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        let logits = self.logits(x)?;
        Ok(Prediction {
            label: argmax(&logits),
            logits,
        })
    }

    /// Copy of the network with every convolution replaced by its dense
    /// affine equivalent.
    pub fn lowered(&self) -> Result<Network> {
        let mut dim = self.input_dim();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out = layer.out_dim(dim)?;
            layers.push(match layer {
                Layer::Conv1d(c) => Layer::Affine(lower_conv(c, c.input_len(dim)?)?),
                other => other.clone(),
            });
            dim = out;
        }
        Ok(Network {
            layers,
            ..self.clone()
        })
    }

    /// Gradient of `logit_a - logit_b` with respect to the input.
    ///
    /// At a ReLU kink (pre-activation exactly zero) the inactive slope 0 is
    /// used.
    pub fn gradient(&self, x: &[f64], (a, b): (usize, usize)) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if a >= self.num_labels() || b >= self.num_labels() {
            return Err(Error::InvalidInput(format!(
                "label pair ({a}, {b}) out of range"
            )));
        }
        if self.has_conv() {
            return self.lowered()?.gradient(x, (a, b));
        }
        // Forward pass remembering the input of every layer.
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut v = x.to_vec();
        for layer in &self.layers {
            let next = match layer {
                Layer::Affine(aff) => aff.apply(&v),
                Layer::Relu => v.iter().map(|z| z.max(0.0)).collect(),
                Layer::Conv1d(_) => unreachable!("lowered above"),
            };
            inputs.push(v);
            v = next;
        }
        let mut g = vec![0.0; self.num_labels()];
        g[a] += 1.0;
        g[b] -= 1.0;
        for (layer, input) in self.layers.iter().zip(&inputs).rev() {
            g = match layer {
                Layer::Affine(aff) => aff.transpose_apply(&g),
                Layer::Relu => g
                    .iter()
                    .zip(input)
                    .map(|(gi, z)| if *z > 0.0 { *gi } else { 0.0 })
                    .collect(),
                Layer::Conv1d(_) => unreachable!("lowered above"),
            };
        }
        Ok(g)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| {
            Error::format(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        file.into_network()
    }

    pub fn load(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    /// Canonical JSON encoding; floats are written in shortest round-trip form.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&ModelFile::from_network(self))
            .expect("model serialization cannot fail");
        out.push('\n');
        out
    }

    pub fn save(&self, mut writer: impl Write) -> Result<()> {
        writer.write_all(self.to_json().as_bytes())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    input_words: usize,
    embedding_dim: usize,
    labels: Vec<String>,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerRecord {
    Affine {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Relu,
    Conv1d {
        kernel: Vec<Vec<Vec<f64>>>,
        stride: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<Vec<f64>>,
    },
    Dropout {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<f64>,
    },
}

impl ModelFile {
    fn into_network(self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut dropped = 0;
        for (i, record) in self.layers.into_iter().enumerate() {
            let at = |e: Error| Error::format(format!("layers[{i}]"), e.to_string());
            layers.push(match record {
                LayerRecord::Affine { weights, bias } => {
                    if weights
                        .iter()
                        .flatten()
                        .chain(&bias)
                        .any(|v| !v.is_finite())
                    {
                        return Err(Error::format(format!("layers[{i}]"), "non-finite weight"));
                    }
                    Layer::Affine(Affine::new(weights, bias).map_err(at)?)
                }
                LayerRecord::Relu => Layer::Relu,
                LayerRecord::Conv1d {
                    kernel,
                    stride,
                    bias,
                } => Layer::Conv1d(Conv1d::new(kernel, stride, bias).map_err(at)?),
                LayerRecord::Dropout { .. } => {
                    dropped += 1;
                    continue;
                }
            });
        }
        let mut net = Network::new(self.input_words, self.embedding_dim, self.labels, layers)?;
        net.dropped_layers = dropped;
        Ok(net)
    }

    fn from_network(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Affine(a) => LayerRecord::Affine {
                    weights: a.nested_weights(),
                    bias: a.bias.clone(),
                },
                Layer::Relu => LayerRecord::Relu,
                Layer::Conv1d(c) => LayerRecord::Conv1d {
                    kernel: c.nested_kernel(),
                    stride: c.stride,
                    bias: Some(c.bias.clone()),
                },
            })
            .collect();
        Self {
            input_words: net.input_words,
            embedding_dim: net.embedding_dim,
            labels: net.labels.clone(),
            layers,
        }
    }
}
