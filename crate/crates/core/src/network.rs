//! Fully-connected ReLU classifiers: the data model, the JSON weight-file
//! loader, concrete evaluation with activation-pattern capture, and the
//! imperative-program rendering of a network.

use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One dense layer. Row `i` of `weights` holds the incoming weights of
/// neuron `i`; column `j` indexes the source neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, activation: Activation) -> Self {
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.biases.len()
    }

    /// Pre-activation values `W·input + b`.
    pub fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// An immutable stack of dense layers: ReLU on every layer but the last,
/// which is linear and produces the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    layers: Vec<Layer>,
}

impl Network {
    /// Validates shapes, activations and finiteness.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        let last = layers.len() - 1;
        let mut prev_out = None;
        for (l, layer) in layers.iter().enumerate() {
            if layer.biases.is_empty() || layer.weights.is_empty() {
                return Err(Error::Shape(format!("layer {l} has 0 neurons")));
            }
            if layer.weights.len() != layer.biases.len() {
                return Err(Error::Shape(format!(
                    "layer {l}: {} weight rows but {} biases",
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
            let in_dim = layer.input_dim();
            if in_dim == 0 {
                return Err(Error::Shape(format!("layer {l} has 0 inputs")));
            }
            if let Some((i, row)) = layer
                .weights
                .iter()
                .enumerate()
                .find(|(_, r)| r.len() != in_dim)
            {
                return Err(Error::Shape(format!(
                    "layer {l}: row {i} has {} weights, expected {in_dim}",
                    row.len()
                )));
            }
            if let Some(p) = prev_out {
                if p != in_dim {
                    return Err(Error::Shape(format!(
                        "layer {l} expects {in_dim} inputs but layer {} produces {p}",
                        l - 1
                    )));
                }
            }
            let expected = if l == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            if layer.activation != expected {
                return Err(Error::Shape(format!(
                    "layer {l} must use {expected:?} activation, found {:?}",
                    layer.activation
                )));
            }
            let bad = layer
                .weights
                .iter()
                .flatten()
                .chain(&layer.biases)
                .find(|v| !v.is_finite());
            if let Some(v) = bad {
                return Err(Error::Value(format!("layer {l} contains {v}")));
            }
            prev_out = Some(layer.output_dim());
        }
        Ok(Self { layers })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: WeightFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(file.layers)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&WeightFileRef {
            layers: &self.layers,
        })
        .expect("network serializes")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &Layer {
        &self.layers[self.layers.len() - 1]
    }

    /// Neuron counts of the hidden (ReLU) layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden_layers().iter().map(Layer::output_dim).collect()
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    /// Concrete evaluation, recording the ReLU branch taken at every hidden neuron.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardResult> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut bits = Vec::with_capacity(self.hidden_count());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let pre = layer.affine(&current);
            let post = match layer.activation {
                Activation::Relu => pre
                    .iter()
                    .map(|&v| {
                        let active = v > 0.0;
                        bits.push(active);
                        if active {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                Activation::Linear => pre.clone(),
            };
            pre_activations.push(pre);
            activations.push(post.clone());
            current = post;
        }
        let label = argmax(&current);
        Ok(ForwardResult {
            logits: current,
            label,
            pattern: ActivationPattern {
                bits,
                layer_sizes: self.hidden_sizes(),
            },
            pre_activations,
            activations,
        })
    }

    /// Renders the network as a C-like program: one guarded block per hidden
    /// neuron, plain accumulation for the output layer, then an argmax.
    pub fn emit_program(&self) -> String {
        let mut out = String::new();
        let m = self.input_dim();
        let n = self.output_dim();
        let last = self.layers.len();
        let _ = writeln!(out, "// fully-connected network: {m} inputs, {n} outputs");
        let _ = writeln!(out, "// s0 holds the input pixels, s{last} the logits");
        let _ = writeln!(out);
        for (l, layer) in self.layers.iter().enumerate() {
            let h = l + 1;
            let _ = writeln!(
                out,
                "double w{h}[{}][{}] = {{",
                layer.output_dim(),
                layer.input_dim()
            );
            for row in &layer.weights {
                let _ = writeln!(out, "  {{{}}},", join_floats(row));
            }
            let _ = writeln!(out, "}};");
            let _ = writeln!(
                out,
                "double b{h}[{}] = {{{}}};",
                layer.output_dim(),
                join_floats(&layer.biases)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "int classify(double s0[{m}]) {{");
        let _ = writeln!(out, "  double val;");
        let _ = writeln!(out, "  int index, label;");
        for (l, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "  double s{}[{}];", l + 1, layer.output_dim());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let h = l + 1;
            let src = layer.input_dim();
            for i in 0..layer.output_dim() {
                let _ = writeln!(out);
                let _ = writeln!(out, "  // layer {h}, neuron {i}");
                let _ = writeln!(out, "  val = 0;");
                let _ = writeln!(out, "  for (index = 0; index < {src}; index++) {{");
                let _ = writeln!(out, "    val += w{h}[{i}][index] * s{l}[index];");
                let _ = writeln!(out, "  }}");
                let _ = writeln!(out, "  val += b{h}[{i}];");
                match layer.activation {
                    Activation::Relu => {
                        let _ = writeln!(out, "  if (val > 0) {{ s{h}[{i}] = val; }}");
                        let _ = writeln!(out, "  else {{ s{h}[{i}] = 0; }}");
                    }
                    Activation::Linear => {
                        let _ = writeln!(out, "  s{h}[{i}] = val;");
                    }
                }
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "  label = 0;");
        let _ = writeln!(out, "  for (index = 1; index < {n}; index++) {{");
        let _ = writeln!(
            out,
            "    if (s{last}[index] > s{last}[label]) {{ label = index; }}"
        );
        let _ = writeln!(out, "  }}");
        let _ = writeln!(out, "  return label;");
        let _ = writeln!(out, "}}");
        out
    }
}

#[derive(Serialize)]
struct WeightFileRef<'a> {
    layers: &'a [Layer],
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json_str(&text)
}

/// Index of the largest value; the smallest such index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalized pixel intensities of one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector(Vec<f64>);

impl InputVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for InputVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for InputVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// ReLU branch outcomes, layer-major and neuron-minor. A bit is set iff the
/// neuron's pre-activation was strictly positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    pub bits: Vec<bool>,
    pub layer_sizes: Vec<usize>,
}

impl ActivationPattern {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Active neuron count per hidden layer.
    pub fn active_per_layer(&self) -> Vec<usize> {
        let mut offset = 0;
        self.layer_sizes
            .iter()
            .map(|&size| {
                let count = self.bits[offset..offset + size]
                    .iter()
                    .filter(|b| **b)
                    .count();
                offset += size;
                count
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub logits: Vec<f64>,
    pub label: usize,
    pub pattern: ActivationPattern,
    /// Per layer, the values before the activation function.
    pub pre_activations: Vec<Vec<f64>>,
    /// Per layer, the values after the activation function.
    pub activations: Vec<Vec<f64>>,
}
