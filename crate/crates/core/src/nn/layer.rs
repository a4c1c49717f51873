use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul_a_b, matmul_a_bt, matmul_at_b_acc, Matrix};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Fully-connected layer `activation(W·x + b)` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Weights uniform in ±1/√in, biases zero.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data),
            biases: vec![0.0; outputs],
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            biases: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.inputs() {
            return Err(NnError::ShapeMismatch {
                context: "dense forward",
                expected: self.inputs(),
                found: input.len(),
            });
        }
        let x = Matrix::from_vec(1, input.len(), input.to_vec());
        let (_, out) = self.forward_batch(&x);
        Ok(out.into_vec())
    }

    /// Batched forward pass; returns (pre-activation, output).
    pub fn forward_batch(&self, x: &Matrix) -> (Matrix, Matrix) {
        let mut pre = Matrix::zeros(x.rows(), self.outputs());
        matmul_a_bt(x, &self.weights, &mut pre);
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        let out = match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Relu => {
                let mut out = pre.clone();
                for v in out.as_mut_slice() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                out
            }
        };
        (pre, out)
    }
}

/// Gradients of one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Stack of dense layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Values cached by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Matrix::zeros(l.outputs(), l.inputs()),
                    biases: vec![0.0; l.outputs()],
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for g in &mut self.layers {
            g.weights.as_mut_slice().fill(0.0);
            g.biases.fill(0.0);
        }
    }

    /// Flat views in parameter order: per layer, weights then biases.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.biases.as_slice()])
            .collect()
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NnError::ShapeMismatch {
                    context: "layer chaining",
                    expected: pair[0].outputs(),
                    found: pair[1].inputs(),
                });
            }
        }
        for layer in &layers {
            if layer.biases.len() != layer.outputs() {
                return Err(NnError::ShapeMismatch {
                    context: "bias length",
                    expected: layer.outputs(),
                    found: layer.biases.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Hidden layers use `hidden`, the last layer `last`.
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                DenseLayer::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<MlpTrace, NnError> {
        if x.cols() != self.inputs() {
            return Err(NnError::ShapeMismatch {
                context: "network input",
                expected: self.inputs(),
                found: x.cols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let (p, out) = layer.forward_batch(&current);
            inputs.push(current);
            pre.push(p);
            current = out;
        }
        Ok(MlpTrace {
            inputs,
            pre,
            output: current,
        })
    }

    /// Output only, without keeping intermediate values.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NnError> {
        if x.cols() != self.inputs() {
            return Err(NnError::ShapeMismatch {
                context: "network input",
                expected: self.inputs(),
                found: x.cols(),
            });
        }
        let mut current = x.clone();
        for layer in &self.layers {
            current = layer.forward_batch(&current).1;
        }
        Ok(current)
    }

    /// Accumulate parameter gradients into `grads` given `d loss / d output`.
    /// Returns `d loss / d input` when `want_input_grad` is set.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        upstream: &Matrix,
        grads: &mut MlpGrads,
        want_input_grad: bool,
    ) -> Result<Option<Matrix>, NnError> {
        if upstream.rows() != trace.output.rows() || upstream.cols() != trace.output.cols() {
            return Err(NnError::ShapeMismatch {
                context: "upstream gradient",
                expected: trace.output.cols(),
                found: upstream.cols(),
            });
        }
        if grads.layers.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch {
                context: "gradient buffers",
                expected: self.layers.len(),
                found: grads.layers.len(),
            });
        }
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (d, &p) in delta.as_mut_slice().iter_mut().zip(trace.pre[i].as_slice()) {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads.layers[i];
            matmul_at_b_acc(&delta, &trace.inputs[i], &mut g.weights);
            for r in 0..delta.rows() {
                for (gb, d) in g.biases.iter_mut().zip(delta.row(r)) {
                    *gb += d;
                }
            }
            if i > 0 || want_input_grad {
                let mut next = Matrix::zeros(delta.rows(), layer.inputs());
                matmul_a_b(&delta, &layer.weights, &mut next);
                delta = next;
            }
        }
        Ok(if want_input_grad { Some(delta) } else { None })
    }

    /// Mutable flat views in parameter order: per layer, weights then biases.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}
