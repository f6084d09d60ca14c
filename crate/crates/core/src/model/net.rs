//! Fully connected representation network `φ: R^r → R^p`.

use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Tanh => libm::tanh(z),
            Self::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - a * a,
            Self::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Identity => "identity",
        }
    }
}

/// Affine layer followed by an activation. `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Architecture of the representation: `r → hidden… → p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
    pub repr_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            repr_dim: 16,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }
}

impl ArchConfig {
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(&self.hidden);
        w.push(self.repr_dim);
        w
    }

    pub fn activations(&self) -> Vec<Activation> {
        let mut a = vec![self.hidden_activation; self.hidden.len()];
        a.push(self.output_activation);
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationNet {
    layers: Vec<Dense>,
}

/// Per-layer pre- and post-activation values of one forward pass.
#[derive(Debug, Default, Clone)]
pub(crate) struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl RepresentationNet {
    /// Zero-initialized network with the given layer widths `[r, h_1, …, p]`.
    pub fn zeros(widths: &[usize], activations: &[Activation]) -> Result<Self> {
        if widths.len() < 2 {
            bail!(Shape, "network needs at least an input and an output width");
        }
        if activations.len() != widths.len() - 1 {
            bail!(Shape, "{} activations for {} layers", activations.len(), widths.len() - 1);
        }
        if widths.contains(&0) {
            bail!(Shape, "layer widths must be positive, got {widths:?}");
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
                activation,
            })
            .collect();
        Ok(Self { layers })
    }

    /// Weights iid `N(0, 1/fan_in)`, zero biases.
    pub fn init_gaussian<R: rand::Rng>(widths: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activations)?;
        for layer in &mut net.layers {
            let s = 1.0 / libm::sqrt(layer.inputs as f64);
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng);
                *w = s * z;
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            bail!(Shape, "network needs at least one layer");
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                bail!(Shape, "layer {i} parameter shapes do not match {}×{}", l.outputs, l.inputs);
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                bail!(Shape, "layer {i} expects {} inputs, previous layer emits {}", l.inputs, layers[i - 1].outputs);
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut trace = Trace::default();
        self.forward_trace(x, &mut trace);
        trace.post.pop().unwrap_or_default()
    }

    pub(crate) fn forward_trace(&self, x: &[f64], trace: &mut Trace) {
        trace.pre.resize(self.layers.len(), Vec::new());
        trace.post.resize(self.layers.len(), Vec::new());
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.post.split_at_mut(i);
            let input = if i == 0 { x } else { &done[i - 1] };
            let pre = &mut trace.pre[i];
            pre.clear();
            pre.extend_from_slice(&layer.bias);
            for (o, z) in pre.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                *z += row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
            }
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().map(|&z| layer.activation.apply(z)));
        }
    }

    pub(crate) fn output<'t>(&self, trace: &'t Trace) -> &'t [f64] {
        &trace.post[self.layers.len() - 1]
    }

    /// Accumulates parameter gradients for one sample given `∂loss/∂φ(x)`.
    pub(crate) fn backward(&self, x: &[f64], trace: &Trace, grad_out: &[f64], grads: &mut [LayerGrads], scratch: &mut Vec<f64>) {
        let mut delta: Vec<f64> = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            for ((d, &z), &a) in delta.iter_mut().zip(&trace.pre[i]).zip(&trace.post[i]) {
                *d *= layer.activation.derivative(z, a);
            }
            let input = if i == 0 { x } else { &trace.post[i - 1] };
            let g = &mut grads[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &v) in row.iter_mut().zip(input) {
                    *w += d * v;
                }
            }
            if i > 0 {
                scratch.clear();
                scratch.resize(layer.inputs, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (s, &w) in scratch.iter_mut().zip(row) {
                        *s += d * w;
                    }
                }
                core::mem::swap(&mut delta, scratch);
            }
        }
    }

    pub(crate) fn zero_grads(&self) -> Vec<LayerGrads> {
        self.layers
            .iter()
            .map(|l| LayerGrads { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
            .collect()
    }

    pub(crate) fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}
