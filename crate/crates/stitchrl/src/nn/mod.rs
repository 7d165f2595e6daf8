//! Minimal dense feed-forward networks with reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>` (per layer: row-major weight
//! matrix, then bias), which keeps the optimizer, serialization, and
//! finite-difference checks straightforward. Hidden layers apply the
//! configured activation; the output layer is always linear. Double
//! precision throughout.

pub mod adam;
pub mod policy;
pub mod serial;

pub use adam::AdamState;
pub use policy::{CategoricalPolicy, GaussianPolicy, PolicyModel};

use crate::store::rng::Rng;
use crate::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation input.
    fn derive(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            t => Err(Error::Corrupt(format!("unknown activation tag {t}"))),
        }
    }
}

/// Dense multi-layer perceptron with flat parameter storage.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl MlpNet {
    /// Zero-initialized network. `layer_sizes` includes input and output,
    /// so a single linear layer is `[in, out]`.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "network needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let count: usize = layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        Ok(MlpNet {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: vec![0.0; count],
        })
    }

    /// Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn glorot(layer_sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activation)?;
        let mut off = 0;
        for w in net.layer_sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.uniform(-limit, limit);
            }
            off += fan_in * fan_out + fan_out; // biases stay zero
        }
        Ok(net)
    }

    pub fn from_parts(layer_sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(layer_sizes, activation)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension {
                context: "MlpNet::from_parts",
                expected: net.params.len(),
                got: params.len(),
            });
        }
        Ok(MlpNet { params, ..net })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "MlpNet forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Deterministic forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut act = input.to_vec();
        let mut off = 0;
        let last = self.layer_sizes.len() - 2;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut next = vec![0.0; n_out];
            for (o, nx) in next.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut z = biases[o];
                for (wi, ai) in row.iter().zip(act.iter()) {
                    z += wi * ai;
                }
                *nx = if l == last { z } else { self.activation.apply(z) };
            }
            act = next;
            off += n_in * n_out + n_out;
        }
        Ok(act)
    }

    /// Reverse-mode gradients of `output_grad . output` with respect to the
    /// parameters. Pure function of `(params, input, output_grad)`; the
    /// forward pass is recomputed internally.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(input, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(
        &self,
        input: &[f64],
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        self.check_input(input)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "MlpNet backward output_grad",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "MlpNet backward grads buffer",
                expected: self.params.len(),
                got: grads.len(),
            });
        }

        // Forward pass keeping pre-activations and activations per layer.
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        let mut off = 0;
        let mut offsets = Vec::with_capacity(n_layers);
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            offsets.push(off);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let prev = &acts[l];
            let mut z = vec![0.0; n_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut s = biases[o];
                for (wi, ai) in row.iter().zip(prev.iter()) {
                    s += wi * ai;
                }
                *zo = s;
            }
            let a = if l == n_layers - 1 {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            acts.push(a);
            off += n_in * n_out + n_out;
        }

        // Backward pass.
        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            // Hidden layers fold the activation derivative into delta; the
            // output layer is linear.
            if l != n_layers - 1 {
                for (d, z) in delta.iter_mut().zip(pre[l].iter()) {
                    *d *= self.activation.derive(*z);
                }
            }
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let g_row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (g, ai) in g_row.iter_mut().zip(prev.iter()) {
                    *g += d * ai;
                }
                grads[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut next_delta = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    for (nd, wi) in next_delta.iter_mut().zip(row.iter()) {
                        *nd += d * wi;
                    }
                }
                delta = next_delta;
            }
        }
        Ok(())
    }
}
