//! Minimal fully connected Q-network with hand-rolled reverse-mode
//! gradients and an RMSprop optimizer. No external differentiation
//! dependency; the architecture family (ReLU hidden stack, linear scalar
//! head) is all this engine needs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden layers in the standard architecture.
pub const HIDDEN_LAYERS: usize = 6;
/// Units per hidden layer in the standard architecture.
pub const HIDDEN_UNITS: usize = 20;

/// One dense layer, row-major weights (`weights[o * in_dim + i]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Weights and biases of the Q-network. ReLU after every layer except the
/// scalar head, which stays linear so Q-values can be signed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetworkParams {
    pub layers: Vec<Layer>,
}

/// Gradient container with the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &QNetworkParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

impl QNetworkParams {
    /// Standard architecture: `input_dim` -> 20 x 6 (ReLU) -> 1, Glorot
    /// uniform weights, zero biases. Deterministic for a given seed.
    pub fn init(input_dim: usize, seed: u64) -> Result<Self> {
        if !(3..=5).contains(&input_dim) {
            return Err(Error::Argument(format!(
                "input dimension must be 3, 4 or 5, got {input_dim}"
            )));
        }
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat(HIDDEN_UNITS).take(HIDDEN_LAYERS));
        dims.push(1);
        Self::with_architecture(&dims, seed)
    }

    /// Arbitrary dense stack (used by tests and toy fixtures); the last
    /// layer must be scalar.
    pub fn with_architecture(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Argument("need at least input and output dims".into()));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::Argument("output head must be scalar".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Argument("zero-width layer".into()));
        }
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out);
            for w in layer.weights.iter_mut() {
                *w = rng.random_range(-limit..=limit);
            }
            layers.push(layer);
        }
        Ok(Self { layers })
    }

    /// Builds a network directly from layers (hand-constructed fixtures).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() || layers.last().unwrap().out_dim != 1 {
            return Err(Error::Argument("network must end in a scalar head".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Argument("layer shapes do not chain".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Q-value for one input.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "input dimension {} does not match network ({})",
                input.len(),
                self.input_dim()
            )));
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if li != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Squared loss over a batch and its exact gradient by reverse
    /// accumulation (ReLU subgradient 0 at the kink).
    pub fn loss_and_gradient(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let last = self.layers.len() - 1;
        let mut grad = Gradients::zeros_like(self);
        let mut loss = 0.0;
        // Per-sample activation stack: activations[0] is the input,
        // activations[i+1] the (post-ReLU) output of layer i.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (input, target) in batch {
            if input.len() != self.input_dim() {
                return Err(Error::Argument(format!(
                    "input dimension {} does not match network ({})",
                    input.len(),
                    self.input_dim()
                )));
            }
            activations.clear();
            activations.push(input.clone());
            for (li, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::new();
                layer.affine(activations.last().unwrap(), &mut out);
                if li != last {
                    for v in out.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                activations.push(out);
            }
            let prediction = activations.last().unwrap()[0];
            let err = prediction - target;
            loss += err * err;
            // Backward pass: delta starts at dL/d(prediction).
            let mut delta = vec![2.0 * err];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let ain = &activations[li];
                let g = &mut grad.layers[li];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gw, x) in row.iter_mut().zip(ain) {
                        *gw += d * x;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // Post-ReLU activation is zero exactly where the unit was
                // clamped, so it doubles as the derivative mask.
                for (p, &a) in prev.iter_mut().zip(&activations[li]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grad))
    }
}

/// RMSprop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    /// Step size.
    pub eta: f64,
    /// Accumulator decay.
    pub beta: f64,
    /// Numerical floor inside the square root.
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            beta: 0.9,
            eps: 1e-8,
        }
    }
}

/// Per-parameter squared-gradient accumulator plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub cfg: RmsPropConfig,
    acc: Vec<Layer>,
}

impl RmsPropState {
    pub fn new(cfg: RmsPropConfig, params: &QNetworkParams) -> Self {
        Self {
            cfg,
            acc: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    /// One update: `acc <- beta*acc + (1-beta)*g^2`,
    /// `p <- p - eta*g/sqrt(acc + eps)`. Rejects non-finite gradients.
    pub fn step(&mut self, params: &mut QNetworkParams, grad: &Gradients) -> Result<()> {
        if grad.layers.len() != params.layers.len() {
            return Err(Error::Argument("gradient/parameter shape mismatch".into()));
        }
        if !grad.is_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        let (eta, beta, eps) = (self.cfg.eta, self.cfg.beta, self.cfg.eps);
        for ((p, a), g) in params
            .layers
            .iter_mut()
            .zip(self.acc.iter_mut())
            .zip(&grad.layers)
        {
            if p.weights.len() != g.weights.len() || p.bias.len() != g.bias.len() {
                return Err(Error::Argument("gradient/parameter shape mismatch".into()));
            }
            for ((w, aw), gw) in p.weights.iter_mut().zip(a.weights.iter_mut()).zip(&g.weights) {
                *aw = beta * *aw + (1.0 - beta) * gw * gw;
                *w -= eta * gw / (*aw + eps).sqrt();
            }
            for ((b, ab), gb) in p.bias.iter_mut().zip(a.bias.iter_mut()).zip(&g.bias) {
                *ab = beta * *ab + (1.0 - beta) * gb * gb;
                *b -= eta * gb / (*ab + eps).sqrt();
            }
        }
        Ok(())
    }

    /// Exposed for tests: accumulator for a given layer.
    pub fn accumulator(&self, layer: usize) -> &Layer {
        &self.acc[layer]
    }
}
