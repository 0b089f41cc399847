//! Minimal feed-forward network machinery with exact analytic gradients.
//!
//! Hidden layers use tanh, the output layer is affine. Everything is f64
//! and value-like: forward passes never mutate the network, training
//! mutates parameters explicitly through the optimizer.

mod checkpoint;
mod gradcheck;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{optimizer_step, Algorithm, OptimizerState};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input dimension {got} does not match layer dimension {want}")]
    DimMismatch { want: usize, got: usize },
    #[error("cache shape {cache:?} does not match network shape {net:?}")]
    StaleCache { net: Vec<usize>, cache: Vec<usize> },
    #[error("layer dims must contain at least an input and an output entry")]
    TooFewLayers,
    #[error("non-finite {what} encountered")]
    NonFinite { what: &'static str },
    #[error("parameter buffer has {got} values, network needs {want}")]
    ParamCount { want: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// One affine layer, weights stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Feed-forward network: tanh hidden layers, identity output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-parameter gradients, shape-congruent with an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_dims: Vec<usize>,
    /// `activations[0]` is the input; `activations[l]` the post-activation
    /// output of layer `l-1`.
    activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// Zero-initialized network with the given dims, e.g. `[13, 32, 32, 8]`.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::TooFewLayers);
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                in_dim: w[0],
                out_dim: w[1],
                weight: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn glorot(layer_dims: &[usize], rng: &mut ChaCha12Rng) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_dims)?;
        for layer in &mut net.layers {
            let bound = Self::init_bound(layer.in_dim, layer.out_dim);
            for w in &mut layer.weight {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn init_bound(in_dim: usize, out_dim: usize) -> f64 {
        (6.0 / (in_dim + out_dim) as f64).sqrt()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Affine + tanh composition; the cache retains per-layer activations.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimMismatch {
                want: self.input_dim(),
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &activations[l];
            let mut out = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut acc = layer.bias[o];
                for (w, x) in row.iter().zip(prev.iter()) {
                    acc += w * x;
                }
                out[o] = if l == last { acc } else { acc.tanh() };
            }
            activations.push(out);
        }
        let output = activations.last().unwrap().clone();
        Ok((
            output,
            ForwardCache {
                layer_dims: self.layer_dims.clone(),
                activations,
            },
        ))
    }

    /// Exact reverse-mode gradients of `output · output_grad` with respect
    /// to all parameters; also returns the gradient with respect to the
    /// input (needed to chain losses through received messages).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<(Gradients, Vec<f64>), NnError> {
        if cache.layer_dims != self.layer_dims {
            return Err(NnError::StaleCache {
                net: self.layer_dims.clone(),
                cache: cache.layer_dims.clone(),
            });
        }
        if output_grad.len() != self.output_dim() {
            return Err(NnError::DimMismatch {
                want: self.output_dim(),
                got: output_grad.len(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let last = self.layers.len() - 1;
        // Gradient w.r.t. the post-activation of the current layer.
        let mut upstream = output_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let post = &cache.activations[l + 1];
            let prev = &cache.activations[l];
            // delta = dL/d(pre-activation)
            let delta: Vec<f64> = if l == last {
                upstream.clone()
            } else {
                upstream
                    .iter()
                    .zip(post.iter())
                    .map(|(g, a)| g * (1.0 - a * a))
                    .collect()
            };
            let grad_layer = &mut grads.layers[l];
            let mut down = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                grad_layer.bias[o] += delta[o];
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                let grow = &mut grad_layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    grow[i] += delta[o] * prev[i];
                    down[i] += row[i] * delta[o];
                }
            }
            upstream = down;
        }
        Ok((grads, upstream))
    }

    /// Appends all parameters (per layer: weights row-major, then bias).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weight);
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Reads parameters back in [`Mlp::write_params`] order, returning the
    /// number of values consumed.
    pub fn read_params(&mut self, buf: &[f64]) -> Result<usize, NnError> {
        let want = self.param_count();
        if buf.len() < want {
            return Err(NnError::ParamCount {
                want,
                got: buf.len(),
            });
        }
        let mut cursor = 0;
        for layer in &mut self.layers {
            let w_len = layer.weight.len();
            layer.weight.copy_from_slice(&buf[cursor..cursor + w_len]);
            cursor += w_len;
            let b_len = layer.bias.len();
            layer.bias.copy_from_slice(&buf[cursor..cursor + b_len]);
            cursor += b_len;
        }
        Ok(cursor)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layer_dims: net.layer_dims.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        debug_assert_eq!(self.layer_dims, other.layer_dims);
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.weight.iter_mut().zip(b.weight.iter()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weight {
                *w *= factor;
            }
            for b in &mut layer.bias {
                *b *= factor;
            }
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weight);
            out.extend_from_slice(&layer.bias);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| *v == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSplitter;

    fn hand_net_232() -> Mlp {
        // 2-3-2: hidden tanh, output identity; weights chosen by hand.
        let mut net = Mlp::zeros(&[2, 3, 2]).unwrap();
        net.layers_mut()[0].weight = vec![0.5, -0.25, 0.1, 0.2, -0.3, 0.7];
        net.layers_mut()[0].bias = vec![0.05, -0.1, 0.0];
        net.layers_mut()[1].weight = vec![1.0, -1.0, 0.5, 0.25, 0.75, -0.5];
        net.layers_mut()[1].bias = vec![0.2, -0.2];
        net
    }

    #[test]
    fn zero_net_outputs_zeros() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let (out, _) = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_identity_layer_passes_input_through() {
        let mut net = Mlp::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            net.layers_mut()[0].weight[i * 3 + i] = 1.0;
        }
        let input = [0.3, -1.2, 4.5];
        let (out, _) = net.forward(&input).unwrap();
        assert_eq!(out, input.to_vec());
    }

    #[test]
    fn forward_matches_hand_computation() {
        let net = hand_net_232();
        let x = [1.0, 2.0];
        // Hand arithmetic, independent of the implementation path.
        let h = [
            (0.5 * 1.0 - 0.25 * 2.0 + 0.05_f64).tanh(),
            (0.1 * 1.0 + 0.2 * 2.0 - 0.1_f64).tanh(),
            (-0.3 * 1.0 + 0.7 * 2.0 + 0.0_f64).tanh(),
        ];
        let expected = [
            1.0 * h[0] - 1.0 * h[1] + 0.5 * h[2] + 0.2,
            0.25 * h[0] + 0.75 * h[1] - 0.5 * h[2] - 0.2,
        ];
        let (out, _) = net.forward(&x).unwrap();
        for (o, e) in out.iter().zip(expected.iter()) {
            assert!((o - e).abs() < 1e-12, "got {o}, want {e}");
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NnError::DimMismatch { want: 3, got: 2 })
        ));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = hand_net_232();
        let (_, cache) = net.forward(&[0.4, -0.7]).unwrap();
        let (grads, input_grad) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(grads.is_zero());
        assert_eq!(input_grad, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_1x1_weight_gradient_is_input() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        net.layers_mut()[0].weight[0] = 3.0;
        let (_, cache) = net.forward(&[2.5]).unwrap();
        let (grads, _) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(grads.layers[0].weight[0], 2.5);
        assert_eq!(grads.layers[0].bias[0], 1.0);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let a = Mlp::zeros(&[2, 3, 2]).unwrap();
        let b = Mlp::zeros(&[2, 4, 2]).unwrap();
        let (_, cache) = a.forward(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            b.backward(&cache, &[1.0, 1.0]),
            Err(NnError::StaleCache { .. })
        ));
    }

    #[test]
    fn random_net_gradients_match_finite_differences() {
        // Loss: sum of squared outputs of a random 4-5-3 net; oracle is a
        // central finite difference over every parameter.
        let mut rng = SeedSplitter::new(991).stream("gradtest");
        let net = Mlp::glorot(&[4, 5, 3], &mut rng).unwrap();
        let input = [0.3, -0.8, 1.1, 0.05];

        let loss_of = |net: &Mlp| -> f64 {
            let (out, _) = net.forward(&input).unwrap();
            out.iter().map(|v| v * v).sum::<f64>() * 0.5
        };

        let (out, cache) = net.forward(&input).unwrap();
        let (grads, _) = net.backward(&cache, &out).unwrap();

        let mut flat_analytic = Vec::new();
        grads.write_params(&mut flat_analytic);
        let mut flat_params = Vec::new();
        net.write_params(&mut flat_params);

        let h = 1e-5;
        let mut max_rel = 0.0_f64;
        for i in 0..flat_params.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = flat_params.clone();
            p[i] += h;
            plus.read_params(&p).unwrap();
            p[i] -= 2.0 * h;
            minus.read_params(&p).unwrap();
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let a = flat_analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = SeedSplitter::new(5).stream("det");
        let net = Mlp::glorot(&[6, 8, 4], &mut rng).unwrap();
        let input: Vec<f64> = (0..6).map(|i| (i as f64) * 0.37 - 1.0).collect();
        let (a, _) = net.forward(&input).unwrap();
        let (b, _) = net.forward(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn glorot_weights_within_bound_and_biases_zero() {
        let mut rng = SeedSplitter::new(17).stream("init");
        let net = Mlp::glorot(&[10, 7], &mut rng).unwrap();
        let bound = Mlp::init_bound(10, 7);
        for w in &net.layers()[0].weight {
            assert!(w.abs() <= bound);
        }
        assert!(net.layers()[0].bias.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn param_roundtrip_preserves_values() {
        let mut rng = SeedSplitter::new(3).stream("roundtrip");
        let net = Mlp::glorot(&[3, 5, 2], &mut rng).unwrap();
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        let mut copy = Mlp::zeros(&[3, 5, 2]).unwrap();
        let consumed = copy.read_params(&flat).unwrap();
        assert_eq!(consumed, flat.len());
        assert_eq!(copy, net);
    }
}
