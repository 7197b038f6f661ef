use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }
}

/// One affine layer. `weight` is `out x in`, so `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.len() == other.bias.len()
    }
}

/// Feed-forward network: tanh on hidden layers, a chosen activation on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output_activation: Activation,
}

/// Per-layer activations saved by a forward pass: `activations[0]` is the
/// input batch and `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Gradients of a scalar loss. Parameter gradients are summed over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<Dense>,
    pub input: Array2<f64>,
}

impl GradBundle {
    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weight.iter().map(|g| g * g).sum::<f64>() + l.bias.iter().map(|g| g * g).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales parameter gradients so their global norm is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            let k = max_norm / norm;
            for l in &mut self.layers {
                l.weight *= k;
                l.bias *= k;
            }
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.input.iter().all(|v| v.is_finite())
    }
}

impl Mlp {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    /// Weights are drawn layer by layer in row-major order.
    pub fn init(layer_sizes: &[usize], output_activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(
                "layer_sizes",
                format!("need at least 2 sizes, got {}", layer_sizes.len()),
            ));
        }
        if let Some(i) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::config(format!("layer_sizes[{i}]"), "must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            output_activation,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, output_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.nrows() != l.bias.len() {
                return Err(Error::contract(format!(
                    "layer {i}: weight has {} rows but bias has {} entries",
                    l.weight.nrows(),
                    l.bias.len()
                )));
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(Error::contract(format!(
                    "layer {i}: expects {} inputs, previous layer emits {}",
                    l.weight.ncols(),
                    layers[i - 1].weight.nrows()
                )));
            }
        }
        Ok(Mlp {
            layers,
            output_activation,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.nrows()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::contract(format!(
                "network expects {} inputs, got {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        let (y, cache) = self.forward_batch(x)?;
        Ok((y.into_raw_vec_and_offset().0, cache))
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(input.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weight.t());
            z += &layer.bias;
            self.activation_of(i).apply(&mut z);
            activations.push(z);
        }
        let output = activations.last().expect("non-empty").clone();
        Ok((output, ForwardCache { activations }))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            self.activation_of(i).apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    fn check_cache(&self, cache: &ForwardCache, output_grad: &ArrayView2<'_, f64>) -> Result<()> {
        let sizes = self.sizes();
        let matches = cache.activations.len() == sizes.len()
            && cache
                .activations
                .iter()
                .zip(&sizes)
                .all(|(a, &s)| a.ncols() == s && a.nrows() == output_grad.nrows());
        if !matches {
            return Err(Error::contract("forward cache does not belong to this network"));
        }
        if output_grad.dim() != cache.output().dim() {
            return Err(Error::contract(format!(
                "output gradient shape {:?} does not match output {:?}",
                output_grad.dim(),
                cache.output().dim()
            )));
        }
        Ok(())
    }

    /// Pulls `d` back through the activation of layer `l`.
    fn through_activation(&self, l: usize, d: &mut Array2<f64>, out: &Array2<f64>) {
        if self.activation_of(l) == Activation::Tanh {
            Zip::from(d).and(out).for_each(|g, &y| *g *= 1.0 - y * y);
        }
    }

    /// Reverse-mode gradients of `sum(output_grad * output)` with respect to
    /// every parameter and to the input.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<'_, f64>) -> Result<GradBundle> {
        self.backward_impl(cache, output_grad, None)
    }

    /// Pre-activation of the output layer, recomputed from `cache`.
    pub fn output_preactivation(&self, cache: &ForwardCache) -> Result<Array2<f64>> {
        let last = self.layers.len() - 1;
        let input = cache
            .activations
            .get(last)
            .filter(|a| a.ncols() == self.layers[last].weight.ncols())
            .ok_or_else(|| Error::contract("forward cache does not belong to this network"))?;
        let mut z = input.dot(&self.layers[last].weight.t());
        z += &self.layers[last].bias;
        Ok(z)
    }

    /// As [`Mlp::backward`], with `preactivation_grad` added to the gradient
    /// of the output layer's pre-activation, i.e. the gradient of
    /// `sum(output_grad * output) + sum(preactivation_grad * z_out)`.
    pub fn backward_with_preactivation(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
        preactivation_grad: ArrayView2<'_, f64>,
    ) -> Result<GradBundle> {
        if preactivation_grad.dim() != output_grad.dim() {
            return Err(Error::contract("pre-activation gradient shape differs from the output"));
        }
        self.backward_impl(cache, output_grad, Some(preactivation_grad))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
        preactivation_grad: Option<ArrayView2<'_, f64>>,
    ) -> Result<GradBundle> {
        self.check_cache(cache, &output_grad)?;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut d = output_grad.to_owned();
        for l in (0..self.layers.len()).rev() {
            self.through_activation(l, &mut d, &cache.activations[l + 1]);
            if l + 1 == self.layers.len() {
                if let Some(extra) = preactivation_grad {
                    d += &extra;
                }
            }
            grads.push(Dense {
                weight: d.t().dot(&cache.activations[l]),
                bias: d.sum_axis(Axis(0)),
            });
            d = d.dot(&self.layers[l].weight);
        }
        grads.reverse();
        Ok(GradBundle {
            layers: grads,
            input: d,
        })
    }

    /// Input gradient only; skips the parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, output_grad: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_cache(cache, &output_grad)?;
        let mut d = output_grad.to_owned();
        for l in (0..self.layers.len()).rev() {
            self.through_activation(l, &mut d, &cache.activations[l + 1]);
            d = d.dot(&self.layers[l].weight);
        }
        Ok(d)
    }

    /// Zero gradients with this network's shape.
    pub fn zero_grads(&self, batch: usize) -> GradBundle {
        GradBundle {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            input: Array2::zeros((batch, self.input_dim())),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Visits every parameter in checkpoint order: per layer, weights
    /// row-major then biases.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// `target = (1 - tau) * target + tau * source`, elementwise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::contract(format!("tau must lie in [0, 1], got {tau}")));
    }
    if !target.same_shape(source) {
        return Err(Error::contract("soft update between networks of different shape"));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weight)
            .and(&s.weight)
            .for_each(|t, &s| *t = *t * (1.0 - tau) + s * tau);
        Zip::from(&mut t.bias)
            .and(&s.bias)
            .for_each(|t, &s| *t = *t * (1.0 - tau) + s * tau);
    }
    Ok(())
}
