use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// Layer widths from input to output. Hidden activations are always ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        ensure!(
            layer_sizes.len() >= 2,
            Config,
            "an MLP needs at least an input and an output size, got {:?}",
            layer_sizes
        );
        ensure!(
            layer_sizes.iter().all(|&s| s >= 1),
            Config,
            "all layer sizes must be >= 1, got {:?}",
            layer_sizes
        );
        Ok(Self {
            layer_sizes,
            output_activation,
        })
    }

    /// `input -> hidden x depth -> output`, i.e. `depth + 1` linear layers.
    pub fn with_hidden(
        input: usize,
        hidden: usize,
        depth: usize,
        output: usize,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(output);
        Self::new(sizes, output_activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of linear (weight + bias) layers.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// One affine layer. `weight` is `fan_in x fan_out` so that a batch maps as `X W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of every layer, plus a version counter that the
/// optimizer bumps on each update. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub layers: Vec<Linear>,
    pub version: u64,
}

impl ParameterSet {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Linear {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers, version: 0 }
    }

    /// Orthogonal weights scaled by `hidden_gain` (all but the last layer) and
    /// `output_gain` (last layer); zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(spec: &MlpSpec, hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        let last = params.layers.len() - 1;
        for (i, layer) in params.layers.iter_mut().enumerate() {
            let gain = if i == last { output_gain } else { hidden_gain };
            let (rows, cols) = layer.weight.dim();
            layer.weight = orthogonal_matrix(rows, cols, rng) * gain;
        }
        params
    }

    pub fn check_shapes(&self, spec: &MlpSpec) -> Result<()> {
        ensure!(
            self.layers.len() == spec.num_layers(),
            Contract,
            "parameter set has {} layers, spec expects {}",
            self.layers.len(),
            spec.num_layers()
        );
        for (i, (layer, w)) in self.layers.iter().zip(spec.layer_sizes.windows(2)).enumerate() {
            ensure!(
                layer.weight.dim() == (w[0], w[1]) && layer.bias.len() == w[1],
                Contract,
                "layer {} has weight {:?} / bias {}, spec expects ({}, {})",
                i,
                layer.weight.dim(),
                layer.bias.len(),
                w[0],
                w[1]
            );
        }
        Ok(())
    }

    /// Parameter blocks in a fixed order: weight 0, bias 0, weight 1, ...
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks().flat_map(|b| b.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Rescales in place so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn add_assign(&mut self, other: &ParameterSet) {
        for (a, b) in self.blocks_mut().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Semi-orthogonal `rows x cols` matrix from Gram-Schmidt on a Gaussian draw.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    // Orthonormalize the shorter dimension's vectors.
    let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            vecs.push(v);
        }
    }
    let mut m = Array2::zeros((rows, cols));
    for (k, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if rows >= cols {
                m[[j, k]] = x;
            } else {
                m[[k, j]] = x;
            }
        }
    }
    m
}

/// Intermediate values of a forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each linear layer (layer 0 gets the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each linear layer.
    pre: Vec<Array2<f64>>,
    version: u64,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParameterSet,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: ParameterSet) -> Result<Self> {
        params.check_shapes(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = ParameterSet::zeros(&spec);
        Self { spec, params }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Contract(e.to_string()))?;
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(input)?;
        let n = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input.to_owned();
        for (i, layer) in self.params.layers.iter().enumerate() {
            let z = x.dot(&layer.weight) + &layer.bias;
            let a = if i + 1 < n { z.mapv(relu) } else { self.output_map(&z) };
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        let cache = ForwardCache {
            inputs,
            pre,
            version: self.params.version,
        };
        Ok((x, cache))
    }

    /// Forward pass without retaining a cache.
    pub fn predict_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input)?;
        let n = self.params.layers.len();
        let mut x = input.to_owned();
        for (i, layer) in self.params.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight);
            z += &layer.bias;
            x = if i + 1 < n {
                z.mapv_into(relu)
            } else {
                self.output_map(&z)
            };
        }
        Ok(x)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Gradient of `sum(output * output_grad)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<ParameterSet> {
        let n = self.params.layers.len();
        ensure!(
            cache.version == self.params.version && cache.pre.len() == n,
            Contract,
            "forward cache (version {}) does not match parameters (version {})",
            cache.version,
            self.params.version
        );
        ensure!(
            output_grad.dim() == cache.pre[n - 1].dim(),
            Contract,
            "output gradient shape {:?} does not match output shape {:?}",
            output_grad.dim(),
            cache.pre[n - 1].dim()
        );

        let mut grads = ParameterSet::zeros(&self.spec);
        grads.version = self.params.version;

        let mut delta = match self.spec.output_activation {
            OutputActivation::Identity => output_grad.to_owned(),
            OutputActivation::Tanh => {
                let mut d = output_grad.to_owned();
                d.zip_mut_with(&cache.pre[n - 1], |g, &z| {
                    let t = z.tanh();
                    *g *= 1.0 - t * t;
                });
                d
            }
        };

        for i in (0..n).rev() {
            let layer = &self.params.layers[i];
            let g = &mut grads.layers[i];
            g.weight.assign(&cache.inputs[i].t().dot(&delta));
            g.bias.assign(&delta.sum_axis(Axis(0)));
            if i > 0 {
                let mut prev = delta.dot(&layer.weight.t());
                // ReLU subgradient is 0 at exactly 0.
                prev.zip_mut_with(&cache.pre[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        Ok(grads)
    }

    fn check_input(&self, input: ArrayView2<f64>) -> Result<()> {
        ensure!(
            input.ncols() == self.spec.input_dim(),
            Contract,
            "input width {} does not match network input size {}",
            input.ncols(),
            self.spec.input_dim()
        );
        Ok(())
    }

    fn output_map(&self, z: &Array2<f64>) -> Array2<f64> {
        match self.spec.output_activation {
            OutputActivation::Identity => z.clone(),
            OutputActivation::Tanh => z.mapv(f64::tanh),
        }
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
