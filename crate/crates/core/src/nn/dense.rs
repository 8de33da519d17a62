//! Fully connected networks with tanh hidden layers and a linear output.
//!
//! All parameters live in one flat buffer laid out layer by layer: the
//! `fan_in x fan_out` weight matrix in row-major order followed by the bias
//! vector. Optimizers and checkpoints work directly on that buffer.

use rand::Rng;

use crate::error::{check_dim, CanError, Result};

/// Width used for both hidden layers of every network in the framework.
pub const CRITIC_OUTPUT_GAIN: f64 = 0.01;

pub const HIDDEN_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    /// Start of each layer's weight block; its bias block follows immediately.
    offsets: Vec<usize>,
}

/// Activations retained from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    batch: usize,
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
}

impl BatchTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn layout(layer_sizes: &[usize]) -> Result<(Vec<usize>, usize)> {
    if layer_sizes.len() < 2 {
        return Err(CanError::Config(
            "a network needs at least an input and an output size".into(),
        ));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(CanError::Config("layer sizes must be positive".into()));
    }
    let mut offsets = Vec::with_capacity(layer_sizes.len() - 1);
    let mut total = 0;
    for pair in layer_sizes.windows(2) {
        offsets.push(total);
        total += (pair[0] + 1) * pair[1];
    }
    Ok((offsets, total))
}

impl DenseNet {
    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        let (offsets, total) = layout(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; total],
            offsets,
        })
    }

    /// Scaled-uniform init: each weight is drawn from `U(-a, a)` with
    /// `a = gain * sqrt(3 / fan_in)`, which gives unit-gain variance
    /// preservation for `gain = 1`. The last layer uses `output_gain`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (fan_in, fan_out) = net.layer_shape(l);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let limit = gain * (3.0 / fan_in as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = if limit > 0.0 {
                    rng.random_range(-limit..limit)
                } else {
                    0.0
                };
            }
        }
        Ok(net)
    }

    /// Two hidden layers of [`HIDDEN_WIDTH`] units.
    pub fn three_layer<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(
            &[input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, output_dim],
            1.0,
            output_gain,
            rng,
        )
    }

    /// Scalar critic starting near zero, so untrained value estimates do not
    /// leak into advantages through bootstrapping.
    pub fn critic<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Result<Self> {
        Self::three_layer(input_dim, 1, CRITIC_OUTPUT_GAIN, rng)
    }

    /// Builds a network from per-layer weight matrices (`fan_in` rows of
    /// `fan_out` entries) and bias vectors.
    pub fn from_parts(
        layer_sizes: &[usize],
        weights: &[Vec<Vec<f64>>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        check_dim("weight layers", net.num_layers(), weights.len())?;
        check_dim("bias layers", net.num_layers(), biases.len())?;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = net.layer_shape(l);
            check_dim("weight rows", fan_in, weights[l].len())?;
            check_dim("bias length", fan_out, biases[l].len())?;
            let start = net.offsets[l];
            for (i, row) in weights[l].iter().enumerate() {
                check_dim("weight columns", fan_out, row.len())?;
                net.params[start + i * fan_out..start + (i + 1) * fan_out].copy_from_slice(row);
            }
            let b = start + fan_in * fan_out;
            net.params[b..b + fan_out].copy_from_slice(&biases[l]);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn layer_shape(&self, layer: usize) -> (usize, usize) {
        (self.layer_sizes[layer], self.layer_sizes[layer + 1])
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("layout guarantees two sizes")
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

    /// Row-major `fan_in x fan_out` weights of one layer.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let (fan_in, fan_out) = self.layer_shape(layer);
        let start = self.offsets[layer];
        &self.params[start..start + fan_in * fan_out]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (fan_in, fan_out) = self.layer_shape(layer);
        let start = self.offsets[layer] + fan_in * fan_out;
        &self.params[start..start + fan_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (fan_in, fan_out) = self.layer_shape(layer);
        let start = self.offsets[layer] + fan_in * fan_out;
        &mut self.params[start..start + fan_out]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let (fan_in, fan_out) = self.layer_shape(layer);
        let start = self.offsets[layer];
        &mut self.params[start..start + fan_in * fan_out]
    }

    /// Weight matrices as nested rows, for serialization.
    pub fn weight_rows(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_layers())
            .map(|l| {
                let (_, fan_out) = self.layer_shape(l);
                self.weights(l).chunks(fan_out).map(<[f64]>::to_vec).collect()
            })
            .collect()
    }

    pub fn bias_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.num_layers()).map(|l| self.bias(l).to_vec()).collect()
    }

    /// Single-sample evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), input.len())?;
        let layers = self.num_layers();
        let mut x = input.to_vec();
        for l in 0..layers {
            let (_, fan_out) = self.layer_shape(l);
            let mut y = self.bias(l).to_vec();
            for (xi, row) in x.iter().zip(self.weights(l).chunks_exact(fan_out)) {
                for (yj, wij) in y.iter_mut().zip(row) {
                    *yj += xi * wij;
                }
            }
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = y;
        }
        Ok(x)
    }

    /// Gradients of `output . upstream_grad` with respect to every parameter
    /// (flat layout matching [`DenseNet::params`]) and to the input.
    pub fn backward(&self, input: &[f64], upstream_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_batch(input, 1)?;
        let mut grads = vec![0.0; self.param_count()];
        let input_grad = self.backward_batch(&trace, upstream_grad, &mut grads, true)?;
        Ok((grads, input_grad.unwrap_or_default()))
    }

    /// Evaluates `batch` row-major inputs at once.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<BatchTrace> {
        check_dim("batched network input", batch * self.input_dim(), inputs.len())?;
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(inputs.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = self.layer_shape(l);
            let bias = self.bias(l);
            let mut out = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            gemm(
                batch,
                fan_in,
                fan_out,
                (&activations[l], fan_in as isize, 1),
                (self.weights(l), fan_out as isize, 1),
                1.0,
                &mut out,
            );
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(out);
        }
        Ok(BatchTrace { batch, activations })
    }

    /// Accumulates parameter gradients of `sum_b output_b . upstream_b` into
    /// `grads`; returns the input gradient when requested.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        upstream: &[f64],
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let batch = trace.batch;
        check_dim("upstream gradient", batch * self.output_dim(), upstream.len())?;
        check_dim("gradient buffer", self.param_count(), grads.len())?;
        let layers = self.num_layers();
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = self.layer_shape(l);
            let x = &trace.activations[l];
            let start = self.offsets[l];
            let (w_grad, rest) = grads[start..].split_at_mut(fan_in * fan_out);
            // dW += X^T . delta
            gemm(
                fan_in,
                batch,
                fan_out,
                (x, 1, fan_in as isize),
                (&delta, fan_out as isize, 1),
                1.0,
                w_grad,
            );
            let b_grad = &mut rest[..fan_out];
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in b_grad.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            // dX = delta . W^T
            let mut dx = vec![0.0; batch * fan_in];
            gemm(
                batch,
                fan_out,
                fan_in,
                (&delta, fan_out as isize, 1),
                (self.weights(l), 1, fan_out as isize),
                0.0,
                &mut dx,
            );
            if l > 0 {
                for (d, h) in dx.iter_mut().zip(x) {
                    *d *= 1.0 - h * h;
                }
            }
            delta = dx;
        }
        Ok(Some(delta))
    }
}

/// `c = a . b + beta * c` for row/column-strided operands.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    assert!(m == 0 || k == 0 || a.0.len() >= max_index(m, k, a.1, a.2));
    assert!(k == 0 || n == 0 || b.0.len() >= max_index(k, n, b.1, b.2));
    // SAFETY: the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn max_index(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}
