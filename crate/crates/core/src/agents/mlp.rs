use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};

/// Fully connected network with ReLU hidden layers and a linear output.
///
/// All parameters live in one flat vector; layer `l` stores its weights
/// row-major (`out × in`) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` is the output of
    /// layer `l` after its nonlinearity.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations
            .last()
            .expect("cache holds at least the input")
    }
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        ensure!(
            sizes.len() >= 2,
            "network needs at least an input and an output layer"
        );
        ensure!(
            sizes.iter().all(|&n| n > 0),
            "layer sizes must be positive: {sizes:?}"
        );
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        offsets.push(total);
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; total],
            offsets,
        })
    }

    /// He-initialized weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        for l in 0..net.n_layers() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let scale = (2.0 / n_in as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + n_in * n_out] {
                *w = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        ensure!(
            params.len() == net.params.len(),
            "expected {} parameters for layers {sizes:?}, got {}",
            net.params.len(),
            params.len()
        );
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        let (w, rest) = self.params[off..self.offsets[l + 1]].split_at(n_in * n_out);
        (w, rest)
    }

    fn affine(&self, l: usize, x: &[f64], relu: bool) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let n_in = self.sizes[l];
        b.iter()
            .enumerate()
            .map(|(j, bj)| {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = bj + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if relu {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            input.len() == self.input_dim(),
            "input has {} dims, network expects {}",
            input.len(),
            self.input_dim()
        );
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            x = self.affine(l, &x, l + 1 < self.n_layers());
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        ensure!(
            input.len() == self.input_dim(),
            "input has {} dims, network expects {}",
            input.len(),
            self.input_dim()
        );
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        for l in 0..self.n_layers() {
            let next = self.affine(l, &activations[l], l + 1 < self.n_layers());
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Accumulates `∂(upstream · output)/∂θ` into `grad`, which must have
    /// [`Mlp::n_params`] entries.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        ensure!(
            upstream.len() == self.output_dim(),
            "upstream gradient has {} dims, network outputs {}",
            upstream.len(),
            self.output_dim()
        );
        ensure!(
            grad.len() == self.params.len(),
            "gradient buffer has the wrong length"
        );
        let mut delta = upstream.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &cache.activations[l];
            let off = self.offsets[l];
            let (gw, gb) = grad[off..self.offsets[l + 1]].split_at_mut(n_in * n_out);
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                for (g, xi) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let below = &cache.activations[l];
            let mut next = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                for (nx, wji) in next.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *nx += d * wji;
                }
            }
            // ReLU derivative, taken as 0 at the kink.
            for (nx, a) in next.iter_mut().zip(below) {
                if *a <= 0.0 {
                    *nx = 0.0;
                }
            }
            delta = next;
        }
        Ok(())
    }

    /// Gradient of the squared error `(target − Q_k(x))²` with respect to the
    /// parameters, where `Q_k` is output `k`. Returns the error `Q_k − target`.
    pub fn td_gradient(
        &self,
        input: &[f64],
        output: usize,
        target: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        ensure!(
            output < self.output_dim(),
            "output index {output} out of range"
        );
        let cache = self.forward_cached(input)?;
        let err = cache.output()[output] - target;
        let mut up = vec![0.0; self.output_dim()];
        up[output] = 2.0 * err;
        self.backward(&cache, &up, grad)?;
        Ok(err)
    }

    /// `θ ← θ − lr · g`, with `g` rescaled to norm `clip` when larger.
    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64, clip: Option<f64>) -> Result<()> {
        ensure!(
            grad.len() == self.params.len(),
            "gradient buffer has the wrong length"
        );
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = match clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= learning_rate * scale * g;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}
