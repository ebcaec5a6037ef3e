//! Dense multi-layer perceptron with hand-rolled backpropagation.
//!
//! The output layer always emits raw logits; nonlinearities are applied to
//! hidden layers only. Losses and action selection apply softmax themselves,
//! so logits stay first-class throughout the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::num::{real, Real};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed in terms of the post-activation value, which is
    /// what the forward cache stores. For relu the sign of the output equals
    /// the sign of the pre-activation, so no extra cache is needed.
    #[inline]
    fn derivative_from_output<T: Real>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

/// Gradients of a scalar loss with respect to every parameter of one
/// [`MlpNet`], plus the gradient with respect to the network input (needed
/// when a critic is differentiated with respect to an action slot).
#[derive(Debug, Clone)]
pub struct GradientSet<T> {
    pub d_weights: Vec<Matrix<T>>,
    pub d_biases: Vec<Matrix<T>>,
    pub d_input: Matrix<T>,
}

impl<T: Real> GradientSet<T> {
    pub fn is_all_zero(&self) -> bool {
        let zero = |m: &Matrix<T>| m.as_slice().iter().all(|&v| v == T::zero());
        self.d_weights.iter().all(zero) && self.d_biases.iter().all(zero)
    }

    /// Flatten in the same order as [`MlpNet::params_flat`].
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    /// Global L2 norm over all parameter gradients (input gradient excluded).
    pub fn global_norm(&self) -> T {
        let mut acc = T::zero();
        for w in &self.d_weights {
            acc += w.frob_norm_sq();
        }
        for b in &self.d_biases {
            acc += b.frob_norm_sq();
        }
        acc.sqrt()
    }

    /// Scale all parameter gradients so the global norm is at most
    /// `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: T) {
        let norm = self.global_norm();
        if norm > max_norm && norm > T::zero() {
            let s = max_norm / norm;
            for w in &mut self.d_weights {
                *w = w.scale(s);
            }
            for b in &mut self.d_biases {
                *b = b.scale(s);
            }
        }
    }
}

/// Layered perceptron: weights, biases and the activation cache filled in by
/// [`MlpNet::forward`].
#[derive(Debug, Clone)]
pub struct MlpNet<T> {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix<T>>,
    biases: Vec<Matrix<T>>,
    activation: Activation,
    // cache[0] is the input, cache[k+1] the output of layer k (post
    // activation for hidden layers, raw logits for the last one).
    cache: Option<Vec<Matrix<T>>>,
}

impl<T: Real> MlpNet<T> {
    /// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
    /// Random draws happen in f64 so f32 and f64 nets built from the same
    /// seed see the same stream.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[k], layer_sizes[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| real::<T>(rng.random::<f64>() * 2.0 * limit - limit))
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push(Matrix::zeros(fan_out, 1));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
            cache: None,
        })
    }

    /// All-zero parameters; useful for tests and fixed baselines.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let weights = (0..layer_sizes.len() - 1)
            .map(|k| Matrix::zeros(layer_sizes[k + 1], layer_sizes[k]))
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|k| Matrix::zeros(layer_sizes[k + 1], 1))
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
            cache: None,
        })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Matrix<T>>,
        biases: Vec<Matrix<T>>,
        activation: Activation,
    ) -> Result<Self> {
        Self::validate_sizes(&layer_sizes)?;
        if weights.len() != layer_sizes.len() - 1 || biases.len() != weights.len() {
            return Err(Error::Dimension("layer count mismatch".into()));
        }
        for k in 0..weights.len() {
            let expect_w = (layer_sizes[k + 1], layer_sizes[k]);
            if weights[k].shape() != expect_w {
                return Err(Error::Dimension(format!(
                    "weight {k} has shape {:?}, expected {:?}",
                    weights[k].shape(),
                    expect_w
                )));
            }
            if biases[k].shape() != (layer_sizes[k + 1], 1) {
                return Err(Error::Dimension(format!("bias {k} shape")));
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation,
            cache: None,
        })
    }

    fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(
                "a network needs at least two nonzero layer sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, k: usize) -> &Matrix<T> {
        &self.weights[k]
    }

    pub fn bias(&self, k: usize) -> &Matrix<T> {
        &self.biases[k]
    }

    pub fn set_weight(&mut self, k: usize, w: Matrix<T>) -> Result<()> {
        if w.shape() != self.weights[k].shape() {
            return Err(Error::Dimension(format!("weight {k} shape")));
        }
        self.weights[k] = w;
        Ok(())
    }

    pub fn set_bias(&mut self, k: usize, b: Matrix<T>) -> Result<()> {
        if b.shape() != self.biases[k].shape() {
            return Err(Error::Dimension(format!("bias {k} shape")));
        }
        self.biases[k] = b;
        Ok(())
    }

    fn check_input(&self, input: &Matrix<T>) -> Result<()> {
        if input.rows() != self.in_dim() || input.cols() == 0 {
            return Err(Error::Dimension(format!(
                "input shape {:?} does not fit network input dim {} (batch must be >= 1)",
                input.shape(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    fn run_layers(&self, input: &Matrix<T>, mut sink: impl FnMut(&Matrix<T>)) -> Matrix<T> {
        let last = self.num_layers() - 1;
        let mut a = input.clone();
        sink(&a);
        for k in 0..self.num_layers() {
            let mut z = self.weights[k].matmul(&a).add_col_broadcast(&self.biases[k]);
            if k < last {
                z = z.map(|v| self.activation.apply(v));
            }
            sink(&z);
            a = z;
        }
        a
    }

    /// Forward pass over a batch of column vectors; caches activations for
    /// [`MlpNet::backward`] and returns the raw logits
    /// (out_dim x batch).
    pub fn forward(&mut self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        let mut cache = Vec::with_capacity(self.num_layers() + 1);
        let out = self.run_layers(input, |a| cache.push(a.clone()));
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without touching the cache. Used for frozen teachers,
    /// target networks and evaluation rollouts.
    pub fn eval(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        Ok(self.run_layers(input, |_| {}))
    }

    /// Backpropagate `d_logits` (the gradient of a scalar loss with respect
    /// to the logits of the most recent [`MlpNet::forward`] call).
    pub fn backward(&self, d_logits: &Matrix<T>) -> Result<GradientSet<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::State("backward called before forward populated the cache".into())
        })?;
        let logits = cache.last().unwrap();
        if d_logits.shape() != logits.shape() {
            return Err(Error::Dimension(format!(
                "output gradient shape {:?} does not match cached logits {:?}",
                d_logits.shape(),
                logits.shape()
            )));
        }

        let layers = self.num_layers();
        let mut d_weights = vec![Matrix::zeros(0, 0); layers];
        let mut d_biases = vec![Matrix::zeros(0, 0); layers];
        let mut delta = d_logits.clone();
        for k in (0..layers).rev() {
            let a_prev = &cache[k];
            d_weights[k] = delta.matmul_bt(a_prev);
            d_biases[k] = delta.row_sums();
            // Pull the gradient through layer k's input; apply the hidden
            // activation derivative except at the raw network input.
            let mut d_prev = self.weights[k].matmul_at(&delta);
            if k > 0 {
                d_prev = d_prev.zip(a_prev, |g, a| {
                    g * self.activation.derivative_from_output(a)
                });
            }
            delta = d_prev;
        }
        Ok(GradientSet {
            d_weights,
            d_biases,
            d_input: delta,
        })
    }

    /// Smallest |pre-activation| over all hidden units for this input. Used
    /// by gradient checks to reject inputs that sit on a relu kink.
    pub fn min_abs_preactivation(&self, input: &Matrix<T>) -> Result<T> {
        self.check_input(input)?;
        let last = self.num_layers() - 1;
        let mut a = input.clone();
        let mut min_abs = T::infinity();
        for k in 0..self.num_layers() {
            let z = self.weights[k].matmul(&a).add_col_broadcast(&self.biases[k]);
            if k < last {
                for &v in z.as_slice() {
                    min_abs = min_abs.min(v.abs());
                }
                a = z.map(|v| self.activation.apply(v));
            } else {
                a = z;
            }
        }
        Ok(min_abs)
    }

    /// Parameters flattened layer by layer (weights then bias per layer);
    /// the order matches [`GradientSet::flat`].
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.as_slice().len())
            .sum()
    }

    pub fn set_params_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for v in w.as_mut_slice() {
                *v = flat[off];
                off += 1;
            }
            for v in b.as_mut_slice() {
                *v = flat[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// Mutable references to every parameter matrix, weights and biases
    /// interleaved per layer. Optimizers walk this order.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Matrix<f64> {
        Matrix::column(values)
    }

    #[test]
    fn zero_net_produces_zero_logits() {
        let mut net = MlpNet::<f64>::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        let out = net.forward(&column(&[1.0, -2.0, 5.0])).unwrap();
        assert_eq!(out.shape(), (2, 1));
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut net = MlpNet::<f64>::zeros(&[2, 2], Activation::Relu).unwrap();
        net.set_weight(0, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap())
            .unwrap();
        let out = net.forward(&column(&[1.0, 2.0])).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0]);
    }

    // Straight-line re-evaluation of the affine/activation chain, written
    // independently of Matrix/MlpNet internals.
    fn straight_line_forward(net: &MlpNet<f64>, input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        let last = net.num_layers() - 1;
        for k in 0..net.num_layers() {
            let (rows, cols) = net.weight(k).shape();
            let mut z = vec![0.0; rows];
            for (i, zi) in z.iter_mut().enumerate() {
                let mut acc = net.bias(k).get(i, 0);
                for j in 0..cols {
                    acc += net.weight(k).get(i, j) * a[j];
                }
                *zi = acc;
            }
            if k < last {
                for v in &mut z {
                    *v = match net.activation() {
                        Activation::Relu => v.max(0.0),
                        Activation::Tanh => v.tanh(),
                    };
                }
            }
            a = z;
        }
        a
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        for activation in [Activation::Relu, Activation::Tanh] {
            let mut net = MlpNet::<f64>::new(&[4, 7, 5, 3], activation, 99).unwrap();
            let input = vec![0.3, -0.8, 1.4, 0.05];
            let got = net.forward(&column(&input)).unwrap();
            let want = straight_line_forward(&net, &input);
            for (g, w) in got.as_slice().iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let mut net = MlpNet::<f64>::new(&[3, 2], Activation::Tanh, 0).unwrap();
        assert!(matches!(
            net.forward(&column(&[1.0, 2.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let net = MlpNet::<f64>::new(&[3, 2], Activation::Tanh, 0).unwrap();
        assert!(matches!(
            net.backward(&Matrix::zeros(2, 1)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut net = MlpNet::<f64>::new(&[3, 4, 2], Activation::Tanh, 7).unwrap();
        net.forward(&column(&[0.1, 0.2, 0.3])).unwrap();
        let grads = net.backward(&Matrix::zeros(2, 1)).unwrap();
        assert!(grads.is_all_zero());
        assert!(grads.d_input.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_sum_loss_gradient_is_input_broadcast() {
        // Loss = sum of logits of a single linear layer: dW[i][j] = input[j].
        let mut net = MlpNet::<f64>::zeros(&[3, 2], Activation::Relu).unwrap();
        let input = [0.5, -1.5, 2.0];
        net.forward(&column(&input)).unwrap();
        let grads = net.backward(&Matrix::filled(2, 1, 1.0)).unwrap();
        for i in 0..2 {
            for (j, x) in input.iter().enumerate() {
                assert_eq!(grads.d_weights[0].get(i, j), *x);
            }
            assert_eq!(grads.d_biases[0].get(i, 0), 1.0);
        }
    }

    #[test]
    fn params_flat_round_trip() {
        let mut net = MlpNet::<f64>::new(&[3, 5, 2], Activation::Relu, 1).unwrap();
        let mut flat = net.params_flat();
        flat[7] = 42.0;
        net.set_params_flat(&flat).unwrap();
        assert_eq!(net.params_flat(), flat);
    }

    #[test]
    fn glorot_init_respects_limit() {
        let net = MlpNet::<f64>::new(&[10, 20, 5], Activation::Relu, 5).unwrap();
        for k in 0..net.num_layers() {
            let (fan_out, fan_in) = net.weight(k).shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(net.weight(k).as_slice().iter().all(|v| v.abs() <= limit));
            assert!(net.bias(k).as_slice().iter().all(|&v| v == 0.0));
        }
    }
}
