//! Minimal feed-forward network stack with analytic reverse-mode
//! gradients: multilayer perceptrons, a diagonal-Gaussian policy head,
//! and a scalar value head.
//!
//! Forward passes are batched matrix products; the backward pass walks
//! the cached pre-activations in reverse and returns gradients shaped
//! exactly like the parameters. Gradients accumulated over a batch are
//! sums, so callers differentiating a mean loss scale the upstream
//! gradient by 1/batch themselves.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Lower clamp for policy log standard deviations.
pub const LOG_STD_MIN: f64 = -5.0;
/// Upper clamp for policy log standard deviations.
pub const LOG_STD_MAX: f64 = 2.0;

/// Hidden-layer nonlinearity. The final layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Elu,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} columns, expected {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("upstream gradient has {got} columns, expected {expected}")]
    OutputDim { expected: usize, got: usize },
    #[error("cache does not match parameters: {0}")]
    StaleCache(String),
    #[error("bad network shape: {0}")]
    Shape(String),
    #[error("flat parameter vector has length {got}, expected {expected}")]
    FlatLen { expected: usize, got: usize },
}

/// Parameters of one multilayer perceptron. `weights[l]` has shape
/// (layer_dims[l+1], layer_dims[l]); layer `l` maps `a` to
/// `W_l a + b_l`, followed by the activation on all but the last layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

impl MlpParams {
    /// An all-zero network of the given shape.
    pub fn zeros(layer_dims: &[usize], activation: Activation) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::Shape(format!(
                "need at least input and output dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.iter().any(|d| *d == 0) {
            return Err(NnError::Shape(format!("zero-width layer in {layer_dims:?}")));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_dims[1..].iter().map(|d| Array1::zeros(*d)).collect();
        Ok(MlpParams { layer_dims: layer_dims.to_vec(), weights, biases, activation })
    }

    /// Orthogonal-style initialization: hidden layers use orthonormal
    /// rows or columns scaled by sqrt(2), the final layer is scaled by
    /// `final_scale`, and all biases start at zero.
    pub fn init(
        layer_dims: &[usize],
        activation: Activation,
        final_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, NnError> {
        let mut p = Self::zeros(layer_dims, activation)?;
        let last = p.weights.len() - 1;
        for (l, w) in p.weights.iter_mut().enumerate() {
            let gain = if l == last { final_scale } else { std::f64::consts::SQRT_2 };
            *w = orthogonal(w.nrows(), w.ncols(), gain, rng);
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// All parameters as one vector, layer by layer, each layer's weight
    /// matrix in row-major order followed by its bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    /// Overwrite all parameters from a flat vector laid out as
    /// [`Self::to_flat`] produces.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.n_params() {
            return Err(NnError::FlatLen { expected: self.n_params(), got: flat.len() });
        }
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for v in w.iter_mut() {
                *v = flat[i];
                i += 1;
            }
            for v in b.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        Ok(())
    }
}

/// A random matrix with orthonormal rows (or columns, whichever is the
/// smaller dimension), scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Array2<f64> {
    let k = rows.min(cols);
    let n = rows.max(cols);
    // Modified Gram-Schmidt on k random n-vectors.
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Array1<f64> =
            Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for u in &basis {
            let proj = v.dot(u);
            v.scaled_add(-proj, u);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    let mut w = Array2::zeros((rows, cols));
    if rows <= cols {
        for (i, u) in basis.iter().enumerate() {
            w.row_mut(i).assign(&(u * gain));
        }
    } else {
        for (j, u) in basis.iter().enumerate() {
            w.column_mut(j).assign(&(u * gain));
        }
    }
    w
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    pre_acts: Vec<Array2<f64>>,
    layer_dims: Vec<usize>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Gradients shaped exactly like the parameters they differentiate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Gradients {
            weights: p.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: p.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    /// Euclidean norm over every coordinate.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for w in &self.weights {
            sq += w.iter().map(|v| v * v).sum::<f64>();
        }
        for b in &self.biases {
            sq += b.iter().map(|v| v * v).sum::<f64>();
        }
        sq.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Run a batch of rows through the network. Returns the outputs (one row
/// per input row) and the cache the backward pass needs.
pub fn mlp_forward_batch(
    p: &MlpParams,
    x: &Array2<f64>,
) -> Result<(Array2<f64>, ForwardCache), NnError> {
    if x.ncols() != p.input_dim() {
        return Err(NnError::InputDim { expected: p.input_dim(), got: x.ncols() });
    }
    let n_layers = p.weights.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre_acts = Vec::with_capacity(n_layers);
    let mut a = x.clone();
    for l in 0..n_layers {
        let z = a.dot(&p.weights[l].t()) + &p.biases[l];
        inputs.push(a);
        a = if l + 1 < n_layers { z.mapv(|v| p.activation.apply(v)) } else { z.clone() };
        pre_acts.push(z);
    }
    let cache = ForwardCache { inputs, pre_acts, layer_dims: p.layer_dims.clone() };
    Ok((a, cache))
}

/// Single-row convenience wrapper around [`mlp_forward_batch`].
pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec())
        .map_err(|_| NnError::InputDim { expected: p.input_dim(), got: x.len() })?;
    let (y, cache) = mlp_forward_batch(p, &row)?;
    Ok((y.row(0).to_vec(), cache))
}

/// Reverse-mode pass. `dl_dy` is the loss gradient at the network output
/// (one row per cached input row); returns parameter gradients summed
/// over the batch and the loss gradient at the network input.
pub fn mlp_backward_batch(
    p: &MlpParams,
    cache: &ForwardCache,
    dl_dy: &Array2<f64>,
) -> Result<(Gradients, Array2<f64>), NnError> {
    if cache.layer_dims != p.layer_dims {
        return Err(NnError::StaleCache(format!(
            "cache built for dims {:?}, parameters have {:?}",
            cache.layer_dims, p.layer_dims
        )));
    }
    if dl_dy.ncols() != p.output_dim() {
        return Err(NnError::OutputDim { expected: p.output_dim(), got: dl_dy.ncols() });
    }
    if dl_dy.nrows() != cache.batch_size() {
        return Err(NnError::StaleCache(format!(
            "cache holds {} rows, upstream gradient has {}",
            cache.batch_size(),
            dl_dy.nrows()
        )));
    }
    let mut grads = Gradients::zeros_like(p);
    let mut delta = dl_dy.clone();
    for l in (0..p.weights.len()).rev() {
        grads.weights[l] = delta.t().dot(&cache.inputs[l]);
        grads.biases[l] = delta.sum_axis(Axis(0));
        let da = delta.dot(&p.weights[l]);
        if l == 0 {
            return Ok((grads, da));
        }
        let deriv = cache.pre_acts[l - 1].mapv(|z| p.activation.derivative(z));
        delta = da * &deriv;
    }
    unreachable!("loop returns at layer 0");
}

/// Single-row convenience wrapper around [`mlp_backward_batch`].
pub fn mlp_backward(
    p: &MlpParams,
    cache: &ForwardCache,
    dl_dy: &[f64],
) -> Result<(Gradients, Vec<f64>), NnError> {
    let row = Array2::from_shape_vec((1, dl_dy.len()), dl_dy.to_vec())
        .map_err(|_| NnError::OutputDim { expected: p.output_dim(), got: dl_dy.len() })?;
    let (grads, dx) = mlp_backward_batch(p, cache, &row)?;
    Ok((grads, dx.row(0).to_vec()))
}

/// Diagonal-Gaussian log-density of `action` around `mean`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -ls - half_ln_2pi - 0.5 * z * z
        })
        .sum()
}

/// Entropy of a diagonal Gaussian with the given log standard deviations.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    let half_ln_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    log_std.iter().map(|ls| half_ln_2pi_e + ls).sum()
}

/// Stochastic policy: a mean network plus state-independent log standard
/// deviations, clamped to [`LOG_STD_MIN`, `LOG_STD_MAX`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_net: MlpParams,
    pub log_std: Array1<f64>,
}

impl GaussianPolicy {
    /// Wrap a mean network; log standard deviations start at 0.
    pub fn new(mean_net: MlpParams) -> Self {
        let n = mean_net.output_dim();
        GaussianPolicy { mean_net, log_std: Array1::zeros(n) }
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    /// Re-impose the log-std clamp; call after every parameter update.
    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    /// Deterministic action: the mean-network output.
    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(mlp_forward(&self.mean_net, obs)?.0)
    }

    /// Batched mean evaluation with the cache for gradient work.
    pub fn mean_batch(
        &self,
        obs: &Array2<f64>,
    ) -> Result<(Array2<f64>, ForwardCache), NnError> {
        mlp_forward_batch(&self.mean_net, obs)
    }

    /// Draw an action and return it with its exact log-density.
    pub fn sample(
        &self,
        obs: &[f64],
        rng: &mut impl Rng,
    ) -> Result<(Vec<f64>, f64), NnError> {
        let mean = self.mean(obs)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(self.log_std.iter())
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&mean, self.log_std.as_slice().unwrap(), &action);
        Ok((action, lp))
    }

    /// Log-density of a given action plus the (state-independent)
    /// entropy.
    pub fn log_prob_entropy(
        &self,
        obs: &[f64],
        action: &[f64],
    ) -> Result<(f64, f64), NnError> {
        let mean = self.mean(obs)?;
        let lp = gaussian_log_prob(&mean, self.log_std.as_slice().unwrap(), action);
        Ok((lp, self.entropy()))
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(self.log_std.as_slice().unwrap())
    }
}

/// Scalar state-value network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub net: MlpParams,
}

impl ValueNet {
    pub fn new(net: MlpParams) -> Result<Self, NnError> {
        if net.output_dim() != 1 {
            return Err(NnError::Shape(format!(
                "value net must output one scalar, got {}",
                net.output_dim()
            )));
        }
        Ok(ValueNet { net })
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, NnError> {
        Ok(mlp_forward(&self.net, obs)?.0[0])
    }

    /// Batched values with the cache for gradient work.
    pub fn value_batch(
        &self,
        obs: &Array2<f64>,
    ) -> Result<(Array1<f64>, ForwardCache), NnError> {
        let (y, cache) = mlp_forward_batch(&self.net, obs)?;
        Ok((y.column(0).to_owned(), cache))
    }
}

/// Default actor: [obs -> 256 -> 128 -> action] with tanh hidden layers
/// and a down-scaled final layer so early actions stay near zero.
pub fn default_policy(obs_dim: usize, action_dim: usize, rng: &mut impl Rng) -> GaussianPolicy {
    let net = MlpParams::init(&[obs_dim, 256, 128, action_dim], Activation::Tanh, 0.01, rng)
        .expect("static shape");
    GaussianPolicy::new(net)
}

/// Default critic: [input -> 256 -> 128 -> 1] with tanh hidden layers.
pub fn default_value(input_dim: usize, rng: &mut impl Rng) -> ValueNet {
    let net = MlpParams::init(&[input_dim, 256, 128, 1], Activation::Tanh, 1.0, rng)
        .expect("static shape");
    ValueNet::new(net).expect("static shape")
}
