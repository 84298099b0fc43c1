//! Dense feed-forward networks with hand-written reverse mode and Adam.
//!
//! Batches are row-per-sample: an input batch has shape `(batch, layer_sizes[0])`.
//! Layer `l` holds a weight matrix of shape `(layer_sizes[l + 1], layer_sizes[l])`
//! and a bias of length `layer_sizes[l + 1]`. Hidden layers apply the configured
//! activation, the output layer is affine.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    activation: Activation,
}

/// Gradients (or any other tensor set) shaped like an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer values retained by [`MlpParams::forward`] for the backward pass.
///
/// `activations[0]` is the input batch and `activations[l + 1]` the output of
/// layer `l`; `pre_activations[l]` is the affine output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

fn validate_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "an MLP needs at least 2 layer sizes, got {}",
            layer_sizes.len()
        )));
    }
    if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!("layer size at position {pos} must be positive")));
    }
    Ok(())
}

impl MlpParams {
    /// Glorot-normal weights (variance `2 / (fan_in + fan_out)`) and zero biases.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let mut rng = rng_from_seed(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite positive std");
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                normal.sample(&mut rng)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Assemble parameters from explicit tensors, validating every shape.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::invalid("weights and biases must be non-empty and equally long"));
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *layer_sizes.last().unwrap() {
                return Err(Error::shape("MlpParams::from_parts", layer_sizes[l], w.ncols()));
            }
            if b.len() != w.nrows() {
                return Err(Error::shape("MlpParams::from_parts bias", w.nrows(), b.len()));
            }
            layer_sizes.push(w.nrows());
        }
        validate_layer_sizes(&layer_sizes)?;
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation,
        })
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

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Forward pass keeping the intermediate values needed by [`Self::backward`].
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("mlp_forward input width", self.input_dim(), x.ncols()));
        }
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        activations.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].dot(&w.t());
            z += b;
            let a = if l == last {
                z.clone()
            } else {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            };
            pre_activations.push(z);
            activations.push(a);
        }
        let y = activations.last().unwrap().clone();
        Ok((
            y,
            ForwardCache {
                activations,
                pre_activations,
            },
        ))
    }

    /// Forward pass without retaining intermediates.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("mlp_forward input width", self.input_dim(), x.ncols()));
        }
        let last = self.num_layers() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            if l != last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Reverse-mode gradients of a scalar loss whose gradient w.r.t. the
    /// network output is `dl_dy`. Returns the parameter gradients and the
    /// gradient w.r.t. the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dl_dy: ArrayView2<'_, f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        if cache.activations.len() != self.num_layers() + 1
            || cache.pre_activations.len() != self.num_layers()
        {
            return Err(Error::shape(
                "mlp_backward cache depth",
                self.num_layers(),
                cache.pre_activations.len(),
            ));
        }
        let batch = cache.batch_size();
        if dl_dy.dim() != (batch, self.output_dim()) {
            return Err(Error::shape(
                "mlp_backward output gradient",
                format!("({batch}, {})", self.output_dim()),
                format!("{:?}", dl_dy.dim()),
            ));
        }
        for (l, a) in cache.activations.iter().enumerate() {
            if a.dim() != (batch, self.layer_sizes[l]) {
                return Err(Error::shape(
                    "mlp_backward cached activation",
                    format!("({batch}, {})", self.layer_sizes[l]),
                    format!("{:?}", a.dim()),
                ));
            }
        }

        let n = self.num_layers();
        let mut grad_w = Vec::with_capacity(n);
        let mut grad_b = Vec::with_capacity(n);
        let mut delta = dl_dy.to_owned();
        for l in (0..n).rev() {
            grad_w.push(delta.t().dot(&cache.activations[l]));
            grad_b.push(delta.sum_axis(Axis(0)));
            let mut upstream = delta.dot(&self.weights[l]);
            if l > 0 {
                let act = self.activation;
                Zip::from(&mut upstream)
                    .and(&cache.pre_activations[l - 1])
                    .and(&cache.activations[l])
                    .for_each(|g, &z, &a| *g *= act.derivative(z, a));
            }
            delta = upstream;
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok((
            MlpGrads {
                weights: grad_w,
                biases: grad_b,
            },
            delta,
        ))
    }

    /// Copy every parameter into a flat vector (weights row-major, then bias, per layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    /// Overwrite every parameter from a flat vector produced by [`Self::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("MlpParams::set_flat", self.num_params(), flat.len()));
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    fn matches(&self, params: &MlpParams) -> bool {
        self.weights.len() == params.weights.len()
            && self
                .weights
                .iter()
                .zip(&params.weights)
                .all(|(g, w)| g.dim() == w.dim())
            && self
                .biases
                .iter()
                .zip(&params.biases)
                .all(|(g, b)| g.len() == b.len())
    }
}

/// Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: MlpGrads,
    pub v: MlpGrads,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(params: &MlpParams) -> Self {
        Self::with_hyperparams(
            params,
            Self::DEFAULT_BETA1,
            Self::DEFAULT_BETA2,
            Self::DEFAULT_EPSILON,
        )
    }

    pub fn with_hyperparams(params: &MlpParams, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step: 0,
            beta1,
            beta2,
            epsilon,
            m: MlpGrads::zeros_like(params),
            v: MlpGrads::zeros_like(params),
        }
    }

    /// One bias-corrected Adam update. Non-finite gradients leave both the
    /// state and the parameters untouched and return [`Error::Divergence`].
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !grads.matches(params) || !self.m.matches(params) {
            return Err(Error::shape(
                "adam_step",
                format!("{:?}", params.layer_sizes()),
                "gradient or moment tensors of a different shape",
            ));
        }
        if !grads.all_finite() {
            return Err(Error::Divergence("non-finite gradient rejected by adam_step".into()));
        }

        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..params.weights.len() {
            Zip::from(&mut params.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            Zip::from(&mut params.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::Rng;

    #[test]
    fn init_shapes_and_determinism() {
        let p = MlpParams::init(&[2, 8, 1], Activation::Tanh, 7).unwrap();
        assert_eq!(p.weights[0].dim(), (8, 2));
        assert_eq!(p.weights[1].dim(), (1, 8));
        assert_eq!(p.biases[0].len(), 8);
        assert_eq!(p.biases[1].len(), 1);
        assert!(p.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let q = MlpParams::init(&[2, 8, 1], Activation::Tanh, 7).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(MlpParams::init(&[], Activation::Tanh, 0).is_err());
        assert!(MlpParams::init(&[3], Activation::Tanh, 0).is_err());
        assert!(MlpParams::init(&[3, 0, 1], Activation::Tanh, 0).is_err());
    }

    #[test]
    fn glorot_variance() {
        // 64x64 layer, repeated over seeds until ~1e5 entries are collected.
        let mut samples = Vec::new();
        let mut seed = 0;
        while samples.len() < 100_000 {
            let p = MlpParams::init(&[64, 64], Activation::Tanh, seed).unwrap();
            samples.extend(p.weights[0].iter().copied());
            seed += 1;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 2.0 / 128.0;
        assert!((var - expected).abs() / expected < 0.1, "var {var} vs {expected}");
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut p = MlpParams::init(&[3, 5, 2], Activation::Tanh, 1).unwrap();
        p.weights.iter_mut().for_each(|w| w.fill(0.0));
        p.biases[1] = array![0.5, -1.25];
        let x = Array::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 - 2.0);
        let y = p.predict(x.view()).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -1.25]);
        }
    }

    #[test]
    fn identity_single_layer() {
        let p = MlpParams::from_parts(
            vec![Array2::eye(3)],
            vec![Array1::zeros(3)],
            Activation::Tanh,
        )
        .unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.25, 0.0, -7.0]];
        let (y, _) = p.forward(x.view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = MlpParams::init(&[3, 4, 1], Activation::Tanh, 0).unwrap();
        assert!(matches!(
            p.forward(Array2::zeros((2, 2)).view()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    /// Straight-line scalar evaluation, independent of the matrix path.
    fn naive_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = p.num_layers() - 1;
        for l in 0..p.num_layers() {
            let w = &p.weights[l];
            let mut z = vec![0.0; w.nrows()];
            for (i, zi) in z.iter_mut().enumerate() {
                let mut s = p.biases[l][i];
                for (j, aj) in a.iter().enumerate() {
                    s += w[[i, j]] * aj;
                }
                *zi = if l == last { s } else { s.tanh() };
            }
            a = z;
        }
        a
    }

    #[test]
    fn forward_matches_naive() {
        let p = MlpParams::init(&[4, 7, 5, 3], Activation::Tanh, 11).unwrap();
        let mut rng = rng_from_seed(3);
        let x = Array2::from_shape_simple_fn((5, 4), || rng.gen_range(-1.0..1.0));
        let y = p.predict(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let expect = naive_forward(&p, row.as_slice().unwrap());
            for (c, e) in expect.iter().enumerate() {
                let rel = (y[[i, c]] - e).abs() / e.abs().max(1e-300);
                assert!(rel <= 1e-12, "{} vs {}", y[[i, c]], e);
            }
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let p = MlpParams::init(&[3, 6, 2], Activation::Tanh, 2).unwrap();
        let x = Array2::from_elem((4, 3), 0.3);
        let (_, cache) = p.forward(x.view()).unwrap();
        let (g, dx) = p.backward(&cache, Array2::zeros((4, 2)).view()).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_scalar_closed_form() {
        // y = w x, L = y^2  =>  dL/dw = 2 w x x.
        let (w, x) = (0.7, -1.3);
        let p = MlpParams::from_parts(vec![array![[w]]], vec![array![0.0]], Activation::Tanh)
            .unwrap();
        let (y, cache) = p.forward(array![[x]].view()).unwrap();
        let (g, _) = p.backward(&cache, (2.0 * &y).view()).unwrap();
        assert!((g.weights[0][[0, 0]] - 2.0 * w * x * x).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let p = MlpParams::init(&[3, 6, 2], Activation::Tanh, 2).unwrap();
        let (_, cache) = p.forward(Array2::zeros((4, 3)).view()).unwrap();
        assert!(p.backward(&cache, Array2::zeros((3, 2)).view()).is_err());
        let other = MlpParams::init(&[3, 6, 6, 2], Activation::Tanh, 2).unwrap();
        assert!(other.backward(&cache, Array2::zeros((4, 2)).view()).is_err());
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut p = MlpParams::init(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zero = MlpGrads::zeros_like(&p);
        st.step(&mut p, &zero, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut p =
            MlpParams::from_parts(vec![array![[1.0]]], vec![array![0.0]], Activation::Tanh).unwrap();
        let mut st = AdamState::new(&p);
        let g = MlpGrads {
            weights: vec![array![[1.0]]],
            biases: vec![array![0.0]],
        };
        st.step(&mut p, &g, 1e-3).unwrap();
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.weights[0][[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = MlpParams::init(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = MlpGrads::zeros_like(&p);
        g.weights[0][[0, 0]] = f64::NAN;
        assert!(matches!(st.step(&mut p, &g, 1e-3), Err(Error::Divergence(_))));
        assert_eq!(p, before);
        assert_eq!(st.step, 0);
        let zero = MlpGrads::zeros_like(&p);
        assert!(st.step(&mut p, &zero, -1.0).is_err());
    }

    #[test]
    fn adam_deterministic_and_v_nonneg() {
        let p0 = MlpParams::init(&[3, 4, 2], Activation::Tanh, 9).unwrap();
        let mut rng = rng_from_seed(1);
        let mut g = MlpGrads::zeros_like(&p0);
        g.weights
            .iter_mut()
            .for_each(|w| w.mapv_inplace(|_| rng.gen_range(-2.0..2.0)));
        let (mut pa, mut pb) = (p0.clone(), p0.clone());
        let (mut sa, mut sb) = (AdamState::new(&p0), AdamState::new(&p0));
        for _ in 0..3 {
            sa.step(&mut pa, &g, 1e-2).unwrap();
            sb.step(&mut pb, &g, 1e-2).unwrap();
        }
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
        assert!(sa.v.to_flat().iter().all(|&v| v >= 0.0));
    }
}
