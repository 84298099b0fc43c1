//! Branch/trunk operator network, with raw or Fourier-lifted trunk inputs.
//!
//! For sample `i`, query `j` and output channel `c` the prediction is
//!
//! ```text
//! G(u_i)(ζ_j)[c] = s · Σ_k branch(ũ_i)[c·p + k] · trunk(ψ(ζ_j))[c·p + k]
//! ```
//!
//! where `ψ` is the identity (vanilla) or the Fourier feature map (fedonet),
//! `ũ = (u − shift) / scale` is the affinely normalized sensor vector and `s`
//! is a fixed output scale. Both default to the identity; training fits them
//! once from the training split.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::BenchmarkId;
use crate::error::{Error, Result};
use crate::fourier::{FreqMatrix, DEFAULT_MAPPING_SIZE, DEFAULT_SIGMA};
use crate::nn::{Activation, ForwardCache, MlpGrads, MlpParams};
use crate::rng::mix_seed;

pub const DEFAULT_LATENT: usize = 128;
pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Vanilla,
    Fedonet,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Fedonet => "fedonet",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::Vanilla => 0,
            Variant::Fedonet => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Vanilla),
            1 => Some(Variant::Fedonet),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "fedonet" => Ok(Variant::Fedonet),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub mapping_size: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            mapping_size: DEFAULT_MAPPING_SIZE,
            sigma: DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub branch_layers: Vec<usize>,
    pub trunk_layers: Vec<usize>,
    pub latent_p: usize,
    pub out_channels: usize,
    pub embed: Option<EmbedConfig>,
    pub sensor_count: usize,
    pub coord_dim: usize,
    pub activation: Activation,
    pub benchmark: Option<BenchmarkId>,
}

impl ModelConfig {
    /// Two hidden layers of 128 units on both networks and `p = 128`.
    pub fn with_defaults(
        variant: Variant,
        sensor_count: usize,
        coord_dim: usize,
        out_channels: usize,
    ) -> Self {
        let embed = match variant {
            Variant::Vanilla => None,
            Variant::Fedonet => Some(EmbedConfig::default()),
        };
        let mut cfg = Self {
            variant,
            branch_layers: Vec::new(),
            trunk_layers: Vec::new(),
            latent_p: DEFAULT_LATENT,
            out_channels,
            embed,
            sensor_count,
            coord_dim,
            activation: Activation::Tanh,
            benchmark: None,
        };
        cfg.set_hidden(&[DEFAULT_HIDDEN, DEFAULT_HIDDEN]);
        cfg
    }

    /// Rebuild both layer lists around the given hidden widths, keeping the
    /// input and output widths consistent with the rest of the config.
    pub fn set_hidden(&mut self, hidden: &[usize]) {
        self.set_branch_hidden(hidden);
        self.set_trunk_hidden(hidden);
    }

    pub fn set_branch_hidden(&mut self, hidden: &[usize]) {
        let width = self.latent_p * self.out_channels;
        self.branch_layers = std::iter::once(self.sensor_count)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(width))
            .collect();
    }

    pub fn set_trunk_hidden(&mut self, hidden: &[usize]) {
        let width = self.latent_p * self.out_channels;
        self.trunk_layers = std::iter::once(self.trunk_input_width())
            .chain(hidden.iter().copied())
            .chain(std::iter::once(width))
            .collect();
    }

    pub fn trunk_input_width(&self) -> usize {
        match (self.variant, self.embed) {
            (Variant::Fedonet, Some(e)) => 2 * e.mapping_size,
            _ => self.coord_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InconsistentConfig(msg));
        if self.latent_p == 0 || self.out_channels == 0 || self.sensor_count == 0 || self.coord_dim == 0
        {
            return bad("latent_p, out_channels, sensor_count and coord_dim must be positive".into());
        }
        if self.branch_layers.len() < 2 || self.trunk_layers.len() < 2 {
            return bad("branch and trunk need at least an input and an output width".into());
        }
        if self.branch_layers.iter().chain(&self.trunk_layers).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        let width = self.latent_p * self.out_channels;
        let branch_out = *self.branch_layers.last().unwrap();
        let trunk_out = *self.trunk_layers.last().unwrap();
        if branch_out != width {
            return bad(format!(
                "branch output width {branch_out} != latent_p * out_channels = {} * {} = {width}",
                self.latent_p, self.out_channels
            ));
        }
        if trunk_out != width {
            return bad(format!(
                "trunk output width {trunk_out} != latent_p * out_channels = {} * {} = {width}",
                self.latent_p, self.out_channels
            ));
        }
        if self.branch_layers[0] != self.sensor_count {
            return bad(format!(
                "branch input width {} != sensor_count {}",
                self.branch_layers[0], self.sensor_count
            ));
        }
        match (self.variant, &self.embed) {
            (Variant::Fedonet, None) => {
                return bad("fedonet variant requires an embedding configuration".into())
            }
            (Variant::Vanilla, Some(_)) => {
                return bad("vanilla variant must not carry an embedding configuration".into())
            }
            (Variant::Fedonet, Some(e)) => {
                if e.mapping_size == 0 || !(e.sigma > 0.0) {
                    return bad("embedding needs mapping_size >= 1 and sigma > 0".into());
                }
                if self.trunk_layers[0] != 2 * e.mapping_size {
                    return bad(format!(
                        "trunk input width {} != 2 * mapping_size = {}",
                        self.trunk_layers[0],
                        2 * e.mapping_size
                    ));
                }
            }
            (Variant::Vanilla, None) => {
                if self.trunk_layers[0] != self.coord_dim {
                    return bad(format!(
                        "trunk input width {} != coord_dim {}",
                        self.trunk_layers[0], self.coord_dim
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Fixed affine maps around the network: branch inputs are standardized with
/// `(u − input_shift) / input_scale`, predictions are multiplied by `output_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_shift: f64,
    pub input_scale: f64,
    pub output_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            input_shift: 0.0,
            input_scale: 1.0,
            output_scale: 1.0,
        }
    }
}

impl Normalization {
    /// Global mean/std of the branch inputs and RMS of the targets.
    /// Degenerate (zero-spread) statistics fall back to unit scales.
    pub fn fit(inputs: ArrayView2<'_, f64>, targets: ArrayView3<'_, f64>) -> Self {
        let n = inputs.len().max(1) as f64;
        let mean = inputs.sum() / n;
        let var = inputs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let rms = (targets.iter().map(|v| v * v).sum::<f64>() / targets.len().max(1) as f64).sqrt();
        let positive = |v: f64| if v > 1e-300 && v.is_finite() { v } else { 1.0 };
        Self {
            input_shift: if mean.is_finite() { mean } else { 0.0 },
            input_scale: positive(std),
            output_scale: positive(rms),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.input_shift.is_finite()
            && self.input_scale.is_finite()
            && self.input_scale > 0.0
            && self.output_scale.is_finite()
            && self.output_scale > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepOnetModel {
    config: ModelConfig,
    pub branch: MlpParams,
    pub trunk: MlpParams,
    freq: Option<FreqMatrix>,
    normalization: Normalization,
}

/// Gradients for both sub-networks. The frequency matrix never receives one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub branch: MlpGrads,
    pub trunk: MlpGrads,
}

impl ModelGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.branch.to_flat();
        v.extend(self.trunk.to_flat());
        v
    }
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    branch: ForwardCache,
    trunk: ForwardCache,
}

impl DeepOnetModel {
    /// Initialize both networks (and the frequency matrix for fedonet).
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let branch = MlpParams::init(&config.branch_layers, config.activation, mix_seed(seed, 0))?;
        let trunk = MlpParams::init(&config.trunk_layers, config.activation, mix_seed(seed, 1))?;
        let freq = match (config.variant, config.embed) {
            (Variant::Fedonet, Some(e)) => Some(FreqMatrix::sample(
                e.mapping_size,
                config.coord_dim,
                e.sigma,
                e.seed,
            )?),
            _ => None,
        };
        Ok(Self {
            config,
            branch,
            trunk,
            freq,
            normalization: Normalization::default(),
        })
    }

    /// Assemble a model from stored parts, checking them against the config.
    pub fn from_parts(
        config: ModelConfig,
        branch: MlpParams,
        trunk: MlpParams,
        freq: Option<FreqMatrix>,
        normalization: Normalization,
    ) -> Result<Self> {
        config.validate()?;
        if branch.layer_sizes() != config.branch_layers.as_slice() {
            return Err(Error::InconsistentConfig(format!(
                "branch parameters {:?} do not match configured layers {:?}",
                branch.layer_sizes(),
                config.branch_layers
            )));
        }
        if trunk.layer_sizes() != config.trunk_layers.as_slice() {
            return Err(Error::InconsistentConfig(format!(
                "trunk parameters {:?} do not match configured layers {:?}",
                trunk.layer_sizes(),
                config.trunk_layers
            )));
        }
        match (&config.embed, &freq) {
            (Some(e), Some(f)) => {
                if f.mapping_size() != e.mapping_size || f.coord_dim() != config.coord_dim {
                    return Err(Error::InconsistentConfig(format!(
                        "frequency matrix {:?} does not match mapping_size {} x coord_dim {}",
                        f.matrix().dim(),
                        e.mapping_size,
                        config.coord_dim
                    )));
                }
            }
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::InconsistentConfig(
                    "fedonet configuration without a frequency matrix".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::InconsistentConfig(
                    "vanilla configuration carrying a frequency matrix".into(),
                ))
            }
        }
        if !normalization.is_valid() {
            return Err(Error::InconsistentConfig("invalid normalization constants".into()));
        }
        Ok(Self {
            config,
            branch,
            trunk,
            freq,
            normalization,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn freq(&self) -> Option<&FreqMatrix> {
        self.freq.as_ref()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn set_normalization(&mut self, normalization: Normalization) -> Result<()> {
        if !normalization.is_valid() {
            return Err(Error::invalid("normalization scales must be finite and positive"));
        }
        self.normalization = normalization;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.branch.num_params() + self.trunk.num_params()
    }

    fn check_inputs(&self, u: &ArrayView2<'_, f64>, coords: &ArrayView2<'_, f64>) -> Result<()> {
        if u.ncols() != self.config.sensor_count {
            return Err(Error::shape("model_forward sensor width", self.config.sensor_count, u.ncols()));
        }
        if coords.ncols() != self.config.coord_dim {
            return Err(Error::shape("model_forward coordinate width", self.config.coord_dim, coords.ncols()));
        }
        Ok(())
    }

    fn branch_input(&self, u: ArrayView2<'_, f64>) -> Array2<f64> {
        let Normalization {
            input_shift,
            input_scale,
            ..
        } = self.normalization;
        u.mapv(|v| (v - input_shift) / input_scale)
    }

    fn trunk_input(&self, coords: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match &self.freq {
            Some(f) => f.embed_batch(coords),
            None => Ok(coords.to_owned()),
        }
    }

    /// Combine branch outputs `(n, p·c)` and trunk outputs `(q, p·c)` into `(n, q, c)`.
    fn combine(&self, b: &Array2<f64>, t: &Array2<f64>) -> Array3<f64> {
        let p = self.config.latent_p;
        let channels = self.config.out_channels;
        let scale = self.normalization.output_scale;
        let mut out = Array3::zeros((b.nrows(), t.nrows(), channels));
        for c in 0..channels {
            let bc = b.slice(s![.., c * p..(c + 1) * p]);
            let tc = t.slice(s![.., c * p..(c + 1) * p]);
            let mut prod = bc.dot(&tc.t());
            if scale != 1.0 {
                prod *= scale;
            }
            out.index_axis_mut(Axis(2), c).assign(&prod);
        }
        out
    }

    /// Predictions for every (sample, query, channel): shape `(n, q, c)`.
    pub fn forward(&self, u: ArrayView2<'_, f64>, coords: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        self.check_inputs(&u, &coords)?;
        let b = self.branch.predict(self.branch_input(u).view())?;
        let t = self.trunk.predict(self.trunk_input(coords)?.view())?;
        Ok(self.combine(&b, &t))
    }

    pub fn forward_with_cache(
        &self,
        u: ArrayView2<'_, f64>,
        coords: ArrayView2<'_, f64>,
    ) -> Result<(Array3<f64>, ModelCache)> {
        self.check_inputs(&u, &coords)?;
        let (b, branch) = self.branch.forward(self.branch_input(u).view())?;
        let (t, trunk) = self.trunk.forward(self.trunk_input(coords)?.view())?;
        Ok((self.combine(&b, &t), ModelCache { branch, trunk }))
    }

    /// Exact gradients of a scalar loss whose prediction-gradient is `dl_dpred`.
    pub fn backward(&self, cache: &ModelCache, dl_dpred: ArrayView3<'_, f64>) -> Result<ModelGrads> {
        let b = cache.branch.output();
        let t = cache.trunk.output();
        let expected = (b.nrows(), t.nrows(), self.config.out_channels);
        if dl_dpred.dim() != expected {
            return Err(Error::shape(
                "model_backward prediction gradient",
                format!("{expected:?}"),
                format!("{:?}", dl_dpred.dim()),
            ));
        }
        let p = self.config.latent_p;
        let scale = self.normalization.output_scale;
        let mut db = Array2::zeros(b.raw_dim());
        let mut dt = Array2::zeros(t.raw_dim());
        for c in 0..self.config.out_channels {
            let g = dl_dpred.index_axis(Axis(2), c);
            let bc = b.slice(s![.., c * p..(c + 1) * p]);
            let tc = t.slice(s![.., c * p..(c + 1) * p]);
            let mut gb = g.dot(&tc);
            let mut gt = g.t().dot(&bc);
            if scale != 1.0 {
                gb *= scale;
                gt *= scale;
            }
            db.slice_mut(s![.., c * p..(c + 1) * p]).assign(&gb);
            dt.slice_mut(s![.., c * p..(c + 1) * p]).assign(&gt);
        }
        let (branch, _) = self.branch.backward(&cache.branch, db.view())?;
        let (trunk, _) = self.trunk.backward(&cache.trunk, dt.view())?;
        Ok(ModelGrads { branch, trunk })
    }

    /// Forward and backward in one call.
    pub fn gradients(
        &self,
        u: ArrayView2<'_, f64>,
        coords: ArrayView2<'_, f64>,
        dl_dpred: ArrayView3<'_, f64>,
    ) -> Result<ModelGrads> {
        let (_, cache) = self.forward_with_cache(u, coords)?;
        self.backward(&cache, dl_dpred)
    }

    /// Evaluate one input function on an arbitrary set of query coordinates.
    /// Returns `(q, c)`.
    pub fn predict_field(&self, u: &[f64], coords: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let u = ArrayView2::from_shape((1, u.len()), u)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let pred = self.forward(u, coords)?;
        Ok(pred.index_axis_move(Axis(0), 0))
    }
}
