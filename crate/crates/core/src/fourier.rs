//! Random Fourier feature lift for trunk coordinates.
//!
//! `φ(ζ) = √2 · [sin(2πBζ); cos(2πBζ)]` with a Gaussian frequency matrix `B`
//! of shape `(M, d)`. The √2 factor makes the feature second moment close to
//! the identity for coordinates spread over the unit cube.

use std::f64::consts::{PI, SQRT_2};

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const DEFAULT_MAPPING_SIZE: usize = 128;
pub const DEFAULT_SIGMA: f64 = 5.0;

/// Frozen Gaussian frequency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqMatrix {
    b: Array2<f64>,
    sigma: f64,
    seed: u64,
}

impl FreqMatrix {
    pub fn sample(mapping_size: usize, coord_dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if mapping_size == 0 || coord_dim == 0 {
            return Err(Error::invalid(format!(
                "frequency matrix needs M >= 1 and d >= 1, got M={mapping_size}, d={coord_dim}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("frequency scale must be positive, got {sigma}")));
        }
        let normal = Normal::new(0.0, sigma).expect("validated sigma");
        let mut rng = rng_from_seed(seed);
        let b = Array2::from_shape_simple_fn((mapping_size, coord_dim), || normal.sample(&mut rng));
        Ok(Self { b, sigma, seed })
    }

    /// Rebuild from stored entries (checkpoint loading).
    pub fn from_parts(b: Array2<f64>, sigma: f64, seed: u64) -> Result<Self> {
        if b.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::invalid("empty frequency matrix"));
        }
        if !b.iter().all(|v| v.is_finite()) || !(sigma > 0.0) {
            return Err(Error::invalid("frequency matrix entries and sigma must be finite"));
        }
        Ok(Self { b, sigma, seed })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn mapping_size(&self) -> usize {
        self.b.nrows()
    }

    pub fn coord_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.mapping_size()
    }

    /// Embed one coordinate vector: sines of every row first, then cosines.
    pub fn embed(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        if zeta.len() != self.coord_dim() {
            return Err(Error::shape("fourier_embed coordinate", self.coord_dim(), zeta.len()));
        }
        let m = self.mapping_size();
        let mut out = vec![0.0; 2 * m];
        for (i, row) in self.b.rows().into_iter().enumerate() {
            let phase = 2.0 * PI * row.iter().zip(zeta).map(|(b, z)| b * z).sum::<f64>();
            out[i] = SQRT_2 * phase.sin();
            out[m + i] = SQRT_2 * phase.cos();
        }
        Ok(out)
    }

    /// Embed a batch of coordinates, one per row: `(q, d) -> (q, 2M)`.
    pub fn embed_batch(&self, coords: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if coords.ncols() != self.coord_dim() {
            return Err(Error::shape("fourier_embed coordinate", self.coord_dim(), coords.ncols()));
        }
        let m = self.mapping_size();
        let phase = coords.dot(&self.b.t());
        let mut out = Array2::zeros((coords.nrows(), 2 * m));
        out.slice_mut(s![.., ..m])
            .assign(&phase.mapv(|p| SQRT_2 * (2.0 * PI * p).sin()));
        out.slice_mut(s![.., m..])
            .assign(&phase.mapv(|p| SQRT_2 * (2.0 * PI * p).cos()));
        Ok(out)
    }

    /// Kernel value `φ(a)ᵀφ(b)`.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let fa = self.embed(a)?;
        let fb = self.embed(b)?;
        Ok(fa.iter().zip(&fb).map(|(x, y)| x * y).sum())
    }

    /// Monte-Carlo estimate of `E[φ(ζ)φ(ζ)ᵀ]` with `ζ ~ U([0,1]^d)`.
    pub fn feature_second_moment(&self, n_samples: usize, seed: u64) -> Result<Array2<f64>> {
        const MIN_SAMPLES: usize = 10_000;
        const CHUNK: usize = 8192;
        if n_samples < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "whitening diagnostic needs at least {MIN_SAMPLES} samples, got {n_samples}"
            )));
        }
        let d = self.coord_dim();
        let f = self.feature_dim();
        let mut rng = rng_from_seed(seed);
        let mut second_moment = Array2::<f64>::zeros((f, f));
        let mut remaining = n_samples;
        while remaining > 0 {
            let n = remaining.min(CHUNK);
            let zeta = Array2::from_shape_simple_fn((n, d), || rng.gen::<f64>());
            let phi = self.embed_batch(zeta.view())?;
            second_moment += &phi.t().dot(&phi);
            remaining -= n;
        }
        second_moment /= n_samples as f64;
        Ok(second_moment)
    }

    /// Monte-Carlo estimate of `max |E[φφᵀ] − I|` over all `2M × 2M` entries.
    pub fn whitening_diagnostic(&self, n_samples: usize, seed: u64) -> Result<f64> {
        Ok(max_deviation_from_identity(&self.feature_second_moment(n_samples, seed)?))
    }
}

/// `max |C − I|` over all entries of a square matrix.
pub fn max_deviation_from_identity(c: &Array2<f64>) -> f64 {
    c.indexed_iter().fold(0.0f64, |worst, ((i, j), v)| {
        let target = if i == j { 1.0 } else { 0.0 };
        worst.max((v - target).abs())
    })
}

/// `max |C − I|` restricted to the `2 × 2` (sin, cos) block of each frequency
/// row, i.e. entries `(i, i)`, `(i + M, i + M)` and `(i, i + M)`.
pub fn block_deviation_from_identity(c: &Array2<f64>) -> f64 {
    let m = c.nrows() / 2;
    (0..m).fold(0.0f64, |worst, i| {
        worst
            .max((c[[i, i]] - 1.0).abs())
            .max((c[[i + m, i + m]] - 1.0).abs())
            .max(c[[i, i + m]].abs())
    })
}
