//! Gaussian random fields by spectral synthesis.
//!
//! A field on the periodic unit cell is written as `f(x) = Σ_κ c_κ e^{2πiκ·x}`
//! with independent (Hermitian-paired) complex Gaussian coefficients whose
//! variance `E|c_κ|²` follows the eigenvalues of the covariance operator.

use std::f64::consts::PI;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_wavenumber, transform2, FftPair};
use crate::rng::rng_from_seed;

/// Coefficient standard deviation of `(−Δ + τ²)^(−α)` at wavenumber `(k1, k2)`.
pub fn grf_2d_std(k1: i64, k2: i64, alpha: f64, tau: f64) -> f64 {
    let k2sum = (k1 * k1 + k2 * k2) as f64;
    ((2.0 * PI).powi(2) * k2sum + tau * tau).powf(-alpha / 2.0)
}

/// Coefficient standard deviation of `25² (−Δ + 5²)^(−4)` at wavenumber `k`.
pub fn burgers_ic_std(k: i64) -> f64 {
    let kk = 2.0 * PI * k as f64;
    25.0 * (kk * kk + 25.0).powi(-2)
}

/// Draw an `n × n` field with covariance `(−Δ + τ²)^(−α)` on `[0,1]²`.
///
/// The mean (κ = 0) coefficient is fixed at zero. `field[[i, j]]` is the value
/// at `(x, y) = (i/n, j/n)`.
pub fn sample_grf_2d(n: usize, alpha: f64, tau: f64, seed: u64) -> Result<Array2<f64>> {
    if n < 8 {
        return Err(Error::invalid(format!("GRF grid must be at least 8x8, got {n}")));
    }
    if !(alpha > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("GRF needs alpha > 0 and finite tau"));
    }
    let mut rng = rng_from_seed(seed);
    // The DFT of real white noise is Hermitian with E|ξ̂|² = n², so scaling
    // by std/n gives coefficients with the target variance and exact symmetry.
    let mut spec = Array2::from_shape_simple_fn((n, n), || {
        Complex64::new(StandardNormal.sample(&mut rng), 0.0)
    });
    transform2(&mut spec, false);
    for ((i, j), c) in spec.indexed_iter_mut() {
        let (k1, k2) = (signed_wavenumber(i, n), signed_wavenumber(j, n));
        if k1 == 0 && k2 == 0 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= grf_2d_std(k1, k2, alpha, tau) / n as f64;
        }
    }
    transform2(&mut spec, true);
    Ok(spec.mapv(|c| c.re))
}

/// Periodic initial condition on `x_j = j / nx` with zero mean mode.
pub fn sample_burgers_ic(nx: usize, seed: u64) -> Result<Vec<f64>> {
    if nx < 4 || !nx.is_power_of_two() {
        return Err(Error::invalid(format!("Burgers grid size must be a power of two >= 4, got {nx}")));
    }
    let mut rng = rng_from_seed(seed);
    let plan = FftPair::new(nx);
    let noise: Vec<f64> = (0..nx).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut spec = plan.forward_real(&noise);
    for (j, c) in spec.iter_mut().enumerate() {
        let k = signed_wavenumber(j, nx);
        if k == 0 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= burgers_ic_std(k) / (nx as f64).sqrt();
        }
    }
    plan.synthesize_inplace(&mut spec);
    Ok(spec.into_iter().map(|c| c.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = sample_grf_2d(16, 3.0, 3.0, 5).unwrap();
        assert_eq!(a, sample_grf_2d(16, 3.0, 3.0, 5).unwrap());
        assert_ne!(a, sample_grf_2d(16, 3.0, 3.0, 6).unwrap());
        assert_eq!(sample_burgers_ic(64, 1).unwrap(), sample_burgers_ic(64, 1).unwrap());
    }

    #[test]
    fn rejects_small_grids() {
        assert!(sample_grf_2d(4, 3.0, 3.0, 0).is_err());
        assert!(sample_burgers_ic(100, 0).is_err());
    }

    #[test]
    fn burgers_zero_mean_mode() {
        let s = sample_burgers_ic(128, 3).unwrap();
        let mean = s.iter().sum::<f64>() / 128.0;
        assert!(mean.abs() < 1e-15);
    }
}
