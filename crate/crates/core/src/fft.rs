//! Thin helpers over `rustfft` shared by the solvers and the spectra.
//!
//! Forward transforms are unnormalized (`X_k = Σ x_j e^{-2πijk/n}`), inverse
//! transforms include the `1/n` factor unless stated otherwise.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Paired forward/inverse plans for one transform length.
#[derive(Clone)]
pub struct FftPair {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward_inplace(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse_inplace(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let inv = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= inv);
    }

    /// Inverse transform without normalization (plain synthesis sum).
    pub fn synthesize_inplace(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_inplace(&mut buf);
        buf
    }

    /// Real part of the normalized inverse transform.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse_inplace(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// Signed integer wavenumber of FFT bin `j` for length `n`.
pub fn signed_wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Band-limited resampling of a periodic real signal from `x.len()` to `m`
/// points by truncating or zero-padding its spectrum. When upsampling, an
/// even-length source Nyquist bin is split evenly between `±n/2`.
pub fn spectral_resample(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || m == 0 {
        return vec![0.0; m];
    }
    let hat = FftPair::new(n).forward_real(x);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let half = n.min(m) / 2;
    for (j, &c) in hat.iter().enumerate() {
        let k = signed_wavenumber(j, n);
        let ka = k.unsigned_abs() as usize;
        if ka > half {
            continue;
        }
        let mut v = c * (m as f64 / n as f64);
        if 2 * ka == n && m > n {
            v *= 0.5;
            out[ka] += v;
            out[m - ka] += v;
            continue;
        }
        let slot = if k >= 0 { ka } else { m - ka };
        out[slot] += v;
    }
    FftPair::new(m).inverse_real(&out)
}

/// Unnormalized 2-D forward transform of a real field (rows then columns).
pub fn fft2_real(field: &Array2<f64>) -> Array2<Complex64> {
    let mut data = field.mapv(|v| Complex64::new(v, 0.0));
    transform2(&mut data, false);
    data
}

/// 2-D transform in place. `inverse` uses the unnormalized synthesis sum.
pub fn transform2(data: &mut Array2<Complex64>, inverse: bool) {
    let (rows, cols) = data.dim();
    let row_plan = FftPair::new(cols);
    let col_plan = FftPair::new(rows);
    let run = |plan: &FftPair, buf: &mut [Complex64]| {
        if inverse {
            plan.synthesize_inplace(buf)
        } else {
            plan.forward_inplace(buf)
        }
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); cols.max(rows)];
    for mut row in data.rows_mut() {
        let buf = &mut scratch[..cols];
        buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
        run(&row_plan, buf);
        row.iter_mut().zip(buf.iter()).for_each(|(v, b)| *v = *b);
    }
    for mut col in data.columns_mut() {
        let buf = &mut scratch[..rows];
        buf.iter_mut().zip(col.iter()).for_each(|(b, v)| *b = *v);
        run(&col_plan, buf);
        col.iter_mut().zip(buf.iter()).for_each(|(v, b)| *v = *b);
    }
}
