//! Viscous Burgers equation `u_t + u u_x = ν u_xx` on the periodic unit interval.
//!
//! Fourier pseudo-spectral in space with the quadratic term evaluated on
//! 2/3-truncated modes, classical RK4 in time.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_wavenumber, FftPair};

pub const DEFAULT_NU: f64 = 0.01;
pub const DEFAULT_NX: usize = 128;
pub const DEFAULT_NT: usize = 101;
pub const FINAL_TIME: f64 = 1.0;
/// Explicit step bound as a fraction of `Δx²/ν`.
pub const DIFFUSIVE_CFL: f64 = 0.25;

struct Rhs {
    plan: FftPair,
    /// `2π k` per FFT bin.
    wavenumber: Vec<f64>,
    /// Modes kept by the 2/3 rule.
    keep: Vec<bool>,
    nu: f64,
    scratch: Vec<Complex64>,
}

impl Rhs {
    fn new(nx: usize, nu: f64) -> Self {
        let cutoff = nx as i64 / 3;
        Self {
            plan: FftPair::new(nx),
            wavenumber: (0..nx).map(|j| 2.0 * PI * signed_wavenumber(j, nx) as f64).collect(),
            keep: (0..nx).map(|j| signed_wavenumber(j, nx).abs() <= cutoff).collect(),
            nu,
            scratch: vec![Complex64::new(0.0, 0.0); nx],
        }
    }

    /// `d û / dt = −½ i k (u²)^ − ν k² û`.
    fn eval(&mut self, state: &[Complex64], out: &mut [Complex64]) {
        for ((s, v), &keep) in self.scratch.iter_mut().zip(state).zip(&self.keep) {
            *s = if keep { *v } else { Complex64::new(0.0, 0.0) };
        }
        self.plan.inverse_inplace(&mut self.scratch);
        for s in self.scratch.iter_mut() {
            *s = Complex64::new(s.re * s.re, 0.0);
        }
        self.plan.forward_inplace(&mut self.scratch);
        for j in 0..state.len() {
            let k = self.wavenumber[j];
            let nonlinear = if self.keep[j] {
                Complex64::new(0.0, -0.5 * k) * self.scratch[j]
            } else {
                Complex64::new(0.0, 0.0)
            };
            out[j] = nonlinear - state[j] * (self.nu * k * k);
        }
    }
}

/// Number of RK4 steps: the smallest multiple of `nt − 1` whose step size
/// respects the diffusive bound.
pub fn step_count(nx: usize, nu: f64, nt: usize) -> usize {
    let dx = 1.0 / nx as f64;
    let dt_max = DIFFUSIVE_CFL * dx * dx / nu;
    let intervals = (nt - 1).max(1);
    let per_interval = ((FINAL_TIME / intervals as f64) / dt_max).ceil().max(1.0) as usize;
    per_interval * intervals
}

/// Integrate to `t = 1`, returning `nt` uniformly spaced snapshots `(nt, nx)`
/// including `t = 0` (row 0 is `s` itself) and `t = 1`.
pub fn solve_burgers(s: &[f64], nu: f64, nt: usize) -> Result<Array2<f64>> {
    let nx = s.len();
    if nx < 4 {
        return Err(Error::invalid("Burgers grid needs at least 4 points"));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid(format!("viscosity must be positive, got {nu}")));
    }
    if nt < 2 {
        return Err(Error::invalid("need at least two snapshots"));
    }
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("initial condition contains non-finite values"));
    }
    let steps = step_count(nx, nu, nt);
    let per_snapshot = steps / (nt - 1);
    let dt = FINAL_TIME / steps as f64;

    let mut rhs = Rhs::new(nx, nu);
    let mut state = rhs.plan.forward_real(s);
    let zero = Complex64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![zero; nx],
        vec![zero; nx],
        vec![zero; nx],
        vec![zero; nx],
        vec![zero; nx],
    );

    let mut out = Array2::zeros((nt, nx));
    out.row_mut(0).iter_mut().zip(s).for_each(|(o, v)| *o = *v);
    for step in 1..=steps {
        rhs.eval(&state, &mut k1);
        for j in 0..nx {
            tmp[j] = state[j] + k1[j] * (0.5 * dt);
        }
        rhs.eval(&tmp, &mut k2);
        for j in 0..nx {
            tmp[j] = state[j] + k2[j] * (0.5 * dt);
        }
        rhs.eval(&tmp, &mut k3);
        for j in 0..nx {
            tmp[j] = state[j] + k3[j] * dt;
        }
        rhs.eval(&tmp, &mut k4);
        for j in 0..nx {
            state[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (dt / 6.0);
        }
        if !state.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::SolverFailure {
                solver: "burgers",
                step,
                reason: "non-finite spectrum".into(),
            });
        }
        if step % per_snapshot == 0 {
            let row = rhs.plan.inverse_real(&state);
            out.row_mut(step / per_snapshot)
                .iter_mut()
                .zip(row)
                .for_each(|(o, v)| *o = v);
        }
    }
    Ok(out)
}
