//! Allen–Cahn `u_t = ε u_xx − 5u³ + 5u` on a periodic grid over `[−1, 1)`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const DEFAULT_NX: usize = 200;
pub const DEFAULT_NT: usize = 200;
pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_DT: f64 = 0.005;
pub const BLOWUP: f64 = 10.0;

/// Grid spacing for `nx` periodic points on `[−1, 1)`.
pub fn spacing(nx: usize) -> f64 {
    2.0 / nx as f64
}

/// `x_j = −1 + j Δx`.
pub fn grid(nx: usize) -> Vec<f64> {
    let dx = spacing(nx);
    (0..nx).map(|j| -1.0 + j as f64 * dx).collect()
}

/// `s(x) = Σ_{k=1..3} x^{2k} (a_k cos(kπx) + b_k sin(kπx))`.
pub fn ac_series(a: &[f64; 3], b: &[f64; 3], x: f64) -> f64 {
    (1..=3)
        .map(|k| {
            let kf = k as f64;
            x.powi(2 * k as i32) * (a[k - 1] * (kf * PI * x).cos() + b[k - 1] * (kf * PI * x).sin())
        })
        .sum()
}

/// Initial condition with `a_k, b_k ~ U(0, 1)`.
pub fn sample_ac_initial(seed: u64, nx: usize) -> Result<Vec<f64>> {
    if nx < 3 {
        return Err(Error::invalid("Allen-Cahn grid needs at least 3 points"));
    }
    let mut rng = rng_from_seed(seed);
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    for k in 0..3 {
        a[k] = rng.gen::<f64>();
        b[k] = rng.gen::<f64>();
    }
    Ok(grid(nx).into_iter().map(|x| ac_series(&a, &b, x)).collect())
}

/// Explicit Euler; row `j` holds the state at `t = (j+1) dt`.
pub fn solve_allen_cahn(s: &[f64], eps: f64, dt: f64, nt: usize) -> Result<Array2<f64>> {
    let nx = s.len();
    if nx < 3 || nt == 0 {
        return Err(Error::invalid("Allen-Cahn needs nx >= 3 and nt >= 1"));
    }
    let dx = spacing(nx);
    let r = eps * dt / (dx * dx);
    if !(eps >= 0.0 && dt > 0.0) || r > 0.5 {
        return Err(Error::invalid(format!(
            "Allen-Cahn step violates stability: eps*dt/dx^2 = {r} > 0.5"
        )));
    }
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("Allen-Cahn initial condition must be finite"));
    }
    let mut u = s.to_vec();
    let mut next = vec![0.0; nx];
    let mut out = Array2::zeros((nt, nx));
    for step in 0..nt {
        for j in 0..nx {
            let left = u[(j + nx - 1) % nx];
            let right = u[(j + 1) % nx];
            let lap = left - 2.0 * u[j] + right;
            let v = u[j];
            next[j] = v + r * lap + dt * (5.0 * v - 5.0 * v * v * v);
        }
        std::mem::swap(&mut u, &mut next);
        if let Some(bad) = u.iter().find(|v| !(v.abs() <= BLOWUP)) {
            return Err(Error::SolverFailure {
                solver: "allen_cahn",
                step: step + 1,
                reason: format!("state magnitude {bad} exceeds {BLOWUP}"),
            });
        }
        out.row_mut(step).iter_mut().zip(&u).for_each(|(o, v)| *o = *v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points_exact() {
        for c in [1.0, 0.0, -1.0] {
            let u = solve_allen_cahn(&[c; 200], DEFAULT_EPS, DEFAULT_DT, DEFAULT_NT).unwrap();
            assert!(u.iter().all(|&v| v == c));
        }
    }

    #[test]
    fn grid_convention() {
        let g = grid(200);
        assert_eq!(g[0], -1.0);
        assert!((g[100]).abs() < 1e-15);
        assert!((spacing(200) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn initial_condition_properties() {
        assert!(grid(200).into_iter().all(|x| ac_series(&[0.0; 3], &[0.0; 3], x) == 0.0));
        for seed in 0..20 {
            let s = sample_ac_initial(seed, 200).unwrap();
            assert_eq!(s[100], 0.0);
            assert!(s.iter().all(|v| v.abs() <= 6.0));
        }
    }

    #[test]
    fn max_principle_on_samples() {
        for seed in 0..10 {
            let s = sample_ac_initial(seed, 200).unwrap();
            let bound = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let u = solve_allen_cahn(&s, DEFAULT_EPS, DEFAULT_DT, DEFAULT_NT).unwrap();
            assert!(u.iter().all(|v| v.abs() <= bound + 1e-12));
            if bound <= 1.2 {
                assert!(u.iter().all(|v| v.abs() <= 1.2));
            }
        }
    }

    #[test]
    fn rejects_unstable_step() {
        assert!(solve_allen_cahn(&[0.0; 200], 1.0, 0.005, 1).is_err());
    }
}
