//! Five-point finite-difference Poisson solver on the unit square.
//!
//! Solves `∇²u = f` with `u = 0` on the boundary. Nodes sit at `(i h, j h)`
//! with `h = 1/(n−1)`; interior rows read `(4u_c − Σ_nb u)/h² = −f_c` and
//! boundary rows are identity rows with zero right-hand side. The interior
//! system is diagonalized exactly by the type-I discrete sine transform.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftPair;

/// Relative ∞-norm residual the solver must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 3;

/// Type-I DST of length `len` computed through an odd extension FFT.
struct Dst1 {
    len: usize,
    plan: FftPair,
}

impl Dst1 {
    fn new(len: usize) -> Self {
        Self {
            len,
            plan: FftPair::new(2 * (len + 1)),
        }
    }

    /// `F_k = Σ_{j=1..len} f_j sin(π j k / (len+1))`, `k = 1..len` (0-based in/out).
    fn apply(&self, input: &[f64], out: &mut [f64], buf: &mut [Complex64]) {
        let n = self.len;
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (j, &v) in input.iter().enumerate() {
            buf[j + 1] = Complex64::new(v, 0.0);
            buf[2 * (n + 1) - (j + 1)] = Complex64::new(-v, 0.0);
        }
        self.plan.forward_inplace(buf);
        for k in 0..n {
            out[k] = -0.5 * buf[k + 1].im;
        }
    }
}

/// Apply the discrete operator: interior `(4u_c − Σ nb)/h²`, boundary identity.
pub fn apply_operator(u: &Array2<f64>) -> Array2<f64> {
    let n = u.nrows();
    let h2 = 1.0 / ((n - 1) as f64).powi(2);
    let mut out = u.clone();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            out[[i, j]] = (4.0 * u[[i, j]]
                - u[[i - 1, j]]
                - u[[i + 1, j]]
                - u[[i, j - 1]]
                - u[[i, j + 1]])
                / h2;
        }
    }
    out
}

/// Right-hand side `b`: `−f` on interior nodes, zero on the boundary.
pub fn right_hand_side(f: &Array2<f64>) -> Array2<f64> {
    let n = f.nrows();
    let mut b = Array2::zeros((n, n));
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            b[[i, j]] = -f[[i, j]];
        }
    }
    b
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Exact solve of the interior system `A u = b` via sine diagonalization.
fn dst_solve(b: &Array2<f64>, dst: &Dst1) -> Array2<f64> {
    let n = b.nrows();
    let m = n - 2;
    let h2 = 1.0 / ((n - 1) as f64).powi(2);
    let mut buf = vec![Complex64::new(0.0, 0.0); 2 * (m + 1)];
    let mut tmp_in = vec![0.0; m];
    let mut tmp_out = vec![0.0; m];

    // Transform along both axes.
    let mut coef = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            tmp_in[j] = b[[i + 1, j + 1]];
        }
        dst.apply(&tmp_in, &mut tmp_out, &mut buf);
        for j in 0..m {
            coef[[i, j]] = tmp_out[j];
        }
    }
    for j in 0..m {
        for i in 0..m {
            tmp_in[i] = coef[[i, j]];
        }
        dst.apply(&tmp_in, &mut tmp_out, &mut buf);
        for i in 0..m {
            coef[[i, j]] = tmp_out[i];
        }
    }

    let eig: Vec<f64> = (1..=m)
        .map(|k| 2.0 - 2.0 * (PI * k as f64 / (m + 1) as f64).cos())
        .collect();
    // Two DST-I passes scale by ((m+1)/2)²; undo that with the eigenvalue division.
    let norm = (2.0 / (m + 1) as f64).powi(2);
    for ((k, l), c) in coef.indexed_iter_mut() {
        *c *= norm * h2 / (eig[k] + eig[l]);
    }

    for i in 0..m {
        for j in 0..m {
            tmp_in[j] = coef[[i, j]];
        }
        dst.apply(&tmp_in, &mut tmp_out, &mut buf);
        for j in 0..m {
            coef[[i, j]] = tmp_out[j];
        }
    }
    let mut u = Array2::zeros((n, n));
    for j in 0..m {
        for i in 0..m {
            tmp_in[i] = coef[[i, j]];
        }
        dst.apply(&tmp_in, &mut tmp_out, &mut buf);
        for i in 0..m {
            u[[i + 1, j + 1]] = tmp_out[i];
        }
    }
    u
}

/// Solve `∇²u = f` with homogeneous Dirichlet data on an `n × n` grid.
pub fn solve_poisson_fd(f: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, n2) = f.dim();
    if n != n2 || n < 3 {
        return Err(Error::invalid(format!("Poisson solver needs a square grid with n >= 3, got {n}x{n2}")));
    }
    if !f.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("Poisson forcing contains non-finite values"));
    }
    let b = right_hand_side(f);
    let b_norm = max_abs(&b);
    let dst = Dst1::new(n - 2);
    let mut u = dst_solve(&b, &dst);
    let mut residual = &b - &apply_operator(&u);
    let mut res_norm = max_abs(&residual);
    let mut refinements = 0;
    while res_norm > RESIDUAL_TOL * b_norm {
        if refinements == MAX_REFINEMENTS || !res_norm.is_finite() {
            return Err(Error::SolverFailure {
                solver: "poisson",
                step: refinements,
                reason: format!(
                    "residual {res_norm:.3e} exceeds {:.3e}",
                    RESIDUAL_TOL * b_norm
                ),
            });
        }
        u += &dst_solve(&residual, &dst);
        residual = &b - &apply_operator(&u);
        res_norm = max_abs(&residual);
        refinements += 1;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_forcing() {
        let u = solve_poisson_fd(&Array2::zeros((32, 32))).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manufactured_solution() {
        let n = 128;
        let h = 1.0 / (n - 1) as f64;
        let exact = Array2::from_shape_fn((n, n), |(i, j)| {
            (PI * i as f64 * h).sin() * (PI * j as f64 * h).sin()
        });
        let f = exact.mapv(|v| -2.0 * PI * PI * v);
        let u = solve_poisson_fd(&f).unwrap();
        let err: f64 = (&u - &exact).iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-3, "rel err {}", err / norm);
    }

    #[test]
    fn symmetric_forcing_symmetric_solution() {
        let n = 40;
        let f = Array2::from_shape_fn((n, n), |(i, j)| {
            let (x, y) = (i as f64 / 39.0, j as f64 / 39.0);
            (3.0 * x * y).sin() + x * x + y * y
        });
        let u = solve_poisson_fd(&f).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((u[[i, j]] - u[[j, i]]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_poisson_fd(&Array2::zeros((4, 5))).is_err());
        let mut f = Array2::zeros((8, 8));
        f[[3, 3]] = f64::NAN;
        assert!(solve_poisson_fd(&f).is_err());
    }
}
