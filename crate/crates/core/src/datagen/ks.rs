//! Kuramoto–Sivashinsky `u_t + u u_x + u_xx + u_xxxx = 0` on `[0, 2πL)`.
//!
//! ETDRK4 in Fourier space; the coefficient integrals are evaluated by
//! contour averaging so they stay accurate near the zero mode.

use std::f64::consts::PI;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_wavenumber, FftPair};
use crate::rng::rng_from_seed;

pub const DEFAULT_NX: usize = 128;
pub const DEFAULT_L: f64 = 24.0;
pub const DEFAULT_T: f64 = 50.0;
pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_NT: usize = 251;
const CONTOUR_POINTS: usize = 64;

/// `x_j = 2πL j / nx`.
pub fn grid(nx: usize, l: f64) -> Vec<f64> {
    (0..nx).map(|j| 2.0 * PI * l * j as f64 / nx as f64).collect()
}

/// `u0(x) = Σ_{n=1..4} C_n sin(n x / L)` on the periodic grid.
pub fn ks_series(coeffs: &[f64; 4], nx: usize, l: f64) -> Vec<f64> {
    grid(nx, l)
        .into_iter()
        .map(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * ((i + 1) as f64 * x / l).sin())
                .sum()
        })
        .collect()
}

/// Initial condition with `C_n ~ N(0, 1)`.
pub fn sample_ks_initial(seed: u64, nx: usize, l: f64) -> Result<Vec<f64>> {
    if nx < 16 || !nx.is_power_of_two() {
        return Err(Error::invalid(format!("KS grid must be a power of two >= 16, got {nx}")));
    }
    if !(l > 0.0) {
        return Err(Error::invalid("KS length scale must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let mut c = [0.0; 4];
    for v in c.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    Ok(ks_series(&c, nx, l))
}

struct Etdrk4 {
    plan: FftPair,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    /// `−½ i k`, zero on truncated modes.
    g: Vec<Complex64>,
    keep: Vec<bool>,
    scratch: Vec<Complex64>,
}

impl Etdrk4 {
    fn new(nx: usize, l: f64, h: f64) -> Self {
        let cutoff = nx as i64 / 3;
        let mut s = Self {
            plan: FftPair::new(nx),
            e: Vec::with_capacity(nx),
            e2: Vec::with_capacity(nx),
            q: Vec::with_capacity(nx),
            f1: Vec::with_capacity(nx),
            f2: Vec::with_capacity(nx),
            f3: Vec::with_capacity(nx),
            g: Vec::with_capacity(nx),
            keep: Vec::with_capacity(nx),
            scratch: vec![Complex64::new(0.0, 0.0); nx],
        };
        let roots: Vec<Complex64> = (1..=CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64))
            .collect();
        for j in 0..nx {
            let kj = signed_wavenumber(j, nx);
            let k = kj as f64 / l;
            let lin = k * k - k.powi(4);
            let keep = kj.abs() <= cutoff;
            s.e.push((h * lin).exp());
            s.e2.push((h * lin / 2.0).exp());
            let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let lr = *r + h * lin;
                let ex = lr.exp();
                let lr3 = lr * lr * lr;
                q += (((lr / 2.0).exp() - 1.0) / lr).re;
                f1 += ((-4.0 - lr + ex * (4.0 - 3.0 * lr + lr * lr)) / lr3).re;
                f2 += ((2.0 + lr + ex * (lr - 2.0)) / lr3).re;
                f3 += ((-4.0 - 3.0 * lr - lr * lr + ex * (4.0 - lr)) / lr3).re;
            }
            let m = CONTOUR_POINTS as f64;
            s.q.push(h * q / m);
            s.f1.push(h * f1 / m);
            s.f2.push(h * f2 / m);
            s.f3.push(h * f3 / m);
            s.g.push(if keep { Complex64::new(0.0, -0.5 * k) } else { Complex64::new(0.0, 0.0) });
            s.keep.push(keep);
        }
        s
    }

    fn nonlinear(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        for ((s, x), &keep) in self.scratch.iter_mut().zip(v).zip(&self.keep) {
            *s = if keep { *x } else { Complex64::new(0.0, 0.0) };
        }
        self.plan.inverse_inplace(&mut self.scratch);
        for s in self.scratch.iter_mut() {
            *s = Complex64::new(s.re * s.re, 0.0);
        }
        self.plan.forward_inplace(&mut self.scratch);
        for ((o, s), g) in out.iter_mut().zip(&self.scratch).zip(&self.g) {
            *o = g * s;
        }
    }

    fn step(&mut self, v: &mut [Complex64], work: &mut [Vec<Complex64>; 6]) {
        let n = v.len();
        let [nv, na, nb, nc, a, b] = work;
        self.nonlinear(v, nv);
        for j in 0..n {
            a[j] = v[j] * self.e2[j] + nv[j] * self.q[j];
        }
        self.nonlinear(a, na);
        for j in 0..n {
            b[j] = v[j] * self.e2[j] + na[j] * self.q[j];
        }
        self.nonlinear(b, nb);
        // Reuse `b` for the third stage.
        for j in 0..n {
            b[j] = a[j] * self.e2[j] + (nb[j] * 2.0 - nv[j]) * self.q[j];
        }
        self.nonlinear(b, nc);
        for j in 0..n {
            v[j] = v[j] * self.e[j]
                + nv[j] * self.f1[j]
                + (na[j] + nb[j]) * (2.0 * self.f2[j])
                + nc[j] * self.f3[j];
        }
    }
}

/// Integrate to `final_time` with inner step `dt`, saving `nt` uniform
/// snapshots including `t = 0`. The number of steps between saves must be
/// an integer.
pub fn solve_ks(u0: &[f64], l: f64, final_time: f64, dt: f64, nt: usize) -> Result<Array2<f64>> {
    let nx = u0.len();
    if nx < 8 || nt < 2 || !(l > 0.0 && final_time > 0.0 && dt > 0.0) {
        return Err(Error::invalid("KS needs nx >= 8, nt >= 2 and positive L, T, dt"));
    }
    let total = final_time / dt;
    let steps = total.round() as usize;
    if (total - steps as f64).abs() > 1e-9 * total || !steps.is_multiple_of(nt - 1) {
        return Err(Error::invalid(format!(
            "T/dt = {total} must be an integer multiple of nt - 1 = {}",
            nt - 1
        )));
    }
    if !u0.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("KS initial condition must be finite"));
    }
    let per_save = steps / (nt - 1);
    let mut solver = Etdrk4::new(nx, l, dt);
    let mut v = solver.plan.forward_real(u0);
    let zero = Complex64::new(0.0, 0.0);
    let mut work: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![zero; nx]);
    let mut out = Array2::zeros((nt, nx));
    out.row_mut(0).iter_mut().zip(u0).for_each(|(o, x)| *o = *x);
    for step in 1..=steps {
        solver.step(&mut v, &mut work);
        if !v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::SolverFailure {
                solver: "ks",
                step,
                reason: "non-finite spectrum".into(),
            });
        }
        if step % per_save == 0 {
            let row = solver.plan.inverse_real(&v);
            out.row_mut(step / per_save).iter_mut().zip(row).for_each(|(o, x)| *o = x);
        }
    }
    Ok(out)
}
