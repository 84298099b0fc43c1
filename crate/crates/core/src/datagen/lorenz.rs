//! Lorenz-63 and Lorenz-96 trajectories with fixed-step classical RK4.

use ndarray::Array2;

use crate::error::{Error, Result};

pub const L63_SIGMA: f64 = 10.0;
pub const L63_RHO: f64 = 28.0;
pub const L63_BETA: f64 = 8.0 / 3.0;
pub const L63_Y0: f64 = 12.0;
pub const L63_Z0: f64 = 12.0;
pub const L63_FINAL_TIME: f64 = 3.0;
pub const L63_STEPS: usize = 1000;

pub const L96_N: usize = 40;
pub const L96_FORCING: f64 = 4.0;
pub const L96_DT: f64 = 0.01;
pub const L96_STEPS: usize = 1500;
pub const L96_KEEP: usize = 501;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz63 {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz63 {
    fn default() -> Self {
        Self {
            sigma: L63_SIGMA,
            rho: L63_RHO,
            beta: L63_BETA,
        }
    }
}

impl Lorenz63 {
    pub fn rhs(&self, s: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = s;
        [
            self.sigma * (y - x),
            x * (self.rho - z) - y,
            x * y - self.beta * z,
        ]
    }

    pub fn rk4_step(&self, s: [f64; 3], dt: f64) -> [f64; 3] {
        let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
        let k1 = self.rhs(s);
        let k2 = self.rhs(add(s, k1, 0.5 * dt));
        let k3 = self.rhs(add(s, k2, 0.5 * dt));
        let k4 = self.rhs(add(s, k3, dt));
        let mut out = s;
        for i in 0..3 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// One of the two non-trivial equilibria `(√(β(ρ−1)), √(β(ρ−1)), ρ−1)`.
    pub fn fixed_point(&self) -> [f64; 3] {
        let r = (self.beta * (self.rho - 1.0)).sqrt();
        [r, r, self.rho - 1.0]
    }

    /// States at `nsteps` uniform times on `[0, T]`, starting from `state0`.
    pub fn trajectory(&self, state0: [f64; 3], final_time: f64, nsteps: usize) -> Result<Array2<f64>> {
        if nsteps < 2 || !(final_time > 0.0) {
            return Err(Error::invalid("Lorenz-63 needs nsteps >= 2 and T > 0"));
        }
        if !state0.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("Lorenz-63 initial state must be finite"));
        }
        let dt = final_time / (nsteps - 1) as f64;
        let mut out = Array2::zeros((nsteps, 3));
        let mut s = state0;
        for step in 0..nsteps {
            if step > 0 {
                s = self.rk4_step(s, dt);
                if !s.iter().all(|v| v.is_finite()) {
                    return Err(Error::SolverFailure {
                        solver: "lorenz63",
                        step,
                        reason: "non-finite state".into(),
                    });
                }
            }
            for i in 0..3 {
                out[[step, i]] = s[i];
            }
        }
        Ok(out)
    }
}

/// Trajectory from `(x0, y0, z0) = (x0, 12, 12)` with the default parameters.
pub fn integrate_lorenz63(x0: f64, final_time: f64, nsteps: usize) -> Result<Array2<f64>> {
    Lorenz63::default().trajectory([x0, L63_Y0, L63_Z0], final_time, nsteps)
}

/// `dx_i/dt = (x_{i+1} − x_{i−2}) x_{i−1} − x_i + F` with periodic indices.
pub fn lorenz96_rhs(x: &[f64], forcing: f64, out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let ip1 = x[(i + 1) % n];
        let im1 = x[(i + n - 1) % n];
        let im2 = x[(i + n - 2) % n];
        out[i] = (ip1 - im2) * im1 - x[i] + forcing;
    }
}

/// Run `nsteps` RK4 steps and return the final `keep` states (`keep × N`),
/// i.e. steps `nsteps − keep + 1 ..= nsteps`.
pub fn integrate_lorenz96(x0: &[f64], forcing: f64, dt: f64, nsteps: usize, keep: usize) -> Result<Array2<f64>> {
    let n = x0.len();
    if n < 4 {
        return Err(Error::invalid("Lorenz-96 needs at least 4 variables"));
    }
    if keep == 0 || keep > nsteps + 1 {
        return Err(Error::invalid(format!("cannot keep {keep} states from {nsteps} steps")));
    }
    if !(dt > 0.0) || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("Lorenz-96 needs dt > 0 and a finite initial state"));
    }
    let first_kept = nsteps + 1 - keep;
    let mut out = Array2::zeros((keep, n));
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for step in 0..=nsteps {
        if step > 0 {
            lorenz96_rhs(&x, forcing, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k1[i];
            }
            lorenz96_rhs(&tmp, forcing, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k2[i];
            }
            lorenz96_rhs(&tmp, forcing, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + dt * k3[i];
            }
            lorenz96_rhs(&tmp, forcing, &mut k4);
            for i in 0..n {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::SolverFailure {
                    solver: "lorenz96",
                    step,
                    reason: "non-finite state".into(),
                });
            }
        }
        if step >= first_kept {
            out.row_mut(step - first_kept)
                .iter_mut()
                .zip(&x)
                .for_each(|(o, v)| *o = *v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn l63_fixed_point_is_stationary() {
        let sys = Lorenz63::default();
        let fp = sys.fixed_point();
        let traj = sys.trajectory(fp, 3.0, 1000).unwrap();
        for row in traj.rows() {
            for i in 0..3 {
                assert!((row[i] - fp[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn l63_rk4_order() {
        let at_one = |steps: usize| {
            let t = integrate_lorenz63(12.0, 1.0, steps + 1).unwrap();
            [t[[steps, 0]], t[[steps, 1]], t[[steps, 2]]]
        };
        let reference = at_one(4800);
        let err = |s: [f64; 3]| {
            (0..3).map(|i| (s[i] - reference[i]).powi(2)).sum::<f64>().sqrt()
        };
        let ratio = err(at_one(300)) / err(at_one(600));
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn l63_shape_and_start() {
        let t = integrate_lorenz63(11.5, 3.0, 1000).unwrap();
        assert_eq!(t.dim(), (1000, 3));
        assert_eq!(t.row(0).to_vec(), vec![11.5, 12.0, 12.0]);
    }

    #[test]
    fn l96_equilibrium_constant() {
        let x0 = vec![L96_FORCING; L96_N];
        let traj = integrate_lorenz96(&x0, L96_FORCING, L96_DT, L96_STEPS, L96_KEEP).unwrap();
        assert_eq!(traj.dim(), (501, 40));
        assert!(traj.iter().all(|&v| v == L96_FORCING));
    }

    #[test]
    fn l96_bounded() {
        let mut rng = rng_from_seed(4);
        let x0: Vec<f64> = (0..L96_N)
            .map(|_| L96_FORCING + 1e-3 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let traj = integrate_lorenz96(&x0, L96_FORCING, L96_DT, L96_STEPS, L96_KEEP).unwrap();
        assert!(traj.iter().all(|v| v.abs() <= 10.0));
    }

    #[test]
    fn l96_keep_window() {
        let x0: Vec<f64> = (0..8).map(|i| 4.0 + 0.01 * i as f64).collect();
        let all = integrate_lorenz96(&x0, 4.0, 0.01, 20, 21).unwrap();
        let tail = integrate_lorenz96(&x0, 4.0, 0.01, 20, 5).unwrap();
        assert_eq!(all.row(0).to_vec(), x0);
        for r in 0..5 {
            assert_eq!(tail.row(r), all.row(16 + r));
        }
        assert!(integrate_lorenz96(&x0, 4.0, 0.01, 20, 22).is_err());
    }
}
