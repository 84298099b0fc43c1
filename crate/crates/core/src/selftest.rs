//! Executable numerical checks: solver oracles, whitening, gradients,
//! spectra and the high-frequency fitting demo.
//!
//! Every check reports a measured value next to its threshold; a check that
//! errors is reported as failed instead of aborting the run.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::datagen::{allen_cahn, burgers, grf, ks, lorenz, poisson, sdf, BenchmarkId};
use crate::error::Result;
use crate::eval::{energy_spectrum_1d, energy_spectrum_2d};
use crate::fft::{spectral_resample, FftPair};
use crate::fourier::{block_deviation_from_identity, FreqMatrix};
use crate::model::{DeepOnetModel, EmbedConfig, ModelConfig, Normalization, Variant};
use crate::rng::{mix_seed, rng_from_seed};
use crate::superset::{run_superset, SupersetConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

impl Check {
    fn from(name: &str, outcome: Result<(bool, String)>) -> Self {
        match outcome {
            Ok((passed, detail)) => Self {
                name: name.to_string(),
                detail,
                passed,
            },
            Err(e) => Self {
                name: name.to_string(),
                detail: format!("error: {e}"),
                passed: false,
            },
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// FD solution of `Δu = −2π² sin(πx) sin(πy)` against the exact solution.
pub fn poisson_manufactured(n: usize) -> Result<f64> {
    let h = 1.0 / (n - 1) as f64;
    let exact = Array2::from_shape_fn((n, n), |(i, j)| (PI * i as f64 * h).sin() * (PI * j as f64 * h).sin());
    let u = poisson::solve_poisson_fd(&exact.mapv(|v| -2.0 * PI * PI * v))?;
    Ok(rel(u.as_slice().unwrap(), exact.as_slice().unwrap()))
}

/// Relative difference between the default-resolution Burgers solution and
/// a run at twice the resolution from the spectrally interpolated initial
/// condition, compared on the coarse grid at every saved time; and the
/// largest drift of the spatial mean.
pub fn burgers_self_convergence(seed: u64) -> Result<(f64, f64)> {
    let nx = burgers::DEFAULT_NX;
    let nt = burgers::DEFAULT_NT;
    let s = grf::sample_burgers_ic(nx, seed)?;
    let coarse = burgers::solve_burgers(&s, burgers::DEFAULT_NU, nt)?;
    let fine = burgers::solve_burgers(&spectral_resample(&s, 2 * nx), burgers::DEFAULT_NU, nt)?;
    let fine_on_coarse = Array2::from_shape_fn((nt, nx), |(t, j)| fine[[t, 2 * j]]);
    let err = rel(coarse.as_slice().unwrap(), fine_on_coarse.as_slice().unwrap());
    let mean0 = s.iter().sum::<f64>() / nx as f64;
    let drift = coarse
        .rows()
        .into_iter()
        .map(|r| (r.sum() / nx as f64 - mean0).abs())
        .fold(0.0, f64::max);
    Ok((err, drift))
}

/// Ratio of Lorenz-63 endpoint errors at `Δt` and `Δt/2` against a fine reference.
pub fn lorenz63_order_ratio() -> Result<f64> {
    let end = |steps: usize| -> Result<[f64; 3]> {
        let t = lorenz::integrate_lorenz63(12.0, 1.0, steps + 1)?;
        Ok([t[[steps, 0]], t[[steps, 1]], t[[steps, 2]]])
    };
    let reference = end(4800)?;
    let err = |s: [f64; 3]| (0..3).map(|i| (s[i] - reference[i]).powi(2)).sum::<f64>().sqrt();
    Ok(err(end(300)?) / err(end(600)?))
}

/// Largest deviation from `x_i = F` along a trajectory started there.
pub fn lorenz96_equilibrium_residual() -> Result<f64> {
    let f = lorenz::L96_FORCING;
    let x0 = vec![f; lorenz::L96_N];
    let traj = lorenz::integrate_lorenz96(&x0, f, lorenz::L96_DT, lorenz::L96_STEPS, lorenz::L96_KEEP)?;
    let mut rhs = vec![0.0; lorenz::L96_N];
    lorenz::lorenz96_rhs(&x0, f, &mut rhs);
    let r = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(traj.iter().fold(r, |m, v| m.max((v - f).abs())))
}

/// Whether the constant states `−1, 0, 1` stay bit-identical.
pub fn allen_cahn_fixed_points() -> Result<bool> {
    for c in [-1.0, 0.0, 1.0] {
        let s = vec![c; allen_cahn::DEFAULT_NX];
        let u = allen_cahn::solve_allen_cahn(&s, allen_cahn::DEFAULT_EPS, allen_cahn::DEFAULT_DT, allen_cahn::DEFAULT_NT)?;
        if u.iter().any(|&v| v != c) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Worst relative amplitude error of small single KS modes against linear
/// growth `exp((k² − k⁴) t)`.
pub fn ks_dispersion_error() -> Result<f64> {
    let (nx, l) = (ks::DEFAULT_NX, ks::DEFAULT_L);
    let t = 2.0;
    let mut worst = 0.0f64;
    for n in [5usize, 20, 30] {
        let u0: Vec<f64> = ks::grid(nx, l).iter().map(|x| 1e-8 * (n as f64 * x / l).cos()).collect();
        let u = ks::solve_ks(&u0, l, t, ks::DEFAULT_DT, 2)?;
        let k = n as f64 / l;
        let expected = 1e-8 * ((k * k - k.powi(4)) * t).exp();
        let amp = FftPair::new(nx).forward_real(&u.row(1).to_vec())[n].norm() * 2.0 / nx as f64;
        worst = worst.max((amp / expected - 1.0).abs());
    }
    Ok(worst)
}

/// Largest pixel error of the signed distance of a rasterized disk.
pub fn disk_sdf_error() -> Result<f64> {
    let (n, radius, c) = (128usize, 30.0, 63.5);
    let dist = |r: usize, col: usize| ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
    let mask = Array2::from_shape_fn((n, n), |(r, col)| (dist(r, col) <= radius) as u8);
    let s = sdf::signed_distance(&mask)?;
    Ok(s.indexed_iter().fold(0.0f64, |m, ((r, col), v)| m.max((v - (dist(r, col) - radius)).abs())))
}

/// Whitening diagnostic for `B ~ N(0, σ²)` of shape `(M, d)`, plus the
/// block-diagonal deviation and the worst `|‖φ(ζ)‖² − 2M|` over 10³ points.
pub struct WhiteningReport {
    pub max_deviation: f64,
    pub block_deviation: f64,
    pub norm_error: f64,
}

pub fn whitening_report(mapping_size: usize, dim: usize, sigma: f64, samples: usize, seed: u64) -> Result<WhiteningReport> {
    let b = FreqMatrix::sample(mapping_size, dim, sigma, mix_seed(seed, 0))?;
    let c = b.feature_second_moment(samples, mix_seed(seed, 1))?;
    let mut rng = rng_from_seed(mix_seed(seed, 2));
    let mut norm_error = 0.0f64;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let phi = b.embed(&z)?;
        let sq: f64 = phi.iter().map(|v| v * v).sum();
        norm_error = norm_error.max((sq - 2.0 * mapping_size as f64).abs());
    }
    Ok(WhiteningReport {
        max_deviation: crate::fourier::max_deviation_from_identity(&c),
        block_deviation: block_deviation_from_identity(&c),
        norm_error,
    })
}

/// A random small model: at most four layers per network and 8 units.
pub fn random_small_model(seed: u64, variant: Variant) -> Result<DeepOnetModel> {
    let mut rng = rng_from_seed(seed);
    let sensors = rng.gen_range(2..7);
    let coord_dim = rng.gen_range(1..3);
    let channels = rng.gen_range(1..3);
    let mut cfg = ModelConfig::with_defaults(variant, sensors, coord_dim, channels);
    cfg.latent_p = rng.gen_range(2..6);
    if variant == Variant::Fedonet {
        cfg.embed = Some(EmbedConfig {
            mapping_size: rng.gen_range(2..7),
            sigma: rng.gen_range(0.5..3.0),
            seed: rng.gen(),
        });
    }
    let depth = rng.gen_range(1..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(3..9)).collect();
    cfg.set_hidden(&hidden);
    let mut m = DeepOnetModel::build(cfg, rng.gen())?;
    m.set_normalization(Normalization {
        input_shift: rng.gen_range(-0.5..0.5),
        input_scale: rng.gen_range(0.5..2.0),
        output_scale: rng.gen_range(0.5..2.0),
    })?;
    Ok(m)
}

/// Largest relative error between backpropagated and central-difference
/// gradients of an MSE loss. The denominator is floored at `1e-4` so
/// near-zero entries are compared absolutely.
pub fn gradient_fd_error(model: &DeepOnetModel, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let cfg = model.config().clone();
    let (n, q) = (3, 4);
    let u = Array2::from_shape_simple_fn((n, cfg.sensor_count), || rng.sample::<f64, _>(StandardNormal));
    let coords = Array2::from_shape_simple_fn((q, cfg.coord_dim), || rng.gen::<f64>());
    let target = Array3::from_shape_simple_fn((n, q, cfg.out_channels), || rng.sample::<f64, _>(StandardNormal));
    let loss = |m: &DeepOnetModel| -> Result<f64> {
        let p = m.forward(u.view(), coords.view())?;
        Ok((&p - &target).mapv(|d| d * d).mean().unwrap_or(0.0))
    };
    let (pred, cache) = model.forward_with_cache(u.view(), coords.view())?;
    let grad_out = (&pred - &target) * (2.0 / pred.len() as f64);
    let analytic = model.backward(&cache, grad_out.view())?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for (net, grads) in [(0, analytic.branch.to_flat()), (1, analytic.trunk.to_flat())] {
        let base = if net == 0 { model.branch.to_flat() } else { model.trunk.to_flat() };
        for (i, g) in grads.iter().enumerate() {
            let mut set = |delta: f64| -> Result<f64> {
                let mut w = base.clone();
                w[i] += delta;
                if net == 0 {
                    probe.branch.set_flat(&w)?;
                } else {
                    probe.trunk.set_flat(&w)?;
                }
                loss(&probe)
            };
            let fd = (set(h)? - set(-h)?) / (2.0 * h);
            set(0.0)?;
            let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Gradient check over `count` random models alternating between variants.
pub fn gradient_suite(count: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..count {
        let variant = if i % 2 == 0 { Variant::Vanilla } else { Variant::Fedonet };
        let m = random_small_model(mix_seed(seed, i as u64), variant)?;
        worst = worst.max(gradient_fd_error(&m, mix_seed(seed, 1000 + i as u64))?);
    }
    Ok(worst)
}

/// Worst Parseval mismatch over `count` random 1-D and 2-D fields, and
/// whether single modes land in their bins.
pub fn spectrum_checks(count: usize, seed: u64) -> Result<(f64, bool)> {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.gen_range(4..257);
        let f = Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
        let e: f64 = energy_spectrum_1d(f.view())?.iter().sum();
        let norm: f64 = f.iter().map(|v| v * v).sum();
        worst = worst.max((e - norm).abs() / norm);
        let n = rng.gen_range(4..65);
        let f = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(StandardNormal));
        let e: f64 = energy_spectrum_2d(f.view())?.iter().sum();
        let norm: f64 = f.iter().map(|v| v * v).sum();
        worst = worst.max((e - norm).abs() / norm);
    }
    let mut placed = true;
    for (n, k) in [(64usize, 3usize), (200, 17), (33, 16)] {
        let f = Array1::from_shape_fn(n, |j| (2.0 * PI * (k * j) as f64 / n as f64).cos());
        let e = energy_spectrum_1d(f.view())?;
        let total: f64 = e.iter().sum();
        placed &= (e[k] / total - 1.0).abs() < 1e-10;
    }
    for (n, k1, k2) in [(32usize, 3usize, 4usize), (64, 5, 12), (48, 0, 7)] {
        let f = Array2::from_shape_fn((n, n), |(i, j)| {
            (2.0 * PI * (k1 * i) as f64 / n as f64).cos() * (2.0 * PI * (k2 * j) as f64 / n as f64).cos()
        });
        let e = energy_spectrum_2d(f.view())?;
        let total: f64 = e.iter().sum();
        let shell = ((k1 * k1 + k2 * k2) as f64).sqrt().round() as usize;
        placed &= (e[shell] / total - 1.0).abs() < 1e-10;
    }
    Ok((worst, placed))
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let mut c = Check::from(name, f());
    c.detail = format!("{} ({:.1}s)", c.detail, start.elapsed().as_secs_f64());
    c
}

/// The solver oracle for one benchmark at its stated tolerance.
pub fn solver_check(id: BenchmarkId) -> Check {
    match id {
        BenchmarkId::Poisson2d => timed("poisson manufactured solution", || {
            let e = poisson_manufactured(128)?;
            Ok((e <= 1e-3, format!("rel l2 {e:.3e} <= 1e-3")))
        }),
        BenchmarkId::Burgers1d => timed("burgers self-convergence and mean", || {
            let (e, drift) = burgers_self_convergence(11)?;
            Ok((
                e <= 1e-4 && drift <= 1e-8,
                format!("128 vs 256 rel {e:.3e} <= 1e-4, mean drift {drift:.3e} <= 1e-8"),
            ))
        }),
        BenchmarkId::Lorenz63 => timed("lorenz63 rk4 order", || {
            let r = lorenz63_order_ratio()?;
            Ok(((12.0..=20.0).contains(&r), format!("error ratio {r:.3} in [12, 20]")))
        }),
        BenchmarkId::Lorenz96 => timed("lorenz96 equilibrium", || {
            let r = lorenz96_equilibrium_residual()?;
            Ok((r <= 1e-12, format!("residual {r:.3e} <= 1e-12")))
        }),
        BenchmarkId::AllenCahn => timed("allen-cahn fixed points", || {
            let ok = allen_cahn_fixed_points()?;
            Ok((ok, format!("u = -1, 0, 1 preserved exactly: {ok}")))
        }),
        BenchmarkId::Ks => timed("ks linear dispersion", || {
            let e = ks_dispersion_error()?;
            Ok((e <= 0.01, format!("worst amplitude error {:.3e} <= 1e-2", e)))
        }),
        BenchmarkId::Eikonal => timed("disk signed distance", || {
            let e = disk_sdf_error()?;
            Ok((e <= 1.5, format!("max error {e:.3} px <= 1.5")))
        }),
    }
}

/// Solver oracles for all benchmarks.
pub fn solver_checks() -> Vec<Check> {
    use BenchmarkId::*;
    [Poisson2d, Burgers1d, Lorenz63, Lorenz96, AllenCahn, Ks, Eikonal]
        .into_iter()
        .map(solver_check)
        .collect()
}

pub fn whitening_check(samples: usize) -> Check {
    timed("fourier feature whitening", || {
        let r = whitening_report(128, 2, 5.0, samples, 7)?;
        Ok((
            r.max_deviation <= 0.08 && r.norm_error <= 1e-12,
            format!(
                "max|C - I| {:.3} <= 0.08 (block-diagonal part {:.3}), max|‖φ‖² - 2M| {:.1e} <= 1e-12",
                r.max_deviation, r.block_deviation, r.norm_error
            ),
        ))
    })
}

pub fn gradient_check() -> Check {
    timed("gradient finite differences", || {
        let e = gradient_suite(20, 3)?;
        Ok((e <= 1e-5, format!("20 models, max rel error {e:.3e} <= 1e-5")))
    })
}

pub fn spectrum_check() -> Check {
    timed("energy spectra", || {
        let (e, placed) = spectrum_checks(100, 5)?;
        Ok((
            e <= 1e-10 && placed,
            format!("Parseval worst {e:.2e} <= 1e-10, single modes in bin: {placed}"),
        ))
    })
}

pub fn superset_check() -> Check {
    timed("high-frequency superset fit", || {
        let r = run_superset(&SupersetConfig::default())?;
        Ok((
            r.embedded.eval_mse <= 1e-3 && r.raw.eval_mse >= 1e-1,
            format!(
                "sin(100πζ): fourier trunk MSE {:.2e} <= 1e-3, raw trunk MSE {:.2e} >= 1e-1",
                r.embedded.eval_mse, r.raw.eval_mse
            ),
        ))
    })
}

/// All checks in order. Quick mode uses fewer whitening samples and skips
/// the superset fit.
pub fn run_selftest(quick: bool, mut report: impl FnMut(&Check)) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |c: Check| {
        report(&c);
        out.push(c);
    };
    for c in solver_checks() {
        push(c);
    }
    push(whitening_check(if quick { 20_000 } else { 100_000 }));
    push(gradient_check());
    push(spectrum_check());
    if !quick {
        push(superset_check());
    }
    out
}
