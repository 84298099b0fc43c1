//! Independent re-evaluation of the model and its gradients.

use std::f64::consts::PI;

use fedonet::model::{DeepOnetModel, Variant};
use fedonet::nn::MlpParams;
use fedonet::selftest::random_small_model;
use fedonet::FreqMatrix;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar-loop MLP evaluation with tanh hidden layers and a linear output.
fn mlp_loop(net: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = net.weights.len() - 1;
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        let mut z = vec![0.0; w.nrows()];
        for i in 0..w.nrows() {
            let mut s = b[i];
            for j in 0..w.ncols() {
                s += w[[i, j]] * a[j];
            }
            z[i] = if l == last { s } else { s.tanh() };
        }
        a = z;
    }
    a
}

fn predict_loop(m: &DeepOnetModel, u: &[f64], zeta: &[f64]) -> Vec<f64> {
    let cfg = m.config();
    let norm = m.normalization();
    let ub: Vec<f64> = u.iter().map(|v| (v - norm.input_shift) / norm.input_scale).collect();
    let tin: Vec<f64> = match m.freq() {
        None => zeta.to_vec(),
        Some(f) => {
            let b = f.matrix();
            let mm = b.nrows();
            let mut out = vec![0.0; 2 * mm];
            for i in 0..mm {
                let mut ph = 0.0;
                for d in 0..b.ncols() {
                    ph += b[[i, d]] * zeta[d];
                }
                out[i] = 2f64.sqrt() * (2.0 * PI * ph).sin();
                out[mm + i] = 2f64.sqrt() * (2.0 * PI * ph).cos();
            }
            out
        }
    };
    let bo = mlp_loop(&m.branch, &ub);
    let to = mlp_loop(&m.trunk, &tin);
    let p = cfg.latent_p;
    (0..cfg.out_channels)
        .map(|c| norm.output_scale * (0..p).map(|k| bo[c * p + k] * to[c * p + k]).sum::<f64>())
        .collect()
}

fn inputs(m: &DeepOnetModel, seed: u64, n: usize, q: usize) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = m.config();
    let u = Array2::from_shape_simple_fn((n, cfg.sensor_count), || rng.gen_range(-2.0..2.0));
    let z = Array2::from_shape_simple_fn((q, cfg.coord_dim), || rng.gen::<f64>());
    (u, z)
}

#[test]
fn forward_matches_scalar_loops() {
    for s in 0..10u64 {
        let variant = if s % 2 == 0 { Variant::Vanilla } else { Variant::Fedonet };
        let m = random_small_model(100 + s, variant).unwrap();
        let (u, z) = inputs(&m, s, 5, 6);
        let pred = m.forward(u.view(), z.view()).unwrap();
        for i in 0..5 {
            for j in 0..6 {
                let want = predict_loop(&m, &u.row(i).to_vec(), &z.row(j).to_vec());
                for (c, w) in want.iter().enumerate() {
                    let got = pred[[i, j, c]];
                    assert!((got - w).abs() <= 1e-12 * w.abs().max(1e-3), "{got} vs {w}");
                }
            }
        }
    }
}

/// Central differences of `mean((pred − target)²)` over every parameter.
fn fd_max_rel_error(m: &DeepOnetModel, seed: u64) -> f64 {
    let (u, z) = inputs(m, seed, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let target = Array3::from_shape_simple_fn((3, 4, m.config().out_channels), || rng.gen_range(-1.0..1.0));
    let loss = |mm: &DeepOnetModel| -> f64 {
        let p = mm.forward(u.view(), z.view()).unwrap();
        let d = &p - &target;
        d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
    };
    let (pred, cache) = m.forward_with_cache(u.view(), z.view()).unwrap();
    let g = (&pred - &target) * (2.0 / pred.len() as f64);
    let grads = m.backward(&cache, g.view()).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for branch in [true, false] {
        let analytic = if branch { grads.branch.to_flat() } else { grads.trunk.to_flat() };
        let base = if branch { m.branch.to_flat() } else { m.trunk.to_flat() };
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut mm = m.clone();
                let mut w = base.clone();
                w[i] += delta;
                if branch {
                    mm.branch.set_flat(&w).unwrap();
                } else {
                    mm.trunk.set_flat(&w).unwrap();
                }
                loss(&mm)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic[i];
            worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-4));
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_on_twenty_models() {
    let mut worst = 0.0f64;
    for s in 0..20u64 {
        let variant = if s % 2 == 0 { Variant::Vanilla } else { Variant::Fedonet };
        let m = random_small_model(500 + s, variant).unwrap();
        worst = worst.max(fd_max_rel_error(&m, s));
    }
    assert!(worst <= 1e-5, "max relative error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_norm_is_constant(seed in 0u64..1000, d in 1usize..4, z in prop::collection::vec(-3.0f64..3.0, 3)) {
        let b = FreqMatrix::sample(16, d, 5.0, seed).unwrap();
        let phi = b.embed(&z[..d]).unwrap();
        let sq: f64 = phi.iter().map(|v| v * v).sum();
        prop_assert!((sq - 32.0).abs() <= 1e-12);
    }

    #[test]
    fn kernel_is_shift_invariant(seed in 0u64..1000, a in prop::collection::vec(0.0f64..1.0, 2),
                                 b in prop::collection::vec(0.0f64..1.0, 2), s in prop::collection::vec(-1.0f64..1.0, 2)) {
        let f = FreqMatrix::sample(8, 2, 2.0, seed).unwrap();
        let k = f.kernel(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().zip(&s).map(|(x, y)| x + y).collect();
        let b2: Vec<f64> = b.iter().zip(&s).map(|(x, y)| x + y).collect();
        prop_assert!((k - f.kernel(&a2, &b2).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn output_scale_is_linear(seed in 0u64..200, alpha in 0.1f64..10.0) {
        let m = random_small_model(seed, Variant::Fedonet).unwrap();
        let (u, z) = inputs(&m, seed, 2, 3);
        let base = m.forward(u.view(), z.view()).unwrap();
        let mut m2 = m.clone();
        let mut n = m.normalization();
        n.output_scale *= alpha;
        m2.set_normalization(n).unwrap();
        let scaled = m2.forward(u.view(), z.view()).unwrap();
        for (x, y) in base.iter().zip(scaled.iter()) {
            prop_assert!((x * alpha - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}
