use fedonet::eval::{energy_spectrum_1d, energy_spectrum_2d, relative_l2, EvalReport};
use fedonet::model::Variant;
use fedonet::training::mse_loss;
use fedonet::BenchmarkId;
use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mse_is_mean_square_and_gradient_is_scaled_residual(a in field(24), b in field(24)) {
        let p = Array3::from_shape_vec((2, 4, 3), a.clone()).unwrap();
        let t = Array3::from_shape_vec((2, 4, 3), b.clone()).unwrap();
        let (l, g) = mse_loss(p.view(), t.view()).unwrap();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 24.0;
        prop_assert!(l >= 0.0);
        prop_assert!((l - want).abs() <= 1e-12 * want.max(1.0));
        for ((gv, x), y) in g.iter().zip(&a).zip(&b) {
            prop_assert!((gv - 2.0 * (x - y) / 24.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn relative_l2_is_scale_invariant(a in field(16), b in field(16), s in 1e-3f64..1e3) {
        let p = Array1::from(a);
        let t = Array1::from(b);
        prop_assume!(t.iter().any(|v| v.abs() > 1e-3));
        let e = relative_l2(p.view(), t.view()).unwrap();
        let es = relative_l2((&p * s).view(), (&t * s).view()).unwrap();
        prop_assert!((e - es).abs() <= 1e-10 * e.max(1.0));
        prop_assert_eq!(relative_l2(t.view(), t.view()).unwrap(), 0.0);
    }

    #[test]
    fn spectrum_1d_sums_to_energy(n in 4usize..65, seed in field(64)) {
        let x = Array1::from(seed[..n].to_vec());
        let e = energy_spectrum_1d(x.view()).unwrap();
        prop_assert_eq!(e.len(), n / 2 + 1);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!((e.iter().sum::<f64>() - energy).abs() <= 1e-9 * energy.max(1.0));
        prop_assert!(e.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn spectrum_2d_sums_to_energy(n in 4usize..17, seed in field(256)) {
        let x = Array2::from_shape_vec((n, n), seed[..n * n].to_vec()).unwrap();
        let e = energy_spectrum_2d(x.view()).unwrap();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!((e.iter().sum::<f64>() - energy).abs() <= 1e-9 * energy.max(1.0));
    }

    #[test]
    fn report_aggregates_recompute(errs in prop::collection::vec(0.0f64..2.0, 1..40)) {
        let n = errs.len();
        let idx: Vec<usize> = (100..100 + n).collect();
        let r = EvalReport::from_errors(BenchmarkId::Ks, Variant::Fedonet, idx.clone(), errs.clone()).unwrap();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        let mut sorted = errs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        prop_assert!((r.mean - mean).abs() <= 1e-12);
        prop_assert!((r.std - var.sqrt()).abs() <= 1e-12);
        prop_assert_eq!(r.min, sorted[0]);
        prop_assert_eq!(r.max, sorted[n - 1]);
        prop_assert!((r.median - median).abs() <= 1e-15);
        prop_assert_eq!(errs[r.best_index - 100], sorted[0]);
        prop_assert_eq!(errs[r.worst_index - 100], sorted[n - 1]);
        prop_assert_eq!(errs[r.median_index - 100], sorted[(n - 1) / 2]);
        prop_assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }
}

#[test]
fn zero_truth_is_rejected() {
    let z = Array1::<f64>::zeros(8);
    assert!(relative_l2(z.view(), z.view()).is_err());
}
