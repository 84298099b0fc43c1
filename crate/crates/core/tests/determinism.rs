mod common;

use common::{small_model, small_spec};
use fedonet::datagen::{generate_dataset, GenerateOptions};
use fedonet::eval::{evaluate_model, field_csv, predict_samples};
use fedonet::model::Variant;
use fedonet::persist::{encode_checkpoint, encode_dataset, Checkpoint};
use fedonet::training::{fit_normalization, train, LrSchedule, TrainConfig};
use fedonet::BenchmarkId;

/// Generate, train and evaluate; return every artifact as bytes.
fn pipeline(id: BenchmarkId) -> Vec<Vec<u8>> {
    let d = generate_dataset(&small_spec(id), 40, 77, GenerateOptions::default()).unwrap();
    let mut model = small_model(&d, Variant::Fedonet, 3);
    fit_normalization(&mut model, &d).unwrap();
    let cfg = TrainConfig {
        batch_functions: 16,
        queries_per_function: 32,
        lr: 1e-3,
        lr_schedule: LrSchedule::Constant,
        max_steps: 60,
        eval_every: 20,
        seed: 4,
    };
    let out = train(model, &d, cfg).unwrap();
    let report = evaluate_model(&out.trainer.model, &d).unwrap();
    let s = report.median_index;
    let pred = predict_samples(&out.trainer.model, &d, &[s]).unwrap();
    let field = field_csv(
        &d.grid(),
        d.targets.index_axis(ndarray::Axis(0), s),
        pred.index_axis(ndarray::Axis(0), 0),
    )
    .unwrap();
    vec![
        encode_dataset(&d),
        encode_checkpoint(&Checkpoint::from_trainer(&out.trainer, 3)),
        out.history.to_csv().into_bytes(),
        report.to_csv().into_bytes(),
        report.to_json().into_bytes(),
        field.into_bytes(),
    ]
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn artifacts_are_independent_of_thread_count() {
    for id in [BenchmarkId::Poisson2d, BenchmarkId::Burgers1d, BenchmarkId::Lorenz63] {
        let one = with_threads(1, || pipeline(id));
        let four = with_threads(4, || pipeline(id));
        for (k, (a, b)) in one.iter().zip(&four).enumerate() {
            assert!(a == b, "{id:?}: artifact {k} differs");
        }
    }
}
