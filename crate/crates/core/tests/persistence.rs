mod common;

use common::{small_dataset, small_model};
use fedonet::datagen::{generate_dataset, GenerateOptions};
use fedonet::model::{ModelConfig, Variant};
use fedonet::persist::{
    decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset, load_checkpoint, read_dataset,
    save_checkpoint, write_dataset, Checkpoint,
};
use fedonet::training::{LossHistory, LrSchedule, TrainConfig, Trainer};
use fedonet::{BenchmarkId, Error};

fn cfg() -> TrainConfig {
    TrainConfig {
        batch_functions: 4,
        queries_per_function: 16,
        lr: 1e-3,
        lr_schedule: LrSchedule::Step { gamma: 0.5, every: 30 },
        max_steps: 100,
        eval_every: 25,
        seed: 8,
    }
}

#[test]
fn datasets_round_trip_for_every_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    for id in BenchmarkId::ALL {
        let d = small_dataset(id, 6, 21);
        let path = dir.path().join(format!("{}.bin", id.name()));
        write_dataset(&d, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(encode_dataset(&back), std::fs::read(&path).unwrap());
    }
}

#[test]
fn empty_dataset_round_trips() {
    let spec = common::small_spec(BenchmarkId::Burgers1d);
    let d = generate_dataset(&spec, 0, 1, GenerateOptions::default()).unwrap();
    assert_eq!(decode_dataset(&encode_dataset(&d)).unwrap(), d);
}

#[test]
fn checkpoints_round_trip_for_both_variants() {
    let d = small_dataset(BenchmarkId::Poisson2d, 10, 2);
    for variant in [Variant::Vanilla, Variant::Fedonet] {
        let mut t = Trainer::new(small_model(&d, variant, 3), cfg()).unwrap();
        for _ in 0..5 {
            t.step_once(&d).unwrap();
        }
        let c = Checkpoint::from_trainer(&t, 3);
        let back = decode_checkpoint(&encode_checkpoint(&c)).unwrap();
        assert_eq!(back, c);
        let pred = |m: &fedonet::DeepOnetModel| m.forward(d.branch.view(), d.coords.view()).unwrap();
        assert_eq!(pred(&back.model), pred(&t.model));
    }
}

#[test]
fn resume_matches_continuous_run() {
    let d = small_dataset(BenchmarkId::Burgers1d, 12, 4);
    let mut full = Trainer::new(small_model(&d, Variant::Fedonet, 5), cfg()).unwrap();
    let mut full_hist = LossHistory::new();
    full.run(&d, 100, &mut full_hist, |_| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    let mut first = Trainer::new(small_model(&d, Variant::Fedonet, 5), cfg()).unwrap();
    let mut hist = LossHistory::new();
    first.run(&d, 50, &mut hist, |_| {}).unwrap();
    save_checkpoint(&Checkpoint::from_trainer(&first, 5), &path).unwrap();
    drop(first);
    let mut resumed = load_checkpoint(&path).unwrap().into_trainer();
    resumed.run(&d, 100, &mut hist, |_| {}).unwrap();

    assert_eq!(resumed, full);
    let losses = |h: &LossHistory| h.entries().iter().map(|e| e.train_mse).collect::<Vec<_>>();
    assert_eq!(losses(&hist), losses(&full_hist));
}

#[test]
fn variant_mismatch_is_rejected() {
    let d = small_dataset(BenchmarkId::Burgers1d, 6, 1);
    let t = Trainer::new(small_model(&d, Variant::Vanilla, 1), cfg()).unwrap();
    let c = Checkpoint::from_trainer(&t, 1);
    let mut expected = ModelConfig::clone(small_model(&d, Variant::Fedonet, 1).config());
    assert!(matches!(c.check_config(&expected), Err(Error::InconsistentConfig(_))));
    expected = c.model.config().clone();
    c.check_config(&expected).unwrap();
}

#[test]
fn corruption_is_detected() {
    let d = small_dataset(BenchmarkId::Lorenz63, 4, 1);
    let t = Trainer::new(small_model(&d, Variant::Fedonet, 1), cfg()).unwrap();
    for bytes in [encode_dataset(&d), encode_checkpoint(&Checkpoint::from_trainer(&t, 1))] {
        let is_dataset = bytes.starts_with(b"FEDO");
        let decode = |b: &[u8]| -> Result<(), Error> {
            if is_dataset {
                decode_dataset(b).map(|_| ())
            } else {
                decode_checkpoint(b).map(|_| ())
            }
        };
        decode(&bytes).unwrap();
        for pos in [20, bytes.len() / 2, bytes.len() - 5] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(matches!(decode(&bad), Err(Error::Checksum { .. })), "flip at {pos}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::VersionMismatch { .. })));
        for len in [0, 7, bytes.len() - 1] {
            assert!(decode(&bytes[..len]).is_err(), "truncated to {len}");
        }
    }
}

#[test]
fn atomic_write_leaves_only_target() {
    let dir = tempfile::tempdir().unwrap();
    let d = small_dataset(BenchmarkId::Ks, 4, 1);
    let path = dir.path().join("d.bin");
    write_dataset(&d, &path).unwrap();
    write_dataset(&d, &path).unwrap();
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names, vec!["d.bin".to_string()]);
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_dataset(&dir.path().join("none")), Err(Error::Io { .. })));
    assert!(matches!(load_checkpoint(&dir.path().join("none")), Err(Error::Io { .. })));
}
