#![allow(dead_code)]

use fedonet::datagen::{generate_dataset, GenerateOptions};
use fedonet::model::{DeepOnetModel, ModelConfig, Variant};
use fedonet::{BenchmarkId, BenchmarkSpec, Dataset};

/// Reduced grids so every benchmark generates in well under a second.
pub fn small_spec(id: BenchmarkId) -> BenchmarkSpec {
    let mut spec = BenchmarkSpec::new(id);
    let params: &[(&str, &str)] = match id {
        BenchmarkId::Poisson2d => &[("n", "16")],
        BenchmarkId::Burgers1d => &[("nx", "16"), ("nt", "5")],
        BenchmarkId::Lorenz63 => &[("steps", "100"), ("final_time", "0.3")],
        BenchmarkId::Eikonal => &[("n", "32")],
        BenchmarkId::Lorenz96 => &[("n", "8"), ("steps", "40"), ("keep", "11")],
        BenchmarkId::AllenCahn => &[("nx", "16"), ("nt", "5")],
        BenchmarkId::Ks => &[("nx", "16"), ("final_time", "1"), ("nt", "5")],
    };
    for (k, v) in params {
        spec.set_param(k, v).unwrap();
    }
    spec
}

pub fn small_dataset(id: BenchmarkId, count: usize, seed: u64) -> Dataset {
    generate_dataset(&small_spec(id), count, seed, GenerateOptions::default()).unwrap()
}

pub fn small_model(d: &Dataset, variant: Variant, seed: u64) -> DeepOnetModel {
    let grid = d.grid();
    let mut cfg = ModelConfig::with_defaults(variant, d.branch.ncols(), grid.coord_dim(), d.targets.dim().2);
    cfg.latent_p = 8;
    if let Some(e) = cfg.embed.as_mut() {
        e.mapping_size = 8;
    }
    cfg.set_hidden(&[16]);
    cfg.benchmark = Some(d.benchmark());
    DeepOnetModel::build(cfg, seed).unwrap()
}
