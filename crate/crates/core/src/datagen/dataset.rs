use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rayon::prelude::*;

use super::{BenchmarkId, BenchmarkSpec, GridMeta, SamplePair};
use crate::error::{Error, Result};
use crate::rng::mix_seed;

/// Fresh seeds tried for one sample index before generation gives up.
pub const MAX_REDRAWS: u32 = 16;

/// A generated benchmark dataset. All samples share one query grid.
///
/// Samples `0..split` form the training split and `split..count` the holdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: BenchmarkSpec,
    pub base_seed: u64,
    /// `(count, sensor_count)`.
    pub branch: Array2<f64>,
    /// `(num_points, coord_dim)`, normalized.
    pub coords: Array2<f64>,
    /// `(count, num_points, channels)`.
    pub targets: Array3<f64>,
    pub sample_seeds: Vec<u64>,
    pub split: usize,
    pub redraws: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Training split size; defaults to `count − ⌊count/10⌋`.
    pub split: Option<usize>,
}

/// Default 90/10 split boundary.
pub fn default_split(count: usize) -> usize {
    count - count / 10
}

impl Dataset {
    /// Assemble from parts, checking every shape against the spec.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: BenchmarkSpec,
        base_seed: u64,
        branch: Array2<f64>,
        coords: Array2<f64>,
        targets: Array3<f64>,
        sample_seeds: Vec<u64>,
        split: usize,
        redraws: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid();
        let count = sample_seeds.len();
        let dims = (
            branch.dim(),
            coords.dim(),
            targets.dim(),
        );
        let expected = (
            (count, spec.sensor_count()),
            (grid.num_points(), grid.coord_dim()),
            (count, grid.num_points(), grid.channels),
        );
        if dims != expected {
            return Err(Error::shape("dataset", format!("{expected:?}"), format!("{dims:?}")));
        }
        if split > count {
            return Err(Error::invalid(format!("split {split} exceeds sample count {count}")));
        }
        Ok(Self {
            spec,
            base_seed,
            branch,
            coords,
            targets,
            sample_seeds,
            split,
            redraws,
        })
    }

    pub fn benchmark(&self) -> BenchmarkId {
        self.spec.id()
    }

    pub fn grid(&self) -> GridMeta {
        self.spec.grid()
    }

    pub fn count(&self) -> usize {
        self.sample_seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn num_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn train_indices(&self) -> std::ops::Range<usize> {
        0..self.split
    }

    pub fn test_indices(&self) -> std::ops::Range<usize> {
        self.split..self.count()
    }

    pub fn set_split(&mut self, split: usize) -> Result<()> {
        if split > self.count() {
            return Err(Error::invalid(format!("split {split} exceeds sample count {}", self.count())));
        }
        self.split = split;
        Ok(())
    }

    pub fn train_branch(&self) -> ArrayView2<'_, f64> {
        self.branch.slice(ndarray::s![..self.split, ..])
    }

    pub fn train_targets(&self) -> ArrayView3<'_, f64> {
        self.targets.slice(ndarray::s![..self.split, .., ..])
    }

    pub fn sample(&self, index: usize) -> SamplePair {
        SamplePair {
            branch_input: self.branch.row(index).to_vec(),
            target: self.targets.index_axis(Axis(0), index).to_owned(),
            sample_seed: self.sample_seeds[index],
        }
    }

    /// New dataset holding the given samples in order; all of them land in
    /// the training split.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.count()) {
            return Err(Error::invalid(format!("sample index {bad} out of range")));
        }
        Ok(Self {
            spec: self.spec.clone(),
            base_seed: self.base_seed,
            branch: self.branch.select(Axis(0), indices),
            coords: self.coords.clone(),
            targets: self.targets.select(Axis(0), indices),
            sample_seeds: indices.iter().map(|&i| self.sample_seeds[i]).collect(),
            split: indices.len(),
            redraws: 0,
        })
    }
}

/// Generate sample `index`, redrawing with derived seeds after failures.
fn generate_one(spec: &BenchmarkSpec, base_seed: u64, index: usize) -> Result<(SamplePair, u32)> {
    let primary = mix_seed(base_seed, index as u64);
    let mut seed = primary;
    let mut last_err = None;
    for attempt in 0..=MAX_REDRAWS {
        if attempt > 0 {
            seed = mix_seed(primary, attempt as u64);
        }
        match spec.generate_sample(seed) {
            Ok(pair) => return Ok((pair, attempt)),
            Err(e @ Error::InvalidArgument(_)) if attempt == 0 && spec.validate().is_err() => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Generate `count` samples in parallel. Sample `i` uses the seed
/// `mix_seed(base_seed, i)`; a failed sample is redrawn with
/// `mix_seed(that_seed, attempt)` and the number of redraws is recorded.
pub fn generate_dataset(
    spec: &BenchmarkSpec,
    count: usize,
    base_seed: u64,
    options: GenerateOptions,
) -> Result<Dataset> {
    spec.validate()?;
    let grid = spec.grid();
    let split = options.split.unwrap_or_else(|| default_split(count));
    if split > count {
        return Err(Error::invalid(format!("split {split} exceeds sample count {count}")));
    }
    let samples: Vec<(SamplePair, u32)> = (0..count)
        .into_par_iter()
        .map(|i| generate_one(spec, base_seed, i))
        .collect::<Result<_>>()?;

    let (q, c) = (grid.num_points(), grid.channels);
    let mut branch = Array2::zeros((count, spec.sensor_count()));
    let mut targets = Array3::zeros((count, q, c));
    let mut seeds = Vec::with_capacity(count);
    let mut redraws = 0u64;
    for (i, (pair, attempts)) in samples.into_iter().enumerate() {
        branch
            .row_mut(i)
            .iter_mut()
            .zip(&pair.branch_input)
            .for_each(|(o, v)| *o = *v);
        targets.index_axis_mut(Axis(0), i).assign(&pair.target);
        seeds.push(pair.sample_seed);
        redraws += attempts as u64;
    }
    Dataset::from_parts(
        spec.clone(),
        base_seed,
        branch,
        grid.coords(),
        targets,
        seeds,
        split,
        redraws,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_burgers() -> BenchmarkSpec {
        let mut spec = BenchmarkSpec::new(BenchmarkId::Burgers1d);
        spec.set_param("nx", "32").unwrap();
        spec.set_param("nt", "11").unwrap();
        spec
    }

    #[test]
    fn deterministic_and_split() {
        let spec = small_burgers();
        let a = generate_dataset(&spec, 12, 5, GenerateOptions::default()).unwrap();
        let b = generate_dataset(&spec, 12, 5, GenerateOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split, 11);
        assert_eq!(a.test_indices(), 11..12);
        assert_eq!(a.sample_seeds[3], mix_seed(5, 3));
        let c = generate_dataset(&spec, 12, 6, GenerateOptions::default()).unwrap();
        assert_ne!(a.branch, c.branch);
    }

    #[test]
    fn sample_matches_direct_generation() {
        let spec = small_burgers();
        let d = generate_dataset(&spec, 3, 9, GenerateOptions { split: Some(2) }).unwrap();
        let direct = spec.generate_sample(d.sample_seeds[1]).unwrap();
        assert_eq!(d.sample(1), direct);
        assert_eq!(d.split, 2);
    }

    #[test]
    fn select_and_bad_split() {
        let spec = small_burgers();
        let d = generate_dataset(&spec, 4, 1, GenerateOptions::default()).unwrap();
        let s = d.select(&[3, 1]).unwrap();
        assert_eq!(s.sample(0), d.sample(3));
        assert_eq!(s.count(), 2);
        assert!(d.select(&[4]).is_err());
        assert!(generate_dataset(&spec, 4, 1, GenerateOptions { split: Some(5) }).is_err());
    }

    #[test]
    fn empty_dataset() {
        let d = generate_dataset(&small_burgers(), 0, 1, GenerateOptions::default()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.branch.dim(), (0, 32));
    }
}
