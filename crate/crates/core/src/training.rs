//! Mini-batch Adam training against a generated dataset.
//!
//! Each step draws `batch_functions` training functions and one shared set
//! of `queries_per_function` grid points; every drawn function is supervised
//! at those points. Draws depend only on `(seed, step)`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView3, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::eval::relative_l2;
use crate::model::{DeepOnetModel, Normalization};
use crate::nn::AdamState;
use crate::persist::write_atomic;
use crate::rng::child_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `gamma` after every `every` steps.
    Step { gamma: f64, every: usize },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, step: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { gamma, every } => base * gamma.powi((step / every) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_functions: usize,
    pub queries_per_function: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_functions: 64,
            queries_per_function: 128,
            lr: 1e-3,
            lr_schedule: LrSchedule::Step {
                gamma: 0.5,
                every: 20_000,
            },
            max_steps: 50_000,
            eval_every: 1_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_functions == 0 || self.queries_per_function == 0 || self.eval_every == 0 {
            return Err(Error::invalid("batch_functions, queries_per_function and eval_every must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if let LrSchedule::Step { gamma, every } = self.lr_schedule {
            if !(gamma > 0.0 && gamma <= 1.0) || every == 0 {
                return Err(Error::invalid("step schedule needs gamma in (0, 1] and every >= 1"));
            }
        }
        Ok(())
    }
}

/// Squared-error loss averaged over every (sample, query, channel) entry and
/// its gradient with respect to the predictions.
pub fn mse_loss(pred: ArrayView3<'_, f64>, target: ArrayView3<'_, f64>) -> Result<(f64, Array3<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape("mse_loss", format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    let count = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff * (2.0 / count)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub function_indices: Vec<usize>,
    pub query_indices: Vec<usize>,
    /// Set when the training split is smaller than `batch_functions`.
    pub with_replacement: bool,
    pub u: Array2<f64>,
    pub coords: Array2<f64>,
    pub targets: Array3<f64>,
}

/// Deterministic batch for `step`, drawn from the training split.
pub fn make_batch(dataset: &Dataset, cfg: &TrainConfig, step: usize) -> Result<Batch> {
    let pool = dataset.split;
    if pool == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    let mut rng = child_rng(cfg.seed, step as u64);
    let with_replacement = cfg.batch_functions > pool;
    let function_indices: Vec<usize> = if with_replacement {
        (0..cfg.batch_functions).map(|_| rng.gen_range(0..pool)).collect()
    } else {
        index::sample(&mut rng, pool, cfg.batch_functions).into_vec()
    };
    let q = dataset.num_points();
    let query_indices: Vec<usize> = if cfg.queries_per_function >= q {
        (0..q).collect()
    } else {
        index::sample(&mut rng, q, cfg.queries_per_function).into_vec()
    };
    let u = dataset.branch.select(Axis(0), &function_indices);
    let coords = dataset.coords.select(Axis(0), &query_indices);
    let targets = dataset
        .targets
        .select(Axis(0), &function_indices)
        .select(Axis(1), &query_indices);
    Ok(Batch {
        function_indices,
        query_indices,
        with_replacement,
        u,
        coords,
        targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub step: usize,
    pub train_mse: f64,
    pub holdout_rel_l2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    entries: Vec<HistoryEntry>,
}

impl LossHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: HistoryEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.step <= last.step {
                return Err(Error::invalid(format!(
                    "history steps must increase: {} after {}",
                    entry.step, last.step
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_holdout(&self) -> Option<f64> {
        self.entries.iter().rev().find_map(|e| e.holdout_rel_l2)
    }

    /// `step,train_mse,holdout_rel_l2`; the last column is empty between evaluations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_mse,holdout_rel_l2\n");
        for e in &self.entries {
            let _ = write!(out, "{},{},", e.step, e.train_mse);
            if let Some(h) = e.holdout_rel_l2 {
                let _ = write!(out, "{h}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Mean relative ℓ² over the holdout split on the full query grid, or
/// `None` when the split is empty.
pub fn holdout_rel_l2(model: &DeepOnetModel, dataset: &Dataset) -> Result<Option<f64>> {
    let test = dataset.test_indices();
    if test.is_empty() {
        return Ok(None);
    }
    let n = test.len();
    let mut total = 0.0;
    // Chunked so the prediction tensor stays small on large grids.
    const CHUNK: usize = 16;
    let mut start = test.start;
    while start < test.end {
        let end = (start + CHUNK).min(test.end);
        let u = dataset.branch.slice(ndarray::s![start..end, ..]);
        let pred = model.forward(u, dataset.coords.view())?;
        for (k, i) in (start..end).enumerate() {
            total += relative_l2(pred.index_axis(Axis(0), k), dataset.targets.index_axis(Axis(0), i))?;
        }
        start = end;
    }
    Ok(Some(total / n as f64))
}

/// Check that a model can consume a dataset.
pub fn check_compatible(model: &DeepOnetModel, dataset: &Dataset) -> Result<()> {
    let cfg = model.config();
    if let Some(id) = cfg.benchmark {
        if id != dataset.benchmark() {
            return Err(Error::BenchmarkMismatch {
                expected: id.to_string(),
                found: dataset.benchmark().to_string(),
            });
        }
    }
    let grid = dataset.grid();
    let want = (dataset.branch.ncols(), grid.coord_dim(), grid.channels);
    let have = (cfg.sensor_count, cfg.coord_dim, cfg.out_channels);
    if want != have {
        return Err(Error::shape(
            "model vs dataset (sensors, coord_dim, channels)",
            format!("{want:?}"),
            format!("{have:?}"),
        ));
    }
    Ok(())
}

/// Fit the input/output normalization from the training split.
pub fn fit_normalization(model: &mut DeepOnetModel, dataset: &Dataset) -> Result<()> {
    model.set_normalization(Normalization::fit(dataset.train_branch(), dataset.train_targets()))
}

/// Model plus optimizer state and step counter; enough to resume exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: DeepOnetModel,
    pub branch_opt: AdamState,
    pub trunk_opt: AdamState,
    pub step: usize,
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(model: DeepOnetModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            branch_opt: AdamState::new(&model.branch),
            trunk_opt: AdamState::new(&model.trunk),
            model,
            step: 0,
            config,
        })
    }

    /// One Adam step; returns the batch loss before the update.
    pub fn step_once(&mut self, dataset: &Dataset) -> Result<f64> {
        let batch = make_batch(dataset, &self.config, self.step)?;
        let (pred, cache) = self.model.forward_with_cache(batch.u.view(), batch.coords.view())?;
        let (loss, grad) = mse_loss(pred.view(), batch.targets.view())?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss is {loss} at step {}", self.step)));
        }
        let grads = self.model.backward(&cache, grad.view())?;
        let lr = self.config.lr_schedule.rate(self.config.lr, self.step);
        if !grads.branch.all_finite() || !grads.trunk.all_finite() {
            return Err(Error::Divergence(format!("non-finite gradient at step {}", self.step)));
        }
        self.branch_opt.step(&mut self.model.branch, &grads.branch, lr)?;
        self.trunk_opt.step(&mut self.model.trunk, &grads.trunk, lr)?;
        self.step += 1;
        Ok(loss)
    }

    /// Train until `self.step == until`, appending to `history`. The holdout
    /// error is recorded after every `eval_every`-th step and after the last
    /// one. `progress` sees each entry as it is recorded.
    pub fn run(
        &mut self,
        dataset: &Dataset,
        until: usize,
        history: &mut LossHistory,
        mut progress: impl FnMut(&HistoryEntry),
    ) -> Result<()> {
        check_compatible(&self.model, dataset)?;
        while self.step < until {
            let step = self.step;
            let train_mse = self.step_once(dataset)?;
            let evaluate = self.step.is_multiple_of(self.config.eval_every) || self.step == until;
            let holdout = if evaluate { holdout_rel_l2(&self.model, dataset)? } else { None };
            let entry = HistoryEntry {
                step,
                train_mse,
                holdout_rel_l2: holdout,
            };
            history.push(entry)?;
            progress(&entry);
        }
        Ok(())
    }
}

/// Result of a full training run. On divergence `failure` holds the error
/// and `history` the entries recorded before it.
#[derive(Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub history: LossHistory,
    pub failure: Option<Error>,
}

/// Run `cfg.max_steps` steps from a fresh optimizer state.
pub fn train(model: DeepOnetModel, dataset: &Dataset, cfg: TrainConfig) -> Result<TrainOutcome> {
    check_compatible(&model, dataset)?;
    let mut trainer = Trainer::new(model, cfg)?;
    let mut history = LossHistory::new();
    let failure = match trainer.run(dataset, cfg.max_steps, &mut history, |_| {}) {
        Ok(()) => None,
        Err(e @ Error::Divergence(_)) => Some(e),
        Err(e) => return Err(e),
    };
    Ok(TrainOutcome {
        trainer,
        history,
        failure,
    })
}
