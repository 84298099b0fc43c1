//! Fitting a single high-frequency function with a trunk network alone,
//! once on Fourier features and once on the raw coordinate.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fourier::FreqMatrix;
use crate::nn::{Activation, AdamState, MlpParams};
use crate::rng::mix_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SupersetConfig {
    /// Target is `sin(2π·cycles·ζ)` on `[0, 1]`.
    pub cycles: f64,
    pub sigma: f64,
    pub mapping_size: usize,
    pub hidden: Vec<usize>,
    pub train_points: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SupersetConfig {
    fn default() -> Self {
        Self {
            cycles: 50.0,
            sigma: 50.0,
            mapping_size: 64,
            hidden: vec![64, 64],
            train_points: 1000,
            steps: 20_000,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Training-grid MSE after the last step.
    pub train_mse: f64,
    /// MSE on the midpoints between training points.
    pub eval_mse: f64,
    /// First step whose training MSE (before the update) was at most `1e-3`.
    pub first_step_below_1e3: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupersetResult {
    pub embedded: FitResult,
    pub raw: FitResult,
}

fn target(cycles: f64, z: f64) -> f64 {
    (2.0 * PI * cycles * z).sin()
}

fn fit(
    net: &mut MlpParams,
    features: impl Fn(&Array2<f64>) -> Result<Array2<f64>>,
    cfg: &SupersetConfig,
) -> Result<FitResult> {
    let n = cfg.train_points;
    let grid = |k: usize, offset: f64| Array2::from_shape_fn((k, 1), |(i, _)| (i as f64 + offset) / n as f64);
    let train_x = grid(n, 0.0);
    let eval_x = grid(n - 1, 0.5);
    let train_y = train_x.mapv(|z| target(cfg.cycles, z));
    let eval_y = eval_x.mapv(|z| target(cfg.cycles, z));
    let train_f = features(&train_x)?;
    let eval_f = features(&eval_x)?;
    let mse = |p: &Array2<f64>, y: &Array2<f64>| (p - y).mapv(|d| d * d).mean().unwrap_or(0.0);

    let mut opt = AdamState::new(net);
    let mut first = None;
    let mut last = f64::NAN;
    for step in 0..cfg.steps {
        let (pred, cache) = net.forward(train_f.view())?;
        last = mse(&pred, &train_y);
        if !last.is_finite() {
            return Err(Error::Divergence(format!("superset fit diverged at step {step}")));
        }
        if first.is_none() && last <= 1e-3 {
            first = Some(step);
        }
        let grad = (&pred - &train_y) * (2.0 / n as f64);
        let (g, _) = net.backward(&cache, grad.view())?;
        opt.step(net, &g, cfg.lr)?;
    }
    let train_mse = if cfg.steps == 0 { last } else { mse(&net.predict(train_f.view())?, &train_y) };
    Ok(FitResult {
        train_mse,
        eval_mse: mse(&net.predict(eval_f.view())?, &eval_y),
        first_step_below_1e3: first,
    })
}

/// Train both trunks with full-batch Adam on identical data and schedules.
pub fn run_superset(cfg: &SupersetConfig) -> Result<SupersetResult> {
    if cfg.train_points < 2 || cfg.hidden.is_empty() {
        return Err(Error::invalid("superset demo needs >= 2 points and a hidden layer"));
    }
    let freq = FreqMatrix::sample(cfg.mapping_size, 1, cfg.sigma, mix_seed(cfg.seed, 0))?;
    let layers = |input: usize| {
        let mut l = vec![input];
        l.extend(&cfg.hidden);
        l.push(1);
        l
    };
    let mut embedded = MlpParams::init(&layers(freq.feature_dim()), Activation::Tanh, mix_seed(cfg.seed, 1))?;
    let mut raw = MlpParams::init(&layers(1), Activation::Tanh, mix_seed(cfg.seed, 2))?;
    let embedded = fit(&mut embedded, |x| freq.embed_batch(x.view()), cfg)?;
    let raw = fit(&mut raw, |x| Ok(x.clone()), cfg)?;
    Ok(SupersetResult { embedded, raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_frequency_both_fit() {
        let cfg = SupersetConfig {
            cycles: 1.0,
            sigma: 1.0,
            mapping_size: 16,
            hidden: vec![16],
            train_points: 64,
            steps: 3000,
            lr: 1e-2,
            seed: 1,
        };
        let r = run_superset(&cfg).unwrap();
        assert!(r.embedded.eval_mse < 1e-2, "{r:?}");
        assert!(r.raw.eval_mse < 5e-2, "{r:?}");
    }
}
