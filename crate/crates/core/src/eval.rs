//! Error metrics, energy spectra and per-split evaluation reports.

use std::fmt::Write as _;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayView3, Axis, Dimension};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datagen::{BenchmarkId, Dataset, GridMeta};
use crate::error::{Error, Result};
use crate::fft::{transform2, FftPair};
use crate::model::{DeepOnetModel, Variant};
use crate::training::check_compatible;

fn check_same<D: Dimension>(context: &'static str, a: &D, b: &D) -> Result<()> {
    if a != b {
        return Err(Error::shape(context, format!("{:?}", b.slice()), format!("{:?}", a.slice())));
    }
    Ok(())
}

/// `‖pred − truth‖₂ / ‖truth‖₂` over every entry.
pub fn relative_l2<D: Dimension>(
    pred: ndarray::ArrayView<'_, f64, D>,
    truth: ndarray::ArrayView<'_, f64, D>,
) -> Result<f64> {
    check_same("relative_l2", &pred.raw_dim(), &truth.raw_dim())?;
    let mut num = 0.0;
    let mut den = 0.0;
    ndarray::Zip::from(&pred).and(&truth).for_each(|&p, &t| {
        num += (p - t) * (p - t);
        den += t * t;
    });
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((num / den).sqrt())
}

/// Absolute difference per entry.
pub fn pointwise_error(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_same("pointwise_error", &pred.raw_dim(), &truth.raw_dim())?;
    Ok((&pred - &truth).mapv(f64::abs))
}

/// Relative error of the growing prefix `0..=t` of two `(T, c)` trajectories.
/// Entries whose truth prefix has zero norm are `None`.
pub fn cumulative_error(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<Vec<Option<f64>>> {
    check_same("cumulative_error", &pred.raw_dim(), &truth.raw_dim())?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut out = Vec::with_capacity(pred.nrows());
    for (p, t) in pred.rows().into_iter().zip(truth.rows()) {
        for (a, b) in p.iter().zip(t.iter()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        out.push(if den > 0.0 { Some((num / den).sqrt()) } else { None });
    }
    Ok(out)
}

/// `E(k) = |û(k)|²` under the unitary DFT for `k = 0..=n/2`, with the
/// conjugate mode `−k` folded into bin `k`.
pub fn energy_spectrum_1d(field: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let n = field.len();
    if n < 4 {
        return Err(Error::invalid(format!("1-D spectrum needs n >= 4, got {n}")));
    }
    let values: Vec<f64> = field.iter().copied().collect();
    let hat = FftPair::new(n).forward_real(&values);
    let mut e = vec![0.0; n / 2 + 1];
    for (j, c) in hat.iter().enumerate() {
        let k = j.min(n - j);
        e[k] += c.norm_sqr() / n as f64;
    }
    Ok(e)
}

/// Shell sum of `|û|²` (unitary 2-D DFT) over modes with
/// `round(√(k₁² + k₂²)) = k`. Bins run from 0 to the largest occupied shell,
/// which lies past `n/2` because of the corner modes.
pub fn energy_spectrum_2d(field: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (r, c) = field.dim();
    if r != c {
        return Err(Error::shape("energy_spectrum_2d (square field)", format!("({r}, {r})"), format!("({r}, {c})")));
    }
    if r < 4 {
        return Err(Error::invalid(format!("2-D spectrum needs n >= 4, got {r}")));
    }
    let n = r;
    let mut data = field.mapv(|v| Complex64::new(v, 0.0));
    transform2(&mut data, false);
    let half = (n / 2) as f64;
    let bins = (half * std::f64::consts::SQRT_2).round() as usize + 1;
    let mut e = vec![0.0; bins];
    let norm = 1.0 / (n * n) as f64;
    for ((i, j), v) in data.indexed_iter() {
        let k1 = i.min(n - i) as f64;
        let k2 = j.min(n - j) as f64;
        let k = (k1 * k1 + k2 * k2).sqrt().round() as usize;
        e[k] += v.norm_sqr() * norm;
    }
    Ok(e)
}

/// Truth and prediction spectra on shared bins `k = 0, 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub k: Vec<usize>,
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
}

impl SpectrumTable {
    pub fn new(truth: Vec<f64>, prediction: Vec<f64>) -> Result<Self> {
        if truth.len() != prediction.len() {
            return Err(Error::shape("spectrum bins", truth.len().to_string(), prediction.len().to_string()));
        }
        Ok(Self {
            k: (0..truth.len()).collect(),
            truth,
            prediction,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,truth,prediction\n");
        for i in 0..self.k.len() {
            let _ = writeln!(out, "{},{},{}", self.k[i], self.truth[i], self.prediction[i]);
        }
        out
    }
}

/// Spectrum layout appropriate to a benchmark's output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Square spatial field.
    Shell2d,
    /// `(t, x)` field: 1-D spectrum along the last axis averaged over time.
    TimeAveraged1d,
}

pub fn spectrum_kind(grid: &GridMeta) -> Option<SpectrumKind> {
    if grid.axes.len() != 2 || grid.channels != 1 {
        return None;
    }
    if grid.axes[0].name == "t" {
        (grid.axes[1].len >= 4).then_some(SpectrumKind::TimeAveraged1d)
    } else if grid.axes[0].len == grid.axes[1].len {
        Some(SpectrumKind::Shell2d)
    } else {
        None
    }
}

/// Spectrum of one single-channel field stored in grid order, or `None`
/// for grids without a spatial axis to transform (Lorenz-63).
pub fn field_spectrum(grid: &GridMeta, field: ArrayView2<'_, f64>) -> Result<Option<Vec<f64>>> {
    let Some(kind) = spectrum_kind(grid) else {
        return Ok(None);
    };
    if field.dim() != (grid.num_points(), 1) {
        return Err(Error::shape("field_spectrum", format!("({}, 1)", grid.num_points()), format!("{:?}", field.dim())));
    }
    let (a, b) = (grid.axes[0].len, grid.axes[1].len);
    let flat: Vec<f64> = field.iter().copied().collect();
    let plane = Array2::from_shape_vec((a, b), flat).expect("grid shape");
    match kind {
        SpectrumKind::Shell2d => energy_spectrum_2d(plane.view()).map(Some),
        SpectrumKind::TimeAveraged1d => {
            let mut acc = vec![0.0; b / 2 + 1];
            for row in plane.rows() {
                for (o, v) in acc.iter_mut().zip(energy_spectrum_1d(row)?) {
                    *o += v;
                }
            }
            acc.iter_mut().for_each(|v| *v /= a as f64);
            Ok(Some(acc))
        }
    }
}

pub fn spectrum_table(grid: &GridMeta, truth: ArrayView2<'_, f64>, pred: ArrayView2<'_, f64>) -> Result<Option<SpectrumTable>> {
    match (field_spectrum(grid, truth)?, field_spectrum(grid, pred)?) {
        (Some(t), Some(p)) => SpectrumTable::new(t, p).map(Some),
        _ => Ok(None),
    }
}

/// Per-sample relative ℓ² on a holdout split with aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: BenchmarkId,
    pub variant: Variant,
    pub sample_count: usize,
    /// Dataset indices of the evaluated samples.
    pub sample_indices: Vec<usize>,
    pub per_sample_rel_l2: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Average of the two middle values for even counts.
    pub median: f64,
    /// Dataset indices of the lowest, middle and highest error samples.
    pub best_index: usize,
    pub median_index: usize,
    pub worst_index: usize,
}

impl EvalReport {
    pub fn from_errors(
        benchmark: BenchmarkId,
        variant: Variant,
        sample_indices: Vec<usize>,
        per_sample_rel_l2: Vec<f64>,
    ) -> Result<Self> {
        let n = per_sample_rel_l2.len();
        if n == 0 {
            return Err(Error::invalid("cannot report on an empty split"));
        }
        if sample_indices.len() != n {
            return Err(Error::shape("report indices", n.to_string(), sample_indices.len().to_string()));
        }
        if per_sample_rel_l2.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Divergence("non-finite relative error in report".into()));
        }
        let mean = per_sample_rel_l2.iter().sum::<f64>() / n as f64;
        let std = (per_sample_rel_l2.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| per_sample_rel_l2[a].total_cmp(&per_sample_rel_l2[b]).then(a.cmp(&b)));
        let median = if n % 2 == 1 {
            per_sample_rel_l2[order[n / 2]]
        } else {
            0.5 * (per_sample_rel_l2[order[n / 2 - 1]] + per_sample_rel_l2[order[n / 2]])
        };
        Ok(Self {
            benchmark,
            variant,
            sample_count: n,
            best_index: sample_indices[order[0]],
            median_index: sample_indices[order[(n - 1) / 2]],
            worst_index: sample_indices[order[n - 1]],
            min: per_sample_rel_l2[order[0]],
            max: per_sample_rel_l2[order[n - 1]],
            mean,
            std,
            median,
            sample_indices,
            per_sample_rel_l2,
        })
    }

    /// `index,rel_l2` per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,rel_l2\n");
        for (i, e) in self.sample_indices.iter().zip(&self.per_sample_rel_l2) {
            let _ = writeln!(out, "{i},{e}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed(format!("report JSON: {e}")))
    }

    /// Named strata (`best`, `median`, `worst`) to dataset indices.
    pub fn stratum(&self, name: &str) -> Option<usize> {
        match name {
            "best" => Some(self.best_index),
            "median" => Some(self.median_index),
            "worst" => Some(self.worst_index),
            _ => None,
        }
    }
}

/// One row per report: benchmark, variant, mean and std of the relative
/// error in percent, sample count.
pub fn paired_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("benchmark,variant,mean_rel_l2_pct,std_rel_l2_pct,count\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{}",
            r.benchmark,
            r.variant,
            100.0 * r.mean,
            100.0 * r.std,
            r.sample_count
        );
    }
    out
}

/// Predictions of `model` for dataset samples `indices` over the full grid,
/// `(len, num_points, channels)`.
pub fn predict_samples(model: &DeepOnetModel, dataset: &Dataset, indices: &[usize]) -> Result<ndarray::Array3<f64>> {
    let u = dataset.branch.select(Axis(0), indices);
    model.forward(u.view(), dataset.coords.view())
}

/// Evaluate on the dataset's holdout split. Samples are processed in
/// parallel chunks; results do not depend on the thread count.
pub fn evaluate_model(model: &DeepOnetModel, dataset: &Dataset) -> Result<EvalReport> {
    check_compatible(model, dataset)?;
    let indices: Vec<usize> = dataset.test_indices().collect();
    evaluate_indices(model, dataset, &indices)
}

pub fn evaluate_indices(model: &DeepOnetModel, dataset: &Dataset, indices: &[usize]) -> Result<EvalReport> {
    check_compatible(model, dataset)?;
    if indices.is_empty() {
        return Err(Error::invalid("evaluation split is empty"));
    }
    const CHUNK: usize = 8;
    let errors: Vec<Vec<f64>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let pred = predict_samples(model, dataset, chunk)?;
            chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| relative_l2(pred.index_axis(Axis(0), k), dataset.targets.index_axis(Axis(0), i)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    EvalReport::from_errors(
        dataset.benchmark(),
        model.variant(),
        indices.to_vec(),
        errors.into_iter().flatten().collect(),
    )
}

/// CSV of one sample's fields: grid coordinates (physical units), then
/// truth, prediction and absolute error per channel.
pub fn field_csv(grid: &GridMeta, truth: ArrayView2<'_, f64>, pred: ArrayView2<'_, f64>) -> Result<String> {
    let err = pointwise_error(pred, truth)?;
    let shape = grid.shape();
    let mut out = String::new();
    let names: Vec<&str> = grid.axes.iter().map(|a| a.name.as_str()).collect();
    out.push_str(&names.join(","));
    for c in 0..grid.channels {
        let _ = write!(out, ",truth_{c},pred_{c},abs_err_{c}");
    }
    out.push('\n');
    let mut index = vec![0usize; shape.len()];
    for j in 0..grid.num_points() {
        let mut rem = j;
        for a in (0..shape.len()).rev() {
            index[a] = rem % shape[a];
            rem /= shape[a];
        }
        let pos: Vec<String> = index
            .iter()
            .enumerate()
            .map(|(a, &i)| grid.axes[a].position(i).to_string())
            .collect();
        out.push_str(&pos.join(","));
        for c in 0..grid.channels {
            let _ = write!(out, ",{},{},{}", truth[[j, c]], pred[[j, c]], err[[j, c]]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Cumulative error curve over the time axis for grids whose first axis is
/// time; the remaining axes and channels are pooled per time step.
pub fn time_cumulative_error(grid: &GridMeta, truth: ArrayView2<'_, f64>, pred: ArrayView2<'_, f64>) -> Result<Option<Vec<Option<f64>>>> {
    if grid.axes.first().map(|a| a.name.as_str()) != Some("t") {
        return Ok(None);
    }
    let steps = grid.axes[0].len;
    let per_step = grid.num_points() / steps * grid.channels;
    let reshape = |v: ArrayView2<'_, f64>| -> Array2<f64> {
        Array2::from_shape_vec((steps, per_step), v.iter().copied().collect()).expect("grid shape")
    };
    check_same("time_cumulative_error", &pred.raw_dim(), &truth.raw_dim())?;
    cumulative_error(reshape(pred).view(), reshape(truth).view()).map(Some)
}

pub fn cumulative_csv(curve: &[Option<f64>], times: impl Iterator<Item = f64>) -> String {
    let mut out = String::from("t,cumulative_rel_l2\n");
    for (t, v) in times.zip(curve) {
        match v {
            Some(v) => {
                let _ = writeln!(out, "{t},{v}");
            }
            None => {
                let _ = writeln!(out, "{t},");
            }
        }
    }
    out
}

/// Relative ℓ² between per-sample predictions and truth stacked as `(n, q, c)`.
pub fn rel_l2_per_sample(pred: ArrayView3<'_, f64>, truth: ArrayView3<'_, f64>) -> Result<Vec<f64>> {
    check_same("rel_l2_per_sample", &pred.raw_dim(), &truth.raw_dim())?;
    (0..pred.len_of(Axis(0)))
        .map(|i| relative_l2(pred.slice(s![i, .., ..]), truth.slice(s![i, .., ..])))
        .collect()
}
