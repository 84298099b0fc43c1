//! Benchmark definitions and deterministic sample generation.

pub mod allen_cahn;
pub mod burgers;
mod dataset;
pub mod grf;
pub mod ks;
pub mod lorenz;
pub mod naca;
pub mod params;
pub mod poisson;
pub mod sdf;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub use dataset::{generate_dataset, Dataset, GenerateOptions, MAX_REDRAWS};
pub use params::{
    AllenCahnParams, BurgersParams, EikonalParams, KsParams, Lorenz63Params, Lorenz96Params,
    PoissonParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkId {
    #[serde(rename = "poisson2d")]
    Poisson2d,
    #[serde(rename = "burgers1d")]
    Burgers1d,
    #[serde(rename = "lorenz63")]
    Lorenz63,
    #[serde(rename = "eikonal")]
    Eikonal,
    #[serde(rename = "lorenz96")]
    Lorenz96,
    #[serde(rename = "allen_cahn")]
    AllenCahn,
    #[serde(rename = "ks")]
    Ks,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 7] = [
        BenchmarkId::Poisson2d,
        BenchmarkId::Burgers1d,
        BenchmarkId::Lorenz63,
        BenchmarkId::Eikonal,
        BenchmarkId::Lorenz96,
        BenchmarkId::AllenCahn,
        BenchmarkId::Ks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Poisson2d => "poisson2d",
            BenchmarkId::Burgers1d => "burgers1d",
            BenchmarkId::Lorenz63 => "lorenz63",
            BenchmarkId::Eikonal => "eikonal",
            BenchmarkId::Lorenz96 => "lorenz96",
            BenchmarkId::AllenCahn => "allen_cahn",
            BenchmarkId::Ks => "ks",
        }
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&b| b == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|b| b.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|b| b.name()).collect();
                Error::invalid(format!("unknown benchmark `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BenchmarkParams {
    Poisson2d(PoissonParams),
    Burgers1d(BurgersParams),
    Lorenz63(Lorenz63Params),
    Eikonal(EikonalParams),
    Lorenz96(Lorenz96Params),
    AllenCahn(AllenCahnParams),
    Ks(KsParams),
}

macro_rules! each_params {
    ($value:expr, $p:ident => $body:expr) => {
        match $value {
            BenchmarkParams::Poisson2d($p) => $body,
            BenchmarkParams::Burgers1d($p) => $body,
            BenchmarkParams::Lorenz63($p) => $body,
            BenchmarkParams::Eikonal($p) => $body,
            BenchmarkParams::Lorenz96($p) => $body,
            BenchmarkParams::AllenCahn($p) => $body,
            BenchmarkParams::Ks($p) => $body,
        }
    };
}

impl BenchmarkParams {
    pub fn default_for(id: BenchmarkId) -> Self {
        match id {
            BenchmarkId::Poisson2d => Self::Poisson2d(Default::default()),
            BenchmarkId::Burgers1d => Self::Burgers1d(Default::default()),
            BenchmarkId::Lorenz63 => Self::Lorenz63(Default::default()),
            BenchmarkId::Eikonal => Self::Eikonal(Default::default()),
            BenchmarkId::Lorenz96 => Self::Lorenz96(Default::default()),
            BenchmarkId::AllenCahn => Self::AllenCahn(Default::default()),
            BenchmarkId::Ks => Self::Ks(Default::default()),
        }
    }

    pub fn id(&self) -> BenchmarkId {
        match self {
            Self::Poisson2d(_) => BenchmarkId::Poisson2d,
            Self::Burgers1d(_) => BenchmarkId::Burgers1d,
            Self::Lorenz63(_) => BenchmarkId::Lorenz63,
            Self::Eikonal(_) => BenchmarkId::Eikonal,
            Self::Lorenz96(_) => BenchmarkId::Lorenz96,
            Self::AllenCahn(_) => BenchmarkId::AllenCahn,
            Self::Ks(_) => BenchmarkId::Ks,
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        each_params!(self, p => p.entries())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        each_params!(self, p => p.set(key, value))
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> Result<()> {
        each_params!(self, p => p.set_f64(key, value))
    }
}

/// One axis of a benchmark's output grid. Physical position of index `i`
/// is `start + i·step`; the network sees `(position − lo) / (hi − lo)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub start: f64,
    pub step: f64,
    pub len: usize,
    pub lo: f64,
    pub hi: f64,
}

impl GridAxis {
    fn new(name: &str, start: f64, step: f64, len: usize, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            start,
            step,
            len,
            lo,
            hi,
        }
    }

    pub fn position(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn normalized(&self, i: usize) -> f64 {
        (self.position(i) - self.lo) / (self.hi - self.lo)
    }
}

/// Output grid layout. Targets are stored row-major over `axes` (last axis
/// fastest) with channels innermost; coordinate column `c` is the normalized
/// position along `axes[coord_axes[c]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub axes: Vec<GridAxis>,
    pub coord_axes: Vec<usize>,
    pub channels: usize,
}

impl GridMeta {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len).collect()
    }

    pub fn num_points(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    pub fn coord_dim(&self) -> usize {
        self.coord_axes.len()
    }

    /// Normalized query coordinates in storage order, `(num_points, coord_dim)`.
    pub fn coords(&self) -> Array2<f64> {
        let shape = self.shape();
        let q = self.num_points();
        let mut out = Array2::zeros((q, self.coord_dim()));
        let mut index = vec![0usize; shape.len()];
        for j in 0..q {
            let mut rem = j;
            for a in (0..shape.len()).rev() {
                index[a] = rem % shape[a];
                rem /= shape[a];
            }
            for (c, &a) in self.coord_axes.iter().enumerate() {
                out[[j, c]] = self.axes[a].normalized(index[a]);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.channels == 0 {
            return Err(Error::invalid("grid needs at least one axis and one channel"));
        }
        for a in &self.axes {
            if a.len < 2 || !(a.hi > a.lo) || !a.step.is_finite() || !a.start.is_finite() {
                return Err(Error::invalid(format!("degenerate grid axis `{}`", a.name)));
            }
        }
        if self.coord_axes.iter().any(|&a| a >= self.axes.len()) {
            return Err(Error::invalid("coordinate column refers to a missing axis"));
        }
        Ok(())
    }
}

/// One generated input/output pair; `target` is `(num_points, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub branch_input: Vec<f64>,
    pub target: Array2<f64>,
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub params: BenchmarkParams,
}

impl BenchmarkSpec {
    pub fn new(id: BenchmarkId) -> Self {
        Self {
            params: BenchmarkParams::default_for(id),
        }
    }

    pub fn id(&self) -> BenchmarkId {
        self.params.id()
    }

    /// Override one parameter by name. Cross-parameter constraints are
    /// checked by `validate`, so overrides can be applied in any order.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<()> {
        self.params.set(key, value)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("{}: {msg}", self.id())));
        match &self.params {
            BenchmarkParams::Poisson2d(p) => {
                if p.n < 8 || p.sensor_stride == 0 || p.sensor_stride > p.n {
                    return fail(format!("need n >= 8 and 1 <= sensor_stride <= n, got n={} stride={}", p.n, p.sensor_stride));
                }
                if !(p.alpha > 0.0 && p.tau.is_finite()) {
                    return fail("alpha must be positive".into());
                }
            }
            BenchmarkParams::Burgers1d(p) => {
                if p.nx < 4 || !p.nx.is_power_of_two() || p.nt < 2 || !(p.nu > 0.0) {
                    return fail("need nx a power of two >= 4, nt >= 2, nu > 0".into());
                }
            }
            BenchmarkParams::Lorenz63(p) => {
                if p.steps < 2 || !(p.final_time > 0.0) || !(p.x0_max >= p.x0_min) {
                    return fail("need steps >= 2, final_time > 0, x0_min <= x0_max".into());
                }
            }
            BenchmarkParams::Eikonal(p) => {
                if p.n < 16 || p.sensor_stride == 0 || p.sensor_stride > p.n {
                    return fail("need n >= 16 and 1 <= sensor_stride <= n".into());
                }
                let in_range = |lo: f64, hi: f64, range: (f64, f64)| range.0 <= lo && lo <= hi && hi <= range.1;
                if !in_range(p.m_min, p.m_max, (0.0, naca::CAMBER_RANGE.1))
                    || !in_range(p.p_min, p.p_max, naca::POSITION_RANGE)
                    || !in_range(p.t_min, p.t_max, naca::THICKNESS_RANGE)
                {
                    return fail("NACA parameter ranges outside m in [0, 0.09], p in [0.1, 0.7], t in [0.1, 0.4]".into());
                }
            }
            BenchmarkParams::Lorenz96(p) => {
                if p.n < 4 || p.keep < 2 || p.keep > p.steps + 1 || !(p.dt > 0.0) {
                    return fail("need n >= 4, 2 <= keep <= steps + 1, dt > 0".into());
                }
            }
            BenchmarkParams::AllenCahn(p) => {
                let dx = allen_cahn::spacing(p.nx.max(1));
                if p.nx < 3 || p.nt < 2 || !(p.dt > 0.0) || p.eps < 0.0 || p.eps * p.dt / (dx * dx) > 0.5 {
                    return fail("need nx >= 3, nt >= 2 and eps*dt/dx^2 <= 0.5".into());
                }
            }
            BenchmarkParams::Ks(p) => {
                let total = p.final_time / p.dt;
                let steps = total.round() as usize;
                if p.nx < 16
                    || !p.nx.is_power_of_two()
                    || p.nt < 2
                    || !(p.l > 0.0 && p.dt > 0.0 && p.final_time > 0.0)
                    || (total - steps as f64).abs() > 1e-9 * total
                    || !steps.is_multiple_of(p.nt - 1)
                {
                    return fail("need nx a power of two >= 16 and final_time/dt a multiple of nt - 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn sensor_count(&self) -> usize {
        match &self.params {
            BenchmarkParams::Poisson2d(p) => p.n.div_ceil(p.sensor_stride.max(1)).pow(2),
            BenchmarkParams::Burgers1d(p) => p.nx,
            BenchmarkParams::Lorenz63(_) => 1,
            BenchmarkParams::Eikonal(p) => p.n.div_ceil(p.sensor_stride.max(1)).pow(2),
            BenchmarkParams::Lorenz96(p) => p.n,
            BenchmarkParams::AllenCahn(p) => p.nx,
            BenchmarkParams::Ks(p) => p.nx,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.grid().channels
    }

    pub fn coord_dim(&self) -> usize {
        self.grid().coord_dim()
    }

    pub fn grid(&self) -> GridMeta {
        let ax = GridAxis::new;
        match &self.params {
            BenchmarkParams::Poisson2d(p) => {
                let h = 1.0 / (p.n.max(2) - 1) as f64;
                GridMeta {
                    axes: vec![ax("x", 0.0, h, p.n, 0.0, 1.0), ax("y", 0.0, h, p.n, 0.0, 1.0)],
                    coord_axes: vec![0, 1],
                    channels: 1,
                }
            }
            BenchmarkParams::Burgers1d(p) => GridMeta {
                axes: vec![
                    ax("t", 0.0, burgers::FINAL_TIME / (p.nt.max(2) - 1) as f64, p.nt, 0.0, burgers::FINAL_TIME),
                    ax("x", 0.0, 1.0 / p.nx as f64, p.nx, 0.0, 1.0),
                ],
                coord_axes: vec![1, 0],
                channels: 1,
            },
            BenchmarkParams::Lorenz63(p) => GridMeta {
                axes: vec![ax("t", 0.0, p.final_time / (p.steps.max(2) - 1) as f64, p.steps, 0.0, p.final_time)],
                coord_axes: vec![0],
                channels: 3,
            },
            BenchmarkParams::Eikonal(p) => {
                let hi = (p.n.max(2) - 1) as f64;
                GridMeta {
                    axes: vec![ax("row", 0.0, 1.0, p.n, 0.0, hi), ax("col", 0.0, 1.0, p.n, 0.0, hi)],
                    coord_axes: vec![1, 0],
                    channels: 1,
                }
            }
            BenchmarkParams::Lorenz96(p) => {
                let t0 = (p.steps + 1).saturating_sub(p.keep) as f64 * p.dt;
                let t1 = p.steps as f64 * p.dt;
                GridMeta {
                    axes: vec![ax("t", t0, p.dt, p.keep, t0, t1), ax("i", 0.0, 1.0, p.n, 0.0, p.n as f64)],
                    coord_axes: vec![0, 1],
                    channels: 1,
                }
            }
            BenchmarkParams::AllenCahn(p) => {
                let dx = allen_cahn::spacing(p.nx);
                GridMeta {
                    axes: vec![
                        ax("t", p.dt, p.dt, p.nt, 0.0, p.dt * p.nt as f64),
                        ax("x", -1.0, dx, p.nx, -1.0, 1.0),
                    ],
                    coord_axes: vec![1, 0],
                    channels: 1,
                }
            }
            BenchmarkParams::Ks(p) => {
                let period = 2.0 * PI * p.l;
                GridMeta {
                    axes: vec![
                        ax("t", 0.0, p.final_time / (p.nt.max(2) - 1) as f64, p.nt, 0.0, p.final_time),
                        ax("x", 0.0, period / p.nx as f64, p.nx, 0.0, period),
                    ],
                    coord_axes: vec![1, 0],
                    channels: 1,
                }
            }
        }
    }

    /// Draw the input function for `seed` and solve for its target.
    pub fn generate_sample(&self, seed: u64) -> Result<SamplePair> {
        self.validate()?;
        let (branch_input, target) = match &self.params {
            BenchmarkParams::Poisson2d(p) => {
                let f = grf::sample_grf_2d(p.n, p.alpha, p.tau, seed)?;
                let u = poisson::solve_poisson_fd(&f)?;
                let branch = strided(&f, p.sensor_stride);
                (branch, column(u.into_iter().collect()))
            }
            BenchmarkParams::Burgers1d(p) => {
                let s = grf::sample_burgers_ic(p.nx, seed)?;
                let u = burgers::solve_burgers(&s, p.nu, p.nt)?;
                (s, column(u.into_iter().collect()))
            }
            BenchmarkParams::Lorenz63(p) => {
                let mut rng = rng_from_seed(seed);
                let x0 = p.x0_min + (p.x0_max - p.x0_min) * rng.gen::<f64>();
                let sys = lorenz::Lorenz63 {
                    sigma: p.sigma,
                    rho: p.rho,
                    beta: p.beta,
                };
                let traj = sys.trajectory([x0, p.y0, p.z0], p.final_time, p.steps)?;
                (vec![x0], traj)
            }
            BenchmarkParams::Eikonal(p) => {
                let mut rng = rng_from_seed(seed);
                let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
                let m = uniform(p.m_min, p.m_max);
                let pp = uniform(p.p_min, p.p_max);
                let t = uniform(p.t_min, p.t_max);
                let mask = naca::naca_airfoil_mask(m, pp, t, p.n)?;
                let sdf = sdf::signed_distance_field(&mask)?;
                let branch = strided(&mask.mapv(f64::from), p.sensor_stride);
                (branch, column(sdf.into_iter().collect()))
            }
            BenchmarkParams::Lorenz96(p) => {
                let mut rng = rng_from_seed(seed);
                let x0: Vec<f64> = (0..p.n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        p.forcing + p.perturbation * z
                    })
                    .collect();
                let traj = lorenz::integrate_lorenz96(&x0, p.forcing, p.dt, p.steps, p.keep)?;
                (x0, column(traj.into_iter().collect()))
            }
            BenchmarkParams::AllenCahn(p) => {
                let s = allen_cahn::sample_ac_initial(seed, p.nx)?;
                let u = allen_cahn::solve_allen_cahn(&s, p.eps, p.dt, p.nt)?;
                (s, column(u.into_iter().collect()))
            }
            BenchmarkParams::Ks(p) => {
                let u0 = ks::sample_ks_initial(seed, p.nx, p.l)?;
                let u = ks::solve_ks(&u0, p.l, p.final_time, p.dt, p.nt)?;
                (u0, column(u.into_iter().collect()))
            }
        };
        let pair = SamplePair {
            branch_input,
            target,
            sample_seed: seed,
        };
        self.check_sample(&pair)?;
        Ok(pair)
    }

    /// Shape, finiteness and per-benchmark conservation/dissipation checks.
    pub fn check_sample(&self, pair: &SamplePair) -> Result<()> {
        let grid = self.grid();
        let expected = (grid.num_points(), grid.channels);
        if pair.branch_input.len() != self.sensor_count() {
            return Err(Error::shape("sample branch input", self.sensor_count(), pair.branch_input.len()));
        }
        if pair.target.dim() != expected {
            return Err(Error::shape("sample target", format!("{expected:?}"), format!("{:?}", pair.target.dim())));
        }
        if !pair.branch_input.iter().chain(pair.target.iter()).all(|v| v.is_finite()) {
            return Err(Error::Divergence(format!("{} sample contains non-finite values", self.id())));
        }
        let violation = |what: String| {
            Err(Error::SolverFailure {
                solver: "invariant",
                step: 0,
                reason: format!("{}: {what}", self.id()),
            })
        };
        let rows = |nrows: usize| pair.target.view().into_shape_with_order((nrows, expected.0 / nrows)).unwrap();
        match &self.params {
            BenchmarkParams::Burgers1d(p) => {
                let u = rows(p.nt);
                let mean0 = u.row(0).mean().unwrap();
                let mut prev = f64::INFINITY;
                for (t, row) in u.rows().into_iter().enumerate() {
                    let mean = row.mean().unwrap();
                    if (mean - mean0).abs() > 1e-8 {
                        return violation(format!("mean drifted by {:.3e} at snapshot {t}", mean - mean0));
                    }
                    let energy = row.dot(&row);
                    if energy > prev * (1.0 + 1e-12) {
                        return violation(format!("energy increased at snapshot {t}"));
                    }
                    prev = energy;
                }
            }
            BenchmarkParams::Ks(p) => {
                let u = rows(p.nt);
                let mean0 = pair.branch_input.iter().sum::<f64>() / p.nx as f64;
                for (t, row) in u.rows().into_iter().enumerate() {
                    if (row.mean().unwrap() - mean0).abs() > 1e-8 {
                        return violation(format!("mean drifted at snapshot {t}"));
                    }
                }
            }
            BenchmarkParams::AllenCahn(_) => {
                let bound = pair.branch_input.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if pair.target.iter().any(|v| v.abs() > bound + 1e-12) {
                    return violation(format!("state left [-{bound}, {bound}]"));
                }
            }
            BenchmarkParams::Eikonal(p) => {
                let peak = pair.target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if peak != 1.0 {
                    return violation(format!("max |s| = {peak}, expected 1"));
                }
                let side = p.n.div_ceil(p.sensor_stride);
                for (k, &inside) in pair.branch_input.iter().enumerate() {
                    let (r, c) = (k / side * p.sensor_stride, k % side * p.sensor_stride);
                    let s = pair.target[[r * p.n + c, 0]];
                    if (inside == 1.0) != (s < 0.0) {
                        return violation(format!("sign of s disagrees with the mask at pixel ({r}, {c})"));
                    }
                }
            }
            BenchmarkParams::Poisson2d(p) => {
                let u = rows(p.n);
                let n = p.n;
                for i in 0..n {
                    if u[[0, i]] != 0.0 || u[[n - 1, i]] != 0.0 || u[[i, 0]] != 0.0 || u[[i, n - 1]] != 0.0 {
                        return violation("boundary values not zero".into());
                    }
                }
            }
            BenchmarkParams::Lorenz63(_) => {
                if pair.target[[0, 0]] != pair.branch_input[0] {
                    return violation("trajectory does not start at x0".into());
                }
            }
            BenchmarkParams::Lorenz96(_) => {}
        }
        Ok(())
    }
}

fn strided(field: &Array2<f64>, stride: usize) -> Vec<f64> {
    field
        .slice(ndarray::s![..;stride, ..;stride])
        .iter()
        .copied()
        .collect()
}

fn column(values: Vec<f64>) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_vec((n, 1), values).expect("column shape")
}
