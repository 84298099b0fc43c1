//! Binary dataset and checkpoint files.
//!
//! Both are little-endian single-file containers ending in a CRC32 of every
//! preceding byte. The layouts are listed field by field in `docs/formats.md`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::datagen::{BenchmarkId, BenchmarkParams, BenchmarkSpec, Dataset, GridAxis, GridMeta};
use crate::error::{Error, Result};
use crate::fourier::FreqMatrix;
use crate::model::{DeepOnetModel, EmbedConfig, ModelConfig, Normalization, Variant};
use crate::nn::{Activation, AdamState, MlpGrads, MlpParams};
use crate::training::{LrSchedule, TrainConfig, Trainer};

pub const DATASET_MAGIC: [u8; 4] = *b"FEDO";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FEDC";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

const NO_BENCHMARK: u8 = 0xFF;

/// Write through a sibling temporary file and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

#[derive(Default)]
struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }
    fn name(&mut self, s: &str) {
        debug_assert!(s.len() <= u8::MAX as usize);
        self.u8(s.len() as u8);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Malformed(format!(
                "truncated: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Malformed(format!("count {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// `n` floats, checking the remaining length before allocating.
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Malformed("array too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn name(&mut self) -> Result<String> {
        let len = self.u8()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Malformed("name is not UTF-8".into()))
    }
    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// Check magic, version and CRC; returns a decoder positioned after the
/// version field and limited to the bytes before the CRC.
fn open<'a>(bytes: &'a [u8], magic: [u8; 4], version: u32) -> Result<Dec<'a>> {
    if bytes.len() < 12 {
        return Err(Error::Malformed(format!("file too short ({} bytes)", bytes.len())));
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    let v = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if v != version {
        return Err(Error::VersionMismatch {
            found: v,
            supported: version,
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(Dec { buf: body, pos: 8 })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(magic: [u8; 4], version: u32) -> Enc {
    let mut e = Enc::default();
    e.buf.extend_from_slice(&magic);
    e.u32(version);
    e
}

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let grid = d.grid();
    let mut e = header(DATASET_MAGIC, DATASET_VERSION);
    e.u8(d.benchmark().code());
    e.buf.extend_from_slice(&[0, 0, 0]);
    e.u64(d.base_seed);
    e.usize(d.count());
    e.usize(d.split);
    e.u64(d.redraws);
    e.usize(d.branch.ncols());
    e.usize(d.num_points());
    e.usize(grid.coord_dim());
    e.usize(grid.channels);
    let params = d.spec.params.entries();
    e.u32(params.len() as u32);
    for (k, v) in params {
        e.name(k);
        e.f64(v);
    }
    e.u32(grid.axes.len() as u32);
    for a in &grid.axes {
        e.name(&a.name);
        e.f64(a.start);
        e.f64(a.step);
        e.usize(a.len);
        e.f64(a.lo);
        e.f64(a.hi);
    }
    e.u32(grid.coord_axes.len() as u32);
    for &c in &grid.coord_axes {
        e.u32(c as u32);
    }
    for &s in &d.sample_seeds {
        e.u64(s);
    }
    e.f64s(d.branch.iter());
    e.f64s(d.coords.iter());
    e.f64s(d.targets.iter());
    e.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = open(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let code = r.u8()?;
    let id = BenchmarkId::from_code(code).ok_or_else(|| Error::Malformed(format!("unknown benchmark code {code}")))?;
    r.take(3)?;
    let base_seed = r.u64()?;
    let count = r.usize()?;
    let split = r.usize()?;
    let redraws = r.u64()?;
    let sensors = r.usize()?;
    let points = r.usize()?;
    let coord_dim = r.usize()?;
    let channels = r.usize()?;
    let mut params = BenchmarkParams::default_for(id);
    for _ in 0..r.u32()? {
        let key = r.name()?;
        let value = r.f64()?;
        params
            .set_f64(&key, value)
            .map_err(|e| Error::Malformed(format!("parameter {key}: {e}")))?;
    }
    let mut axes = Vec::new();
    for _ in 0..r.u32()? {
        axes.push(GridAxis {
            name: r.name()?,
            start: r.f64()?,
            step: r.f64()?,
            len: r.usize()?,
            lo: r.f64()?,
            hi: r.f64()?,
        });
    }
    let mut coord_axes = Vec::new();
    for _ in 0..r.u32()? {
        coord_axes.push(r.u32()? as usize);
    }
    let stored_grid = GridMeta {
        axes,
        coord_axes,
        channels,
    };
    let spec = BenchmarkSpec { params };
    if stored_grid != spec.grid() {
        return Err(Error::Malformed("grid metadata disagrees with stored parameters".into()));
    }
    let seeds = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let branch = r.f64s(count.saturating_mul(sensors))?;
    let coords = r.f64s(points.saturating_mul(coord_dim))?;
    let targets = r.f64s(count.saturating_mul(points).saturating_mul(channels))?;
    r.done()?;
    let branch = Array2::from_shape_vec((count, sensors), branch).map_err(|e| Error::Malformed(e.to_string()))?;
    let coords = Array2::from_shape_vec((points, coord_dim), coords).map_err(|e| Error::Malformed(e.to_string()))?;
    let targets =
        Array3::from_shape_vec((count, points, channels), targets).map_err(|e| Error::Malformed(e.to_string()))?;
    Dataset::from_parts(spec, base_seed, branch, coords, targets, seeds, split, redraws)
        .map_err(|e| Error::Malformed(format!("inconsistent dataset header: {e}")))
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(d))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_file(path)?)
}

/// Everything needed to resume training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DeepOnetModel,
    pub model_seed: u64,
    pub step: usize,
    pub train_config: TrainConfig,
    pub branch_opt: AdamState,
    pub trunk_opt: AdamState,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, model_seed: u64) -> Self {
        Self {
            model: trainer.model.clone(),
            model_seed,
            step: trainer.step,
            train_config: trainer.config,
            branch_opt: trainer.branch_opt.clone(),
            trunk_opt: trainer.trunk_opt.clone(),
        }
    }

    pub fn into_trainer(self) -> Trainer {
        Trainer {
            model: self.model,
            branch_opt: self.branch_opt,
            trunk_opt: self.trunk_opt,
            step: self.step,
            config: self.train_config,
        }
    }

    /// Reject a checkpoint whose model configuration differs from `expected`.
    pub fn check_config(&self, expected: &ModelConfig) -> Result<()> {
        let have = self.model.config();
        if have != expected {
            return Err(Error::InconsistentConfig(format!(
                "checkpoint holds a {} model {:?}, expected {} {:?}",
                have.variant, have.trunk_layers, expected.variant, expected.trunk_layers
            )));
        }
        Ok(())
    }
}

fn put_layers(e: &mut Enc, layers: &[usize]) {
    e.u32(layers.len() as u32);
    for &l in layers {
        e.usize(l);
    }
}

fn get_layers(r: &mut Dec<'_>) -> Result<Vec<usize>> {
    let n = r.u32()? as usize;
    (0..n).map(|_| r.usize()).collect()
}

fn put_flat(e: &mut Enc, flat: &[f64]) {
    e.usize(flat.len());
    e.f64s(flat);
}

fn get_flat(r: &mut Dec<'_>, expected: usize) -> Result<Vec<f64>> {
    let n = r.usize()?;
    if n != expected {
        return Err(Error::InconsistentConfig(format!("stored {n} values, configuration needs {expected}")));
    }
    r.f64s(n)
}

fn put_adam(e: &mut Enc, s: &AdamState) {
    e.u64(s.step);
    e.f64(s.beta1);
    e.f64(s.beta2);
    e.f64(s.epsilon);
    put_flat(e, &s.m.to_flat());
    put_flat(e, &s.v.to_flat());
}

fn grads_from_flat(params: &MlpParams, flat: &[f64]) -> MlpGrads {
    let mut g = MlpGrads::zeros_like(params);
    let mut it = flat.iter().copied();
    for (w, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
        w.iter_mut().for_each(|v| *v = it.next().unwrap());
        b.iter_mut().for_each(|v| *v = it.next().unwrap());
    }
    g
}

fn get_adam(r: &mut Dec<'_>, params: &MlpParams) -> Result<AdamState> {
    let step = r.u64()?;
    let (beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?);
    let m = grads_from_flat(params, &get_flat(r, params.num_params())?);
    let v = grads_from_flat(params, &get_flat(r, params.num_params())?);
    Ok(AdamState {
        step,
        beta1,
        beta2,
        epsilon,
        m,
        v,
    })
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let m = &c.model;
    let cfg = m.config();
    let mut e = header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    e.u8(cfg.variant.code());
    e.u8(cfg.benchmark.map_or(NO_BENCHMARK, |b| b.code()));
    e.u8(cfg.activation.code());
    e.u8(cfg.embed.is_some() as u8);
    e.usize(cfg.sensor_count);
    e.usize(cfg.coord_dim);
    e.usize(cfg.out_channels);
    e.usize(cfg.latent_p);
    put_layers(&mut e, &cfg.branch_layers);
    put_layers(&mut e, &cfg.trunk_layers);
    if let Some(emb) = cfg.embed {
        e.usize(emb.mapping_size);
        e.f64(emb.sigma);
        e.u64(emb.seed);
    }
    let n = m.normalization();
    e.f64(n.input_shift);
    e.f64(n.input_scale);
    e.f64(n.output_scale);
    e.u8(m.freq().is_some() as u8);
    if let Some(f) = m.freq() {
        e.usize(f.mapping_size());
        e.usize(f.coord_dim());
        e.f64(f.sigma());
        e.u64(f.seed());
        e.f64s(f.matrix().iter());
    }
    put_flat(&mut e, &m.branch.to_flat());
    put_flat(&mut e, &m.trunk.to_flat());
    e.u64(c.model_seed);
    e.usize(c.step);
    let t = &c.train_config;
    e.usize(t.batch_functions);
    e.usize(t.queries_per_function);
    e.f64(t.lr);
    match t.lr_schedule {
        LrSchedule::Constant => {
            e.u8(0);
            e.f64(1.0);
            e.u64(0);
        }
        LrSchedule::Step { gamma, every } => {
            e.u8(1);
            e.f64(gamma);
            e.usize(every);
        }
    }
    e.usize(t.max_steps);
    e.usize(t.eval_every);
    e.u64(t.seed);
    put_adam(&mut e, &c.branch_opt);
    put_adam(&mut e, &c.trunk_opt);
    e.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let bad = |what: &str, code: u8| Error::Malformed(format!("unknown {what} code {code}"));
    let vc = r.u8()?;
    let variant = Variant::from_code(vc).ok_or_else(|| bad("variant", vc))?;
    let bc = r.u8()?;
    let benchmark = match bc {
        NO_BENCHMARK => None,
        c => Some(BenchmarkId::from_code(c).ok_or_else(|| bad("benchmark", c))?),
    };
    let ac = r.u8()?;
    let activation = Activation::from_code(ac).ok_or_else(|| bad("activation", ac))?;
    let has_embed = r.u8()? != 0;
    let sensor_count = r.usize()?;
    let coord_dim = r.usize()?;
    let out_channels = r.usize()?;
    let latent_p = r.usize()?;
    let branch_layers = get_layers(&mut r)?;
    let trunk_layers = get_layers(&mut r)?;
    let embed = if has_embed {
        Some(EmbedConfig {
            mapping_size: r.usize()?,
            sigma: r.f64()?,
            seed: r.u64()?,
        })
    } else {
        None
    };
    let config = ModelConfig {
        variant,
        branch_layers,
        trunk_layers,
        latent_p,
        out_channels,
        embed,
        sensor_count,
        coord_dim,
        activation,
        benchmark,
    };
    config
        .validate()
        .map_err(|e| Error::InconsistentConfig(format!("stored configuration: {e}")))?;
    let normalization = Normalization {
        input_shift: r.f64()?,
        input_scale: r.f64()?,
        output_scale: r.f64()?,
    };
    let freq = if r.u8()? != 0 {
        let rows = r.usize()?;
        let cols = r.usize()?;
        let sigma = r.f64()?;
        let seed = r.u64()?;
        let data = r.f64s(rows.saturating_mul(cols))?;
        let b = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Malformed(e.to_string()))?;
        Some(FreqMatrix::from_parts(b, sigma, seed)?)
    } else {
        None
    };
    let mut branch = MlpParams::init(&config.branch_layers, activation, 0)?;
    let mut trunk = MlpParams::init(&config.trunk_layers, activation, 0)?;
    branch.set_flat(&get_flat(&mut r, branch.num_params())?)?;
    trunk.set_flat(&get_flat(&mut r, trunk.num_params())?)?;
    let model = DeepOnetModel::from_parts(config, branch, trunk, freq, normalization)?;
    let model_seed = r.u64()?;
    let step = r.usize()?;
    let batch_functions = r.usize()?;
    let queries_per_function = r.usize()?;
    let lr = r.f64()?;
    let tag = r.u8()?;
    let gamma = r.f64()?;
    let every = r.usize()?;
    let lr_schedule = match tag {
        0 => LrSchedule::Constant,
        1 => LrSchedule::Step { gamma, every },
        t => return Err(bad("schedule", t)),
    };
    let train_config = TrainConfig {
        batch_functions,
        queries_per_function,
        lr,
        lr_schedule,
        max_steps: r.usize()?,
        eval_every: r.usize()?,
        seed: r.u64()?,
    };
    let branch_opt = get_adam(&mut r, &model.branch)?;
    let trunk_opt = get_adam(&mut r, &model.trunk)?;
    r.done()?;
    Ok(Checkpoint {
        model,
        model_seed,
        step,
        train_config,
        branch_opt,
        trunk_opt,
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(c))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?)
}
