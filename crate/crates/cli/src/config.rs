//! Flat `key = value` run configuration for `fedonet train`.

use std::path::Path;

use fedonet::model::{EmbedConfig, ModelConfig, Variant};
use fedonet::nn::Activation;
use fedonet::training::{LrSchedule, TrainConfig};
use fedonet::{Error, Result};

/// Every key accepted in a config file or `--set`, with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("hidden", "128,128"),
    ("branch_hidden", "128,128"),
    ("trunk_hidden", "128,128"),
    ("latent_p", "128"),
    ("activation", "tanh"),
    ("mapping_size", "128"),
    ("sigma", "5"),
    ("embed_seed", "0"),
    ("model_seed", "0"),
    ("normalize", "true"),
    ("batch_functions", "64"),
    ("queries_per_function", "128"),
    ("lr", "0.001"),
    ("lr_schedule", "step"),
    ("lr_gamma", "0.5"),
    ("lr_every", "20000"),
    ("max_steps", "50000"),
    ("eval_every", "1000"),
    ("seed", "0"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub latent_p: usize,
    pub activation: Activation,
    pub embed: EmbedConfig,
    pub model_seed: u64,
    pub normalize: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            branch_hidden: Vec::new(),
            trunk_hidden: Vec::new(),
            latent_p: 0,
            activation: Activation::Tanh,
            embed: EmbedConfig::default(),
            model_seed: 0,
            normalize: true,
            train: TrainConfig::default(),
        };
        for (k, v) in KEYS {
            c.set(k, v).expect("defaults parse");
        }
        c
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = value
        .split(',')
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err(Error::InvalidArgument(format!("`{key}` needs positive widths")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "hidden" => {
                self.branch_hidden = parse_list(key, value)?;
                self.trunk_hidden = self.branch_hidden.clone();
            }
            "branch_hidden" => self.branch_hidden = parse_list(key, value)?,
            "trunk_hidden" => self.trunk_hidden = parse_list(key, value)?,
            "latent_p" => self.latent_p = parse(key, value)?,
            "activation" => self.activation = parse(key, value)?,
            "mapping_size" => self.embed.mapping_size = parse(key, value)?,
            "sigma" => self.embed.sigma = parse(key, value)?,
            "embed_seed" => self.embed.seed = parse(key, value)?,
            "model_seed" => self.model_seed = parse(key, value)?,
            "normalize" => self.normalize = parse(key, value)?,
            "batch_functions" => t.batch_functions = parse(key, value)?,
            "queries_per_function" => t.queries_per_function = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "lr_schedule" => {
                t.lr_schedule = match value.trim() {
                    "constant" => LrSchedule::Constant,
                    "step" => match t.lr_schedule {
                        LrSchedule::Step { .. } => t.lr_schedule,
                        LrSchedule::Constant => LrSchedule::Step { gamma: 0.5, every: 20_000 },
                    },
                    other => return Err(Error::InvalidArgument(format!("unknown lr_schedule `{other}`"))),
                }
            }
            "lr_gamma" | "lr_every" => {
                let (mut gamma, mut every) = match t.lr_schedule {
                    LrSchedule::Step { gamma, every } => (gamma, every),
                    LrSchedule::Constant => (0.5, 20_000),
                };
                if key == "lr_gamma" {
                    gamma = parse(key, value)?;
                } else {
                    every = parse(key, value)?;
                }
                if let LrSchedule::Step { .. } = t.lr_schedule {
                    t.lr_schedule = LrSchedule::Step { gamma, every };
                }
            }
            "max_steps" => t.max_steps = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            _ => {
                let known: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
                return Err(Error::InvalidArgument(format!(
                    "unknown config key `{key}` (known: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Apply `key=value` text: one pair per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.apply_text(&text)
    }

    pub fn model_config(&self, variant: Variant, sensors: usize, coord_dim: usize, channels: usize) -> ModelConfig {
        let mut cfg = ModelConfig::with_defaults(variant, sensors, coord_dim, channels);
        cfg.latent_p = self.latent_p;
        cfg.activation = self.activation;
        if variant == Variant::Fedonet {
            cfg.embed = Some(self.embed);
        }
        cfg.set_branch_hidden(&self.branch_hidden);
        cfg.set_trunk_hidden(&self.trunk_hidden);
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library() {
        let c = RunConfig::default();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.embed, EmbedConfig::default());
        let m = c.model_config(Variant::Fedonet, 10, 2, 1);
        assert_eq!(m, ModelConfig::with_defaults(Variant::Fedonet, 10, 2, 1));
    }

    #[test]
    fn parses_file_text() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nhidden = 32,16\nlr_schedule=constant\nmax_steps=10 # trailing\n")
            .unwrap();
        assert_eq!(c.trunk_hidden, vec![32, 16]);
        assert_eq!(c.train.lr_schedule, LrSchedule::Constant);
        assert_eq!(c.train.max_steps, 10);
        c.set("lr_schedule", "step").unwrap();
        c.set("lr_every", "7").unwrap();
        assert_eq!(c.train.lr_schedule, LrSchedule::Step { gamma: 0.5, every: 7 });
    }

    #[test]
    fn rejects_unknown_and_bad() {
        let mut c = RunConfig::default();
        assert!(c.set("depth", "3").is_err());
        assert!(c.set("lr", "fast").is_err());
        assert!(c.set("hidden", "3,0").is_err());
        assert!(c.apply_text("justakey").is_err());
    }
}
