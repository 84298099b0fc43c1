//! Fourier-embedded DeepONet and its vanilla baseline, together with the
//! benchmark generators, training loop, metrics and file formats used to
//! compare them.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod datagen;
pub mod eval;
pub mod error;
pub mod fft;
pub mod fourier;
pub mod model;
pub mod nn;
pub mod persist;
pub mod rng;
pub mod selftest;
pub mod superset;
pub mod training;

pub use datagen::{BenchmarkId, BenchmarkSpec, Dataset};
pub use error::{Error, Result};
pub use fourier::FreqMatrix;
pub use model::{DeepOnetModel, ModelConfig, Variant};
pub use nn::{Activation, AdamState, MlpParams};
