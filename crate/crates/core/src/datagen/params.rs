//! Per-benchmark physical and discretization parameters.
//!
//! Every field can be listed and overridden by name, which is how the CLI's
//! `--param key=value` flags and the dataset header reach them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar types usable as parameter fields.
pub trait ParamValue: Copy {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Option<Self>;
    fn parse_text(s: &str) -> Option<Self>;
}

impl ParamValue for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Option<Self> {
        Some(v)
    }
    fn parse_text(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl ParamValue for usize {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Option<Self> {
        (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as usize)
    }
    fn parse_text(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

macro_rules! param_struct {
    ($(#[$meta:meta])* $name:ident { $($field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            $(pub $field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl $name {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn entries(&self) -> Vec<(&'static str, f64)> {
                vec![$((stringify!($field), ParamValue::to_f64(self.$field))),*]
            }

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => {
                        self.$field = <$ty as ParamValue>::parse_text(value).ok_or_else(|| {
                            Error::invalid(format!("cannot parse `{value}` for parameter `{key}`"))
                        })?;
                    })*
                    _ => return Err(unknown_key(key, Self::KEYS)),
                }
                Ok(())
            }

            pub fn set_f64(&mut self, key: &str, value: f64) -> Result<()> {
                match key {
                    $(stringify!($field) => {
                        self.$field = <$ty as ParamValue>::from_f64(value).ok_or_else(|| {
                            Error::invalid(format!("value {value} not valid for parameter `{key}`"))
                        })?;
                    })*
                    _ => return Err(unknown_key(key, Self::KEYS)),
                }
                Ok(())
            }
        }
    };
}

fn unknown_key(key: &str, known: &[&str]) -> Error {
    Error::invalid(format!("unknown parameter `{key}` (known: {})", known.join(", ")))
}

param_struct!(
    /// GRF forcing on an `n × n` grid, sensors every `sensor_stride` nodes.
    PoissonParams {
        n: usize = 128,
        alpha: f64 = 3.0,
        tau: f64 = 3.0,
        sensor_stride: usize = 4,
    }
);

param_struct!(BurgersParams {
    nx: usize = 128,
    nt: usize = 101,
    nu: f64 = 0.01,
});

param_struct!(Lorenz63Params {
    sigma: f64 = 10.0,
    rho: f64 = 28.0,
    beta: f64 = 8.0 / 3.0,
    x0_min: f64 = 10.0,
    x0_max: f64 = 15.0,
    y0: f64 = 12.0,
    z0: f64 = 12.0,
    final_time: f64 = 3.0,
    steps: usize = 1000,
});

param_struct!(
    /// NACA parameter ranges and the mask subsampling used for the sensors.
    EikonalParams {
        n: usize = 256,
        sensor_stride: usize = 4,
        m_min: f64 = 0.01,
        m_max: f64 = 0.09,
        p_min: f64 = 0.1,
        p_max: f64 = 0.7,
        t_min: f64 = 0.1,
        t_max: f64 = 0.4,
    }
);

param_struct!(Lorenz96Params {
    n: usize = 40,
    forcing: f64 = 4.0,
    dt: f64 = 0.01,
    steps: usize = 1500,
    keep: usize = 501,
    perturbation: f64 = 1e-3,
});

param_struct!(AllenCahnParams {
    nx: usize = 200,
    nt: usize = 200,
    eps: f64 = 1e-4,
    dt: f64 = 0.005,
});

param_struct!(KsParams {
    nx: usize = 128,
    l: f64 = 24.0,
    final_time: f64 = 50.0,
    dt: f64 = 0.05,
    nt: usize = 251,
});

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_and_list() {
        let mut p = BurgersParams::default();
        p.set("nu", "0.02").unwrap();
        p.set("nx", "64").unwrap();
        assert_eq!(p.nu, 0.02);
        assert_eq!(p.nx, 64);
        assert!(p.set("nx", "6.5").is_err());
        assert!(p.set("viscosity", "1").is_err());
        assert_eq!(p.entries()[2], ("nu", 0.02));
    }

    #[test]
    fn f64_roundtrip() {
        let p = Lorenz63Params::default();
        let mut q = Lorenz63Params { rho: 0.0, ..p };
        for (k, v) in p.entries() {
            q.set_f64(k, v).unwrap();
        }
        assert_eq!(p, q);
        assert!(q.set_f64("steps", -1.0).is_err());
    }
}
