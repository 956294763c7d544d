//! One module per subcommand. Each turns a validated [`Config`] into a [`Report`].

use shelab_core::noise::splitmix64;
use shelab_core::stats;

use crate::config::{Config, Settings};
use crate::report::Report;
use crate::LabError;

mod couple;
mod decay;
mod ito;
mod kernel;
mod modulus;
mod separation;
mod simulate;
mod yw;

pub fn dispatch(cfg: &Config) -> Result<Report, LabError> {
    match &cfg.settings {
        Settings::Kernel(k) => kernel::run(k),
        Settings::Yw { points } => yw::run(cfg, *points),
        Settings::Simulate(s) => simulate::run(cfg, s),
        Settings::Couple(s) => couple::run(cfg, s),
        Settings::Ito(s) => ito::run(cfg, s),
        Settings::Decay(s) => decay::run(cfg, s),
        Settings::Modulus(s) => modulus::run(cfg, s),
        Settings::Separation(s) => separation::run(cfg, s),
    }
}

/// Deterministic uniforms on `[0, 1)` for probe placement.
#[derive(Debug)]
struct Uniforms(u64);

impl Uniforms {
    fn next(&mut self) -> f64 {
        self.0 = splitmix64(self.0);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Mean and standard error.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.len() < 2 {
        return (stats::mean(xs), f64::NAN);
    }
    (stats::mean(xs), stats::std_error(xs))
}
