//! Numerical core for experiments on the one-dimensional stochastic heat
//! equation with multiplicative space-time white noise,
//!
//! ```text
//! dX = ½ ΔX dt + σ(t, x, X) W(dt, dx) + b(t, x, X) dt,
//! ```
//!
//! focused on pairs of solutions driven by the same noise and on the
//! Yamada–Watanabe machinery used to compare them.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files
//! or the command line lives in the `shelab` companion crate.
//!
//! Module map:
//!
//! * [`kernel`] – Gaussian heat kernel, its derivative, semigroup action,
//!   product identities, L² increment bounds and the `J_{p,q}` integrals.
//! * [`quad`] – adaptive Gauss–Kronrod quadrature used as an independent oracle.
//! * [`grid`], [`noise`] – the space-time lattice and reproducible white noise.
//! * [`coeff`] – coefficient families, mollification, truncation and
//!   sampled verification of growth / Hölder / Lipschitz conditions.
//! * [`solver`] – explicit finite-difference scheme, coupled runs, mild-form
//!   residuals, `C_tem` norms and the stopping times `T_K`.
//! * [`decomp`] – smooth/rough splitting of the difference field.
//! * [`yamada`] – the `a_n, ψ_n, φ_n` family, mollifiers, local-time functionals
//!   and the Itô expansion terms.
//! * [`modulus`] – zero-set extraction, Hölder exponent fits, `x̂_n`, β-bands
//!   and the γ-ladder.
#![no_std]
#![warn(rust_2018_idioms, missing_debug_implementations)]
// Whenever std is in the build graph (unit tests, or a dev-dependency pulling it
// in) the inherent float methods shadow `num_traits::Float`.
#![allow(unused_imports)]

extern crate alloc;

pub mod coeff;
pub mod decomp;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod modulus;
pub mod noise;
pub mod quad;
pub mod solver;
pub mod stats;
pub mod yamada;

pub use error::{Error, Result};
pub use grid::{Boundary, GridSpec};
