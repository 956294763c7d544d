//! Discretised space-time white noise.
//!
//! Cell `(k, i)` of the lattice receives `ΔW_{k,i} ~ N(0, dt·dx)`, independent
//! across cells. Values come from a ChaCha8 stream keyed by
//! `(seed, path_index)` with the time index `k` as the stream id, so any row
//! can be regenerated on its own, in any order, on any thread.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::grid::GridSpec;
use crate::{Error, Result};

/// Human-readable statement of [`mix_seed`], echoed into run summaries.
pub const MIX_DESCRIPTION: &str =
    "key = splitmix64(seed ^ splitmix64(path_index + 0x9E3779B97F4A7C15)); ChaCha8 key = 4 successive splitmix64 outputs of key; stream = time step";

/// One round of the splitmix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-path seed derived from the master seed.
pub fn mix_seed(seed: u64, path_index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(path_index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn chacha_key(seed: u64, path_index: u64) -> [u8; 32] {
    let mut state = mix_seed(seed, path_index);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Standard normals from a uniform stream by the Box–Muller transform.
fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        pair[0] = r * c;
        pair[1] = r * s;
    }
    if let [last] = chunks.into_remainder() {
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
        *last = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
    }
}

/// Anything that can hand out noise rows `ΔW_{k,·}`.
pub trait NoiseSource {
    fn cells(&self) -> usize;
    fn steps(&self) -> usize;
    /// Writes row `k` (already scaled to variance `dt·dx`) into `out`.
    fn fill_row(&self, k: usize, out: &mut [f64]);
}

/// Lazily generated noise: nothing is stored, rows are produced on demand.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    base: ChaCha8Rng,
    cells: usize,
    steps: usize,
    scale: f64,
    pub seed: u64,
    pub path_index: u64,
}

impl NoiseStream {
    pub fn new(grid: &GridSpec, seed: u64, path_index: u64) -> Self {
        NoiseStream {
            base: ChaCha8Rng::from_seed(chacha_key(seed, path_index)),
            cells: grid.cells(),
            steps: grid.steps(),
            scale: (grid.dt * grid.dx).sqrt(),
            seed,
            path_index,
        }
    }

    /// Unscaled `N(0,1)` draws of row `k`.
    pub fn fill_standard_row(&self, k: usize, out: &mut [f64]) {
        let mut rng = self.base.clone();
        rng.set_stream(k as u64);
        rng.set_word_pos(0);
        fill_standard_normal(&mut rng, out);
    }

    pub fn materialize(&self) -> NoiseField {
        let mut data = vec![0.0; self.steps * self.cells];
        for (k, row) in data.chunks_exact_mut(self.cells).enumerate() {
            self.fill_row(k, row);
        }
        NoiseField { cells: self.cells, steps: self.steps, data, seed: self.seed, path_index: self.path_index }
    }
}

impl NoiseSource for NoiseStream {
    fn cells(&self) -> usize {
        self.cells
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn fill_row(&self, k: usize, out: &mut [f64]) {
        self.fill_standard_row(k, out);
        for v in out.iter_mut() {
            *v *= self.scale;
        }
    }
}

/// A fully materialised realisation, row-major `(step, cell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    cells: usize,
    steps: usize,
    data: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

impl NoiseField {
    pub fn sample(grid: &GridSpec, seed: u64, path_index: u64) -> Self {
        NoiseStream::new(grid, seed, path_index).materialize()
    }

    /// Wraps externally produced increments (e.g. a replayed dump).
    pub fn from_raw(steps: usize, cells: usize, data: Vec<f64>, seed: u64, path_index: u64) -> Result<Self> {
        if data.len() != steps * cells {
            return Err(Error::Shape { expected: steps * cells, found: data.len() });
        }
        Ok(NoiseField { cells, steps, data, seed, path_index })
    }

    /// Checks that the field matches the grid's shape.
    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.cells != grid.cells() {
            return Err(Error::Shape { expected: grid.cells(), found: self.cells });
        }
        if self.steps != grid.steps() {
            return Err(Error::Shape { expected: grid.steps(), found: self.steps });
        }
        Ok(())
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cells..(k + 1) * self.cells]
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.cells + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl NoiseSource for NoiseField {
    fn cells(&self) -> usize {
        self.cells
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn fill_row(&self, k: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(k));
    }
}

/// `Σ_{k < up_to} Σ_i φ_i ΔW_{k,i}`, the discrete `W_t(φ)` at `t = up_to·dt`.
pub fn integrate_test_function<N: NoiseSource + ?Sized>(noise: &N, phi: &[f64], up_to: usize) -> Result<f64> {
    if phi.len() != noise.cells() {
        return Err(Error::Shape { expected: noise.cells(), found: phi.len() });
    }
    if up_to > noise.steps() {
        return Err(Error::domain(alloc::format!("up_to = {up_to} exceeds {} steps", noise.steps())));
    }
    let mut row = vec![0.0; noise.cells()];
    let mut total = 0.0;
    for k in 0..up_to {
        noise.fill_row(k, &mut row);
        total += phi.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::stats;

    fn grid() -> GridSpec {
        GridSpec::new(0.1, 0.005, 1.6, 0.25, Boundary::Neumann).unwrap()
    }

    #[test]
    fn replay_is_bit_identical_and_order_free() {
        let g = grid();
        let a = NoiseField::sample(&g, 42, 3);
        let b = NoiseField::sample(&g, 42, 3);
        assert_eq!(a, b);
        let s = NoiseStream::new(&g, 42, 3);
        let mut row = vec![0.0; g.cells()];
        for k in (0..g.steps()).rev() {
            s.fill_row(k, &mut row);
            assert_eq!(row.as_slice(), a.row(k));
        }
        assert_ne!(NoiseField::sample(&g, 42, 4), a);
        assert_ne!(NoiseField::sample(&g, 43, 3), a);
    }

    #[test]
    fn per_cell_variance() {
        let g = GridSpec::new(0.2, 0.005, 12.8, 15.0, Boundary::Neumann).unwrap();
        let f = NoiseField::sample(&g, 9, 0);
        assert_eq!(f.as_slice().len(), 128 * 3000);
        let v = stats::variance(f.as_slice());
        let n = f.as_slice().len() as f64;
        let se = 2.0f64.sqrt() * 0.001 / n.sqrt();
        assert!((v - 0.001).abs() < 3.0 * se, "{v}");
    }

    #[test]
    fn zero_test_function_and_shape_errors() {
        let g = grid();
        let f = NoiseField::sample(&g, 1, 1);
        assert_eq!(integrate_test_function(&f, &vec![0.0; g.cells()], g.steps()).unwrap(), 0.0);
        assert!(integrate_test_function(&f, &[1.0; 3], 1).is_err());
        assert!(integrate_test_function(&f, &vec![0.0; g.cells()], g.steps() + 1).is_err());
        assert!(NoiseField::from_raw(2, 3, vec![0.0; 5], 0, 0).is_err());
    }

    #[test]
    fn odd_row_lengths_are_filled() {
        let s = NoiseStream::new(&grid(), 5, 0);
        let mut out = [f64::NAN; 7];
        s.fill_standard_row(0, &mut out);
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
