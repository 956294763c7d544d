//! The space-time lattice shared by the noise generator and the solver.

use alloc::format;

use num_traits::Float;

use crate::{Error, Result};

/// Boundary rule applied at the two edge cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero flux: the ghost cell repeats the edge value.
    Neumann,
    /// Zero ghost cell.
    Dirichlet,
    Periodic,
}

impl Boundary {
    pub fn name(&self) -> &'static str {
        match self {
            Boundary::Neumann => "neumann",
            Boundary::Dirichlet => "dirichlet",
            Boundary::Periodic => "periodic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "neumann" => Some(Boundary::Neumann),
            "dirichlet" => Some(Boundary::Dirichlet),
            "periodic" => Some(Boundary::Periodic),
            _ => None,
        }
    }
}

/// Uniform cell-centred grid on `[-L, L] x [0, T]`.
///
/// Cell `i` is centred at `x_i = -L + (i + 1/2) dx`, and step `k` sits at
/// `t_k = k dt`. The horizon is rounded up to a whole number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dx: f64,
    pub dt: f64,
    pub half_width: f64,
    pub horizon: f64,
    pub boundary: Boundary,
    cells: usize,
    steps: usize,
}

impl GridSpec {
    pub fn new(dx: f64, dt: f64, half_width: f64, horizon: f64, boundary: Boundary) -> Result<Self> {
        for (name, v) in [("dx", dx), ("dt", dt), ("half_width", half_width), ("horizon", horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("grid {name} must be positive and finite, got {v}")));
            }
        }
        let ratio = dt / (dx * dx);
        if ratio > 0.5 * (1.0 + 1e-12) {
            return Err(Error::Stability { ratio });
        }
        let c = 2.0 * half_width / dx;
        let cells = c.round();
        if (c - cells).abs() > 1e-6 * c.max(1.0) {
            return Err(Error::domain(format!("2*half_width/dx = {c} is not an integer")));
        }
        let cells = cells as usize;
        if cells < 8 {
            return Err(Error::domain(format!("grid needs at least 8 cells, got {cells}")));
        }
        let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
        Ok(GridSpec { dx, dt, half_width, horizon, boundary, cells, steps })
    }

    /// Grid with `cells` cells on `[-L, L]` and `dt = ratio * dx²`.
    pub fn with_ratio(cells: usize, half_width: f64, ratio: f64, horizon: f64, boundary: Boundary) -> Result<Self> {
        let dx = 2.0 * half_width / cells as f64;
        GridSpec::new(dx, ratio * dx * dx, half_width, horizon, boundary)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `dt / dx²`.
    pub fn ratio(&self) -> f64 {
        self.dt / (self.dx * self.dx)
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.dx
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Time actually reached after `steps` steps (>= horizon).
    pub fn final_time(&self) -> f64 {
        self.t(self.steps)
    }

    /// Nearest cell to `x`, clamped into the grid.
    pub fn nearest_cell(&self, x: f64) -> usize {
        let r = (x + self.half_width) / self.dx - 0.5;
        (r.round().max(0.0) as usize).min(self.cells - 1)
    }

    /// Nearest step to `t`, clamped into `0..=steps`.
    pub fn nearest_step(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }

    pub fn cell_centres(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cells).map(move |i| self.x(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_sizes() {
        let g = GridSpec::new(0.1, 0.005, 6.0, 1.0, Boundary::Neumann).unwrap();
        assert_eq!(g.cells(), 120);
        assert_eq!(g.steps(), 200);
        assert!((g.x(0) + 5.95).abs() < 1e-12);
        assert!((g.x(119) - 5.95).abs() < 1e-12);
        assert_eq!(g.nearest_cell(0.0), 60);
        assert_eq!(g.nearest_cell(-100.0), 0);
    }

    #[test]
    fn stability_guard() {
        let r = GridSpec::new(0.1, 0.006, 6.0, 1.0, Boundary::Neumann);
        assert!(matches!(r, Err(Error::Stability { .. })));
        assert!(GridSpec::new(0.1, 0.005, 6.0, 1.0, Boundary::Neumann).is_ok());
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(1.0, 0.1, 3.0, 1.0, Boundary::Neumann).is_err());
        assert!(GridSpec::new(0.3, 0.01, 1.0, 1.0, Boundary::Neumann).is_err());
        assert!(GridSpec::new(0.1, 0.005, 6.0, 0.0, Boundary::Neumann).is_err());
        assert!(GridSpec::new(-0.1, 0.005, 6.0, 1.0, Boundary::Neumann).is_err());
    }

    #[test]
    fn horizon_rounds_up() {
        let g = GridSpec::new(0.1, 0.003, 1.0, 0.01, Boundary::Periodic).unwrap();
        assert_eq!(g.steps(), 4);
        assert!(g.final_time() >= 0.01);
    }
}
