//! Explicit finite-difference scheme
//!
//! ```text
//! X^{k+1}_i = X^k_i + dt/(2dx²) (X^k_{i+1} - 2X^k_i + X^k_{i-1})
//!           + σ(t_k, x_i, X^k_i) ΔW_{k,i}/dx + b(t_k, x_i, X^k_i) dt
//! ```
//!
//! plus coupled runs (two solutions on one noise), mild-form residuals,
//! `C_tem` norms and the stopping times `T_K`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::coeff::Coefficient;
use crate::grid::{Boundary, GridSpec};
use crate::noise::NoiseSource;
use crate::stats::normal_mass;
use crate::{Error, Result};

/// Samples `f` at the cell centres.
pub fn sample_profile(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.cell_centres().map(f).collect()
}

fn check_len(grid: &GridSpec, v: &[f64]) -> Result<()> {
    if v.len() != grid.cells() {
        return Err(Error::Shape { expected: grid.cells(), found: v.len() });
    }
    Ok(())
}

/// `(ghost_left, ghost_right)` for the current state.
#[inline]
fn ghosts(boundary: Boundary, x: &[f64]) -> (f64, f64) {
    let n = x.len();
    match boundary {
        Boundary::Neumann => (x[0], x[n - 1]),
        Boundary::Dirichlet => (0.0, 0.0),
        Boundary::Periodic => (x[n - 1], x[0]),
    }
}

/// Applies the deterministic stencil `A` (no forcing): `out = A x`.
pub fn apply_heat_stencil(grid: &GridSpec, x: &[f64], out: &mut [f64]) {
    let r = 0.5 * grid.ratio();
    let n = x.len();
    let (gl, gr) = ghosts(grid.boundary, x);
    for i in 0..n {
        let left = if i == 0 { gl } else { x[i - 1] };
        let right = if i + 1 == n { gr } else { x[i + 1] };
        out[i] = x[i] + r * (right - 2.0 * x[i] + left);
    }
}

/// Per-step forcing `f^k_i = σ ΔW_{k,i}/dx + b dt` evaluated at `X^k`.
pub fn forcing(grid: &GridSpec, coeff: &Coefficient, xs: &[f64], k: usize, x: &[f64], dw: &[f64], out: &mut [f64]) {
    let t = grid.t(k);
    let inv_dx = 1.0 / grid.dx;
    let drift = coeff.has_drift();
    for i in 0..x.len() {
        let mut f = coeff.sigma(t, xs[i], x[i]) * dw[i] * inv_dx;
        if drift {
            f += coeff.drift(t, xs[i], x[i]) * grid.dt;
        }
        out[i] = f;
    }
}

/// One explicit step from `X^k` to `X^{k+1}`.
///
/// `xs` are the cell centres. A non-finite result is reported as
/// [`Error::BlowUp`] with the step index `k + 1` and the first bad cell.
pub fn step(
    grid: &GridSpec,
    coeff: &Coefficient,
    xs: &[f64],
    k: usize,
    x: &[f64],
    dw: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let r = 0.5 * grid.ratio();
    let t = grid.t(k);
    let inv_dx = 1.0 / grid.dx;
    let dt = grid.dt;
    let drift = coeff.has_drift();
    let n = x.len();
    let (gl, gr) = ghosts(grid.boundary, x);
    for i in 0..n {
        let left = if i == 0 { gl } else { x[i - 1] };
        let right = if i + 1 == n { gr } else { x[i + 1] };
        let v = x[i];
        let mut next = v + r * (right - 2.0 * v + left) + coeff.sigma(t, xs[i], v) * dw[i] * inv_dx;
        if drift {
            next += coeff.drift(t, xs[i], v) * dt;
        }
        out[i] = next;
    }
    if let Some(cell) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::BlowUp { path: None, step: k + 1, cell });
    }
    Ok(())
}

/// Which steps keep a stored frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePolicy {
    /// Every `stride`-th step is stored (the final step always is).
    pub stride: usize,
}

impl Default for FramePolicy {
    fn default() -> Self {
        FramePolicy { stride: 1 }
    }
}

impl FramePolicy {
    fn keeps(&self, k: usize, steps: usize) -> bool {
        k % self.stride.max(1) == 0 || k == steps
    }
}

/// Stored frames of one solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub grid: GridSpec,
    /// Step index of each stored frame, increasing, starting at 0.
    pub frame_steps: Vec<usize>,
    values: Vec<f64>,
}

impl SolutionField {
    fn new(grid: GridSpec) -> Self {
        SolutionField { grid, frame_steps: Vec::new(), values: Vec::new() }
    }

    fn push(&mut self, k: usize, x: &[f64]) {
        self.frame_steps.push(k);
        self.values.extend_from_slice(x);
    }

    /// Builds a field from explicit frames (synthetic fields in tests and analyses).
    pub fn from_frames(grid: GridSpec, frame_steps: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if values.len() != frame_steps.len() * grid.cells() {
            return Err(Error::Shape { expected: frame_steps.len() * grid.cells(), found: values.len() });
        }
        if frame_steps.windows(2).any(|w| w[0] >= w[1]) || frame_steps.first() != Some(&0) {
            return Err(Error::domain("frame steps must start at 0 and increase"));
        }
        Ok(SolutionField { grid, frame_steps, values })
    }

    pub fn frames(&self) -> usize {
        self.frame_steps.len()
    }

    pub fn frame(&self, j: usize) -> &[f64] {
        let n = self.grid.cells();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn frame_time(&self, j: usize) -> f64 {
        self.grid.t(self.frame_steps[j])
    }

    pub fn initial(&self) -> &[f64] {
        self.frame(0)
    }

    pub fn last(&self) -> &[f64] {
        self.frame(self.frames() - 1)
    }

    /// Frame stored at exactly step `k`, if any.
    pub fn at_step(&self, k: usize) -> Option<&[f64]> {
        self.frame_steps.binary_search(&k).ok().map(|j| self.frame(j))
    }

    /// Index of the stored frame whose time is nearest to `t` (ties go to the earlier frame).
    pub fn nearest_frame(&self, t: f64) -> usize {
        let k = t / self.grid.dt;
        let pos = self.frame_steps.partition_point(|&s| (s as f64) < k);
        if pos == 0 {
            return 0;
        }
        if pos == self.frames() {
            return pos - 1;
        }
        let lo = self.frame_steps[pos - 1] as f64;
        let hi = self.frame_steps[pos] as f64;
        if k - lo <= hi - k {
            pos - 1
        } else {
            pos
        }
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.grid.cells() + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Runs the scheme, calling `observe(k, X^k)` for `k = 0..=steps`.
pub fn solve_observed<N: NoiseSource + ?Sized>(
    grid: &GridSpec,
    coeff: &Coefficient,
    x0: &[f64],
    noise: &N,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    check_len(grid, x0)?;
    check_noise(grid, noise)?;
    let xs: Vec<f64> = grid.cell_centres().collect();
    let mut cur = x0.to_vec();
    let mut next = vec![0.0; grid.cells()];
    let mut dw = vec![0.0; grid.cells()];
    observe(0, &cur);
    for k in 0..grid.steps() {
        noise.fill_row(k, &mut dw);
        step(grid, coeff, &xs, k, &cur, &dw, &mut next)?;
        core::mem::swap(&mut cur, &mut next);
        observe(k + 1, &cur);
    }
    Ok(())
}

fn check_noise<N: NoiseSource + ?Sized>(grid: &GridSpec, noise: &N) -> Result<()> {
    if noise.cells() != grid.cells() {
        return Err(Error::Shape { expected: grid.cells(), found: noise.cells() });
    }
    if noise.steps() < grid.steps() {
        return Err(Error::Shape { expected: grid.steps(), found: noise.steps() });
    }
    Ok(())
}

pub fn solve<N: NoiseSource + ?Sized>(
    grid: &GridSpec,
    coeff: &Coefficient,
    x0: &[f64],
    noise: &N,
    policy: FramePolicy,
) -> Result<SolutionField> {
    let mut field = SolutionField::new(*grid);
    let steps = grid.steps();
    solve_observed(grid, coeff, x0, noise, |k, x| {
        if policy.keeps(k, steps) {
            field.push(k, x);
        }
    })?;
    Ok(field)
}

/// `sup_y (|a(y)| ∨ |b(y)|) e^{-|y|}`.
pub fn weighted_sup(xs: &[f64], a: &[f64], b: &[f64]) -> f64 {
    xs.iter()
        .zip(a.iter().zip(b))
        .map(|(x, (p, q))| p.abs().max(q.abs()) * (-x.abs()).exp())
        .fold(0.0, f64::max)
}

/// Two solutions advanced on the same noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub x1: SolutionField,
    pub x2: SolutionField,
    /// `X1 - X2` at the stored frames.
    pub u: SolutionField,
    /// `sup_y (|X1| ∨ |X2|) e^{-|y|}` at every step `0..=steps`.
    pub weighted_sup: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

/// Runs both solutions, calling `observe(k, X1^k, X2^k, ΔW_k)` for `k = 0..=steps`;
/// the noise row is the one about to be applied (`None` after the last step).
pub fn solve_coupled_observed<N: NoiseSource + ?Sized>(
    grid: &GridSpec,
    coeff: &Coefficient,
    x0_1: &[f64],
    x0_2: &[f64],
    noise: &N,
    mut observe: impl FnMut(usize, &[f64], &[f64], Option<&[f64]>),
) -> Result<()> {
    check_len(grid, x0_1)?;
    check_len(grid, x0_2)?;
    check_noise(grid, noise)?;
    let n = grid.cells();
    let xs: Vec<f64> = grid.cell_centres().collect();
    let (mut a, mut b) = (x0_1.to_vec(), x0_2.to_vec());
    let (mut a_next, mut b_next) = (vec![0.0; n], vec![0.0; n]);
    let mut dw = vec![0.0; n];
    for k in 0..grid.steps() {
        noise.fill_row(k, &mut dw);
        observe(k, &a, &b, Some(&dw));
        step(grid, coeff, &xs, k, &a, &dw, &mut a_next)?;
        step(grid, coeff, &xs, k, &b, &dw, &mut b_next)?;
        core::mem::swap(&mut a, &mut a_next);
        core::mem::swap(&mut b, &mut b_next);
    }
    observe(grid.steps(), &a, &b, None);
    Ok(())
}

/// Coupled run with stored frames; `seed`/`path_index` are recorded as metadata.
pub fn solve_coupled<N: NoiseSource + ?Sized>(
    grid: &GridSpec,
    coeff: &Coefficient,
    x0_1: &[f64],
    x0_2: &[f64],
    noise: &N,
    policy: FramePolicy,
    seed: u64,
    path_index: u64,
) -> Result<CoupledRun> {
    let mut x1 = SolutionField::new(*grid);
    let mut x2 = SolutionField::new(*grid);
    let mut u = SolutionField::new(*grid);
    let mut sup = Vec::with_capacity(grid.steps() + 1);
    let xs: Vec<f64> = grid.cell_centres().collect();
    let steps = grid.steps();
    let mut diff = vec![0.0; grid.cells()];
    solve_coupled_observed(grid, coeff, x0_1, x0_2, noise, |k, a, b, _| {
        sup.push(weighted_sup(&xs, a, b));
        if policy.keeps(k, steps) {
            x1.push(k, a);
            x2.push(k, b);
            for i in 0..a.len() {
                diff[i] = a[i] - b[i];
            }
            u.push(k, &diff);
        }
    })
    .map_err(|e| e.with_path(path_index))?;
    Ok(CoupledRun { x1, x2, u, weighted_sup: sup, seed, path_index })
}

impl CoupledRun {
    pub fn grid(&self) -> &GridSpec {
        &self.u.grid
    }

    /// `T_K`: first grid time with weighted sup above `K`, capped at `min(K, T)`.
    pub fn stopping_time(&self, k_level: f64) -> f64 {
        stopping_time(&self.weighted_sup, self.grid(), k_level)
    }
}

/// `T_K` from a weighted-sup trace indexed by step.
pub fn stopping_time(weighted_sup: &[f64], grid: &GridSpec, k_level: f64) -> f64 {
    let cap = k_level.min(grid.final_time());
    match weighted_sup.iter().position(|&s| s > k_level) {
        Some(k) => grid.t(k).min(cap),
        None => cap,
    }
}

/// `‖f‖_λ = max_i |f(x_i)| e^{-λ|x_i|}`.
pub fn ctem_norm(values: &[f64], xs: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("decay rate must be >= 0, got {lambda}")));
    }
    if values.len() != xs.len() {
        return Err(Error::Shape { expected: xs.len(), found: values.len() });
    }
    Ok(values.iter().zip(xs).map(|(v, x)| v.abs() * (-lambda * x.abs()).exp()).fold(0.0, f64::max))
}

/// Number of terms kept in [`ctem_metric`].
pub const CTEM_TERMS: u32 = 40;

/// `d(f, g) = Σ_{k=1}^{40} 2^{-k} (‖f - g‖_{1/k} ∧ 1)`.
pub fn ctem_metric(f: &[f64], g: &[f64], xs: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::Shape { expected: f.len(), found: g.len() });
    }
    let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
    let mut total = 0.0;
    for k in 1..=CTEM_TERMS {
        let norm = ctem_norm(&diff, xs, 1.0 / k as f64)?;
        total += 0.5f64.powi(k as i32) * norm.min(1.0);
    }
    Ok(total)
}

/// A space-time probe `(step, cell)` for the mild-form residual.
pub type Probe = (usize, usize);

fn check_probes(field: &SolutionField, probes: &[Probe]) -> Result<()> {
    for &(k, i) in probes {
        if i >= field.grid.cells() || k > field.grid.steps() {
            return Err(Error::domain(format!("probe ({k}, {i}) outside the grid")));
        }
        if k > 0 && (0..k).any(|j| field.at_step(j).is_none()) {
            return Err(Error::domain("mild residual needs every step stored (frame stride 1)"));
        }
    }
    Ok(())
}

fn forcing_rows<N: NoiseSource + ?Sized>(
    field: &SolutionField,
    coeff: &Coefficient,
    noise: &N,
    up_to: usize,
) -> Vec<f64> {
    let grid = &field.grid;
    let n = grid.cells();
    let xs: Vec<f64> = grid.cell_centres().collect();
    let mut rows = vec![0.0; up_to * n];
    let mut dw = vec![0.0; n];
    for j in 0..up_to {
        noise.fill_row(j, &mut dw);
        let x = field.frame(j);
        forcing(grid, coeff, &xs, j, x, &dw, &mut rows[j * n..(j + 1) * n]);
    }
    rows
}

/// Largest `|X(t_k, x_i) - [A^k X0 + Σ_{j<k} A^{k-1-j} f^j]_i|` over the probes,
/// with `A` the scheme's own (symmetric) stencil matrix, i.e. its discrete Green's
/// function. Requires a field stored at every step.
pub fn mild_residual<N: NoiseSource + ?Sized>(
    field: &SolutionField,
    coeff: &Coefficient,
    noise: &N,
    probes: &[Probe],
) -> Result<f64> {
    check_probes(field, probes)?;
    let grid = &field.grid;
    let n = grid.cells();
    let k_max = probes.iter().map(|p| p.0).max().unwrap_or(0);
    let f = forcing_rows(field, coeff, noise, k_max);
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; n];
    let mut g_next = vec![0.0; n];
    for &(k, i) in probes {
        g.iter_mut().for_each(|v| *v = 0.0);
        g[i] = 1.0;
        // g holds row i of A^m; add ⟨A^m e_i, f^{k-1-m}⟩ for m = 0..k-1
        let mut value = 0.0;
        for m in 0..k {
            let fj = &f[(k - 1 - m) * n..(k - m) * n];
            value += dot(&g, fj);
            apply_heat_stencil(grid, &g, &mut g_next);
            core::mem::swap(&mut g, &mut g_next);
        }
        value += dot(&g, field.initial());
        worst = worst.max((field.frame(k)[i] - value).abs());
    }
    Ok(worst)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cell masses of `p_τ(· - x)`, i.e. `∫_{cell l} p_τ(y - x) dy` for every cell.
fn cell_masses(grid: &GridSpec, tau: f64, x: f64, out: &mut [f64]) {
    let sd = tau.sqrt();
    for (l, w) in out.iter_mut().enumerate() {
        let c = grid.x(l);
        *w = normal_mass((c - 0.5 * grid.dx - x) / sd, (c + 0.5 * grid.dx - x) / sd);
    }
}

/// Same comparison as [`mild_residual`] but against the continuum kernel:
/// `Σ_l m_l(t_k) X0_l + Σ_{j<k} Σ_l m_l((k-j) dt) f^j_l` where `m_l(τ)` is the
/// mass of `p_τ(· - x_i)` on cell `l`. A probe at `k = 0` compares `X0` with itself.
pub fn mild_residual_continuum<N: NoiseSource + ?Sized>(
    field: &SolutionField,
    coeff: &Coefficient,
    noise: &N,
    probes: &[Probe],
) -> Result<f64> {
    check_probes(field, probes)?;
    let grid = &field.grid;
    let n = grid.cells();
    let k_max = probes.iter().map(|p| p.0).max().unwrap_or(0);
    let f = forcing_rows(field, coeff, noise, k_max);
    let mut w = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for &(k, i) in probes {
        if k == 0 {
            continue;
        }
        let x = grid.x(i);
        cell_masses(grid, grid.t(k), x, &mut w);
        let mut value = dot(&w, field.initial());
        for j in 0..k {
            cell_masses(grid, (k - j) as f64 * grid.dt, x, &mut w);
            value += dot(&w, &f[j * n..(j + 1) * n]);
        }
        worst = worst.max((field.frame(k)[i] - value).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_lipschitz, make_power};
    use crate::kernel::density;
    use crate::noise::{NoiseField, NoiseStream};

    fn heat_grid(dx: f64) -> GridSpec {
        GridSpec::new(dx, 0.25 * dx * dx, 6.0, 0.5, Boundary::Neumann).unwrap()
    }

    #[test]
    fn deterministic_heat_matches_kernel() {
        let g = heat_grid(0.05);
        let x0 = sample_profile(&g, |x| density(0.5, x));
        let noise = NoiseStream::new(&g, 0, 0);
        let f = solve(&g, &Coefficient::zero(), &x0, &noise, FramePolicy { stride: usize::MAX }).unwrap();
        assert_eq!(f.frames(), 2);
        let t = g.final_time();
        let err = (0..g.cells()).map(|i| (f.last()[i] - density(0.5 + t, g.x(i))).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_drift_grows_exponentially() {
        let g = GridSpec::new(0.1, 0.001, 1.0, 1.0, Boundary::Neumann).unwrap();
        let c = Coefficient::zero().with_linear_drift(1.0);
        let x0 = vec![1.0; g.cells()];
        let f = solve(&g, &c, &x0, &NoiseStream::new(&g, 0, 0), FramePolicy::default()).unwrap();
        let e = 1f64.exp();
        assert!(f.last().iter().all(|v| (v - e).abs() < 2e-3 * e));
    }

    #[test]
    fn equal_data_gives_zero_difference() {
        let g = GridSpec::new(0.1, 0.004, 2.0, 0.2, Boundary::Neumann).unwrap();
        let noise = NoiseField::sample(&g, 3, 0);
        let x0 = sample_profile(&g, |x| (-x * x).exp());
        let run = solve_coupled(&g, &make_lipschitz(1.0, 0.5), &x0, &x0, &noise, FramePolicy::default(), 3, 0).unwrap();
        assert!(run.u.as_slice().iter().all(|&v| v == 0.0));
        let zero = vec![0.0; g.cells()];
        let run = solve_coupled(&g, &make_power(0.5, 1.0).unwrap(), &zero, &zero, &noise, FramePolicy::default(), 3, 0)
            .unwrap();
        assert!(run.x1.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blow_up_is_reported_with_location() {
        let g = GridSpec::new(0.1, 0.004, 1.0, 2.0, Boundary::Neumann).unwrap();
        let c = Coefficient::zero().with_drift(|_, _, v| v.powi(8), 0.0, 0.0);
        let x0 = vec![3.0; g.cells()];
        let noise = NoiseStream::new(&g, 0, 0);
        match solve(&g, &c, &x0, &noise, FramePolicy::default()) {
            Err(Error::BlowUp { step, .. }) => assert!(step > 0),
            other => panic!("{other:?}"),
        }
        let r = solve_coupled(&g, &c, &x0, &x0, &noise, FramePolicy::default(), 0, 17);
        assert!(matches!(r, Err(Error::BlowUp { path: Some(17), .. })));
    }

    #[test]
    fn stopping_time_examples() {
        let g = GridSpec::new(0.1, 0.004, 1.0, 1.0, Boundary::Neumann).unwrap();
        let bounded = vec![0.5; g.steps() + 1];
        assert_eq!(stopping_time(&bounded, &g, 2.0), g.final_time().min(2.0));
        let mut exceed = bounded.clone();
        exceed[0] = 3.0;
        assert_eq!(stopping_time(&exceed, &g, 2.0), 0.0);
        let mut late = bounded;
        late[10] = 5.0;
        assert!((stopping_time(&late, &g, 2.0) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn ctem_examples() {
        let g = GridSpec::new(0.1, 0.004, 1.05, 1.0, Boundary::Neumann).unwrap();
        let xs: Vec<f64> = g.cell_centres().collect();
        assert_eq!(ctem_norm(&vec![1.0; xs.len()], &xs, 0.0).unwrap(), 1.0);
        let e: Vec<f64> = xs.iter().map(|x| x.abs().exp()).collect();
        assert!((ctem_norm(&e, &xs, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let p: Vec<f64> = xs.iter().map(|&x| density(1.0, x)).collect();
        assert!((ctem_norm(&p, &xs, 1.0).unwrap() - 0.398_942_3).abs() < 1e-7);
        assert!(ctem_norm(&p, &xs, -1.0).is_err());

        assert_eq!(ctem_metric(&p, &p, &xs).unwrap(), 0.0);
        let zero = vec![0.0; xs.len()];
        let big = vec![1e6; xs.len()];
        assert!((ctem_metric(&big, &zero, &xs).unwrap() - (1.0 - 0.5f64.powi(40))).abs() < 1e-15);
        let c = vec![0.3; xs.len()];
        assert!((ctem_metric(&c, &zero, &xs).unwrap() - 0.3 * (1.0 - 0.5f64.powi(40))).abs() < 1e-15);
        assert!(ctem_metric(&c, &zero[1..], &xs).is_err());
    }

    #[test]
    fn mild_form_with_discrete_green_function() {
        let g = GridSpec::new(0.1, 0.004, 5.0, 0.4, Boundary::Neumann).unwrap();
        let noise = NoiseField::sample(&g, 8, 1);
        let x0 = sample_profile(&g, |x| (-x * x).exp());
        let probes: Vec<Probe> = [(0, 50), (1, 3), (50, 0), (100, 49), (100, 99)].to_vec();
        for c in [Coefficient::zero(), make_lipschitz(1.0, 0.3)] {
            let f = solve(&g, &c, &x0, &noise, FramePolicy::default()).unwrap();
            let r = mild_residual(&f, &c, &noise, &probes).unwrap();
            assert!(r < 1e-10, "{} {r}", c.label);
        }
        let f = solve(&g, &Coefficient::zero(), &x0, &noise, FramePolicy { stride: 2 }).unwrap();
        assert!(mild_residual(&f, &Coefficient::zero(), &noise, &probes).is_err());
    }
}
