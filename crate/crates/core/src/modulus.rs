//! Regularity of the difference field near its small-value set.
//!
//! Distances are parabolic, `d((t,x),(t',x')) = √|t - t'| + |x - x'|`, and all
//! scans run over stored grid points only.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::decomp::Decomposition;
use crate::solver::SolutionField;
use crate::stats::{self, LineFit};
use crate::yamada::{a_seq, m_seq, Stencil};
use crate::{Error, Result};

/// `γ_0 = 1`, `γ_{m+1} = γ γ_m + 1/2`, computed until the first value above 2.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaLadder {
    pub gamma: f64,
    /// `γ_0, …, γ_{m̄+1}`.
    pub gamma_m: Vec<f64>,
    /// First `m` with `γ_{m+1} > 2`.
    pub m_bar: usize,
}

pub fn gamma_ladder(gamma: f64) -> Result<GammaLadder> {
    if !(gamma > 0.75 && gamma < 1.0) {
        return Err(Error::domain(format!("ladder needs 3/4 < γ < 1, got {gamma}")));
    }
    let mut g = vec![1.0];
    while *g.last().unwrap() <= 2.0 {
        let next = gamma * g.last().unwrap() + 0.5;
        g.push(next);
    }
    let m_bar = g.len() - 2;
    Ok(GammaLadder { gamma, gamma_m: g, m_bar })
}

impl GammaLadder {
    /// `γ_m` for any `m` (continues the recursion past the stored prefix).
    pub fn gamma_at(&self, m: usize) -> f64 {
        if let Some(&v) = self.gamma_m.get(m) {
            return v;
        }
        let mut v = *self.gamma_m.last().unwrap();
        for _ in self.gamma_m.len()..=m {
            v = self.gamma * v + 0.5;
        }
        v
    }

    /// `γ̃_m = min(γ_m, 2)`.
    pub fn gamma_tilde(&self, m: usize) -> f64 {
        self.gamma_at(m).min(2.0)
    }

    /// `lim γ_m = 1/(2(1-γ))`.
    pub fn limit(&self) -> f64 {
        1.0 / (2.0 * (1.0 - self.gamma))
    }
}

/// Extra witness conditions of the refined set: `|u| <= a_n ∧ √a_n 2^{-N}` and
/// `|u'_{1,a_n}| <= a_n^β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub n: u32,
    pub beta: f64,
}

/// A stored grid point `(frame, cell)` and the witness that admits it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZPoint {
    pub frame: usize,
    pub cell: usize,
    pub witness_frame: usize,
    pub witness_cell: usize,
}

/// Grid points of `[0, T_K] × [-K, K]` within parabolic distance `2^{-N}` of a
/// point where `|u| <= 2^{-N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSet {
    pub level: u32,
    pub k: f64,
    pub t_k: f64,
    pub refinement: Option<Refinement>,
    pub points: Vec<ZPoint>,
}

fn parabolic(u: &SolutionField, a: (usize, usize), b: (usize, usize)) -> f64 {
    let dt = (u.frame_time(a.0) - u.frame_time(b.0)).abs();
    let dx = (u.grid.x(a.1) - u.grid.x(b.1)).abs();
    dt.sqrt() + dx
}

fn witness_ok(u: &SolutionField, j: usize, i: usize, level: u32, refine: Option<(&Refinement, f64)>) -> Result<bool> {
    let r = 2f64.powi(-(level as i32));
    let v = u.get(j, i).abs();
    match refine {
        None => Ok(v <= r),
        Some((rf, bound)) => {
            let a = a_seq(rf.n);
            if v > a.min(a.sqrt() * r) {
                return Ok(false);
            }
            let dc = Decomposition::new(u, a)?;
            let d = dc.u1_prime(u.frame_time(j), u.grid.x(i))?;
            Ok(d.abs() <= bound)
        }
    }
}

fn extract(u: &SolutionField, level: u32, k: f64, t_k: f64, refinement: Option<Refinement>) -> Result<ZSet> {
    let g = &u.grid;
    let r = 2f64.powi(-(level as i32));
    if r < g.dx {
        return Err(Error::domain(format!("2^-N = {r:e} is below the grid spacing {:e}", g.dx)));
    }
    let bound = refinement.map(|rf| a_seq(rf.n).powf(rf.beta));
    let frames: Vec<usize> = (0..u.frames()).take_while(|&j| u.frame_time(j) <= t_k + 1e-12).collect();
    let n = g.cells();
    // nearest witness cell per frame, ties to the left
    let mut nearest: Vec<Vec<Option<usize>>> = Vec::with_capacity(frames.len());
    for &j in &frames {
        let mut mask = vec![false; n];
        for (i, m) in mask.iter_mut().enumerate() {
            *m = witness_ok(u, j, i, level, refinement.as_ref().zip(bound))?;
        }
        let mut left = vec![None; n];
        let mut last = None;
        for i in 0..n {
            if mask[i] {
                last = Some(i);
            }
            left[i] = last;
        }
        let mut row = vec![None; n];
        let mut next = None;
        for i in (0..n).rev() {
            if mask[i] {
                next = Some(i);
            }
            row[i] = match (left[i], next) {
                (Some(l), Some(h)) => Some(if i - l <= h - i { l } else { h }),
                (l, h) => l.or(h),
            };
        }
        nearest.push(row);
    }
    let mut points = Vec::new();
    for (a, &j) in frames.iter().enumerate() {
        for i in 0..n {
            if g.x(i).abs() > k {
                continue;
            }
            // the point's own frame first, then outward until the lag exceeds r
            let mut found = None;
            'scan: for off in 0..frames.len() {
                let mut reachable = false;
                for b in [a.checked_sub(off), Some(a + off).filter(|&b| off > 0 && b < frames.len())].into_iter().flatten() {
                    let lag = (u.frame_time(j) - u.frame_time(frames[b])).abs().sqrt();
                    if lag > r {
                        continue;
                    }
                    reachable = true;
                    if let Some(c) = nearest[b][i] {
                        if lag + (g.x(i) - g.x(c)).abs() <= r * (1.0 + 1e-12) {
                            found = Some((b, c));
                            break 'scan;
                        }
                    }
                }
                if !reachable {
                    break;
                }
            }
            if let Some((b, c)) = found {
                points.push(ZPoint { frame: j, cell: i, witness_frame: frames[b], witness_cell: c });
            }
        }
    }
    Ok(ZSet { level, k, t_k, refinement, points })
}

/// `Z(N, K)` on the stored frames up to `T_K`.
pub fn extract_z(u: &SolutionField, level: u32, k: f64, t_k: f64) -> Result<ZSet> {
    extract(u, level, k, t_k, None)
}

/// `Z(N, n, K, β)`: witnesses also need `|u| <= a_n ∧ √a_n 2^{-N}` and
/// `|u'_{1,a_n}| <= a_n^β` (derivative from the decomposition at window `a_n`).
pub fn extract_z_refined(u: &SolutionField, level: u32, n: u32, k: f64, t_k: f64, beta: f64) -> Result<ZSet> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("β must lie in [0, 1], got {beta}")));
    }
    extract(u, level, k, t_k, Some(Refinement { n, beta }))
}

impl ZSet {
    /// Number of stored points that fail to re-validate against `u`.
    pub fn validate(&self, u: &SolutionField) -> Result<usize> {
        let r = 2f64.powi(-(self.level as i32));
        let bound = self.refinement.map(|rf| a_seq(rf.n).powf(rf.beta));
        let mut bad = 0;
        for p in &self.points {
            let d = parabolic(u, (p.frame, p.cell), (p.witness_frame, p.witness_cell));
            let inside = u.frame_time(p.frame) <= self.t_k + 1e-12
                && u.frame_time(p.witness_frame) <= self.t_k + 1e-12
                && u.grid.x(p.cell).abs() <= self.k;
            let ok = inside
                && d <= r * (1.0 + 1e-12)
                && witness_ok(u, p.witness_frame, p.witness_cell, self.level, self.refinement.as_ref().zip(bound))?;
            if !ok {
                bad += 1;
            }
        }
        Ok(bad)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-bin summary of `log|Δu|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinStatistic {
    Mean,
    /// Empirical quantile in `(0, 1]`.
    Quantile(f64),
    /// Largest value: the upper envelope that a modulus of continuity bounds.
    Max,
}

/// Pair collection and binning for [`estimate_modulus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusOptions {
    /// Largest parabolic distance of a pair.
    pub window: f64,
    pub bins: usize,
    /// Anchors are taken evenly from the Z-set up to this many.
    pub max_anchors: usize,
    pub statistic: BinStatistic,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        ModulusOptions { window: 0.25, bins: 12, max_anchors: 4000, statistic: BinStatistic::Max }
    }
}

/// Minimum number of admissible pairs.
pub const MIN_PAIRS: usize = 30;

/// One populated bin: mean `log d`, the bin statistic of `log|Δu|`, pair count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusBin {
    pub log_d: f64,
    pub log_du: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusFit {
    pub xi_hat: f64,
    pub intercept: f64,
    /// 95% band on the slope over the bins.
    pub ci: (f64, f64),
    pub r_squared: f64,
    pub pairs: usize,
    /// Pairs skipped because `Δu = 0` exactly.
    pub zero_pairs: usize,
    pub anchors: usize,
    pub bins: Vec<ModulusBin>,
}

/// Slope of `log|Δu|` against `log d` over pairs anchored at Z-set points, with
/// pairs binned by `log d`, each bin reduced to one statistic and weighted equally.
pub fn estimate_modulus(u: &SolutionField, z: &ZSet, opts: ModulusOptions) -> Result<ModulusFit> {
    if z.is_empty() {
        return Err(Error::InsufficientData { found: 0, needed: MIN_PAIRS });
    }
    if !(opts.window > 0.0) || opts.bins < 3 {
        return Err(Error::domain("modulus fit needs window > 0 and at least 3 bins"));
    }
    let g = &u.grid;
    let frames: Vec<usize> = (0..u.frames()).take_while(|&j| u.frame_time(j) <= z.t_k + 1e-12).collect();
    let min_lag = frames.windows(2).map(|w| u.frame_time(w[1]) - u.frame_time(w[0])).fold(f64::INFINITY, f64::min);
    let d_min = g.dx.min(min_lag.sqrt());
    let (lo, hi) = (d_min.ln(), opts.window.ln());
    if !(hi > lo) {
        return Err(Error::domain(format!("window {} does not exceed the smallest distance {d_min:e}", opts.window)));
    }
    if let BinStatistic::Quantile(q) = opts.statistic {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::domain(format!("bin quantile must lie in (0, 1], got {q}")));
        }
    }
    let width = (hi - lo) / opts.bins as f64;
    let keep = matches!(opts.statistic, BinStatistic::Quantile(_));
    let mut sum_d = vec![0.0; opts.bins];
    let mut sum_u = vec![0.0; opts.bins];
    let mut max_u = vec![f64::NEG_INFINITY; opts.bins];
    let mut count = vec![0usize; opts.bins];
    let mut logs: Vec<Vec<f64>> = vec![Vec::new(); opts.bins];
    let mut zero_pairs = 0;
    let stride = z.len().div_ceil(opts.max_anchors.max(1));
    let anchors: Vec<&ZPoint> = z.points.iter().step_by(stride).collect();
    for p in &anchors {
        let t = u.frame_time(p.frame);
        let x = g.x(p.cell);
        let base = u.get(p.frame, p.cell);
        for &jb in &frames {
            let lag = (u.frame_time(jb) - t).abs().sqrt();
            if lag > opts.window {
                continue;
            }
            let reach = opts.window - lag;
            let span = (reach / g.dx).floor() as usize;
            let i_lo = p.cell.saturating_sub(span);
            let i_hi = (p.cell + span).min(g.cells() - 1);
            for i in i_lo..=i_hi {
                if jb == p.frame && i == p.cell {
                    continue;
                }
                let d = lag + (g.x(i) - x).abs();
                if d > opts.window || d <= 0.0 {
                    continue;
                }
                let du = (u.get(jb, i) - base).abs();
                if du == 0.0 {
                    zero_pairs += 1;
                    continue;
                }
                let ld = d.ln();
                let b = (((ld - lo) / width).floor().max(0.0) as usize).min(opts.bins - 1);
                let lu = du.ln();
                sum_d[b] += ld;
                sum_u[b] += lu;
                max_u[b] = max_u[b].max(lu);
                count[b] += 1;
                if keep {
                    logs[b].push(lu);
                }
            }
        }
    }
    let pairs: usize = count.iter().sum();
    if pairs < MIN_PAIRS {
        return Err(Error::InsufficientData { found: pairs, needed: MIN_PAIRS });
    }
    let bins: Vec<ModulusBin> = (0..opts.bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b];
            let log_du = match opts.statistic {
                BinStatistic::Mean => sum_u[b] / c as f64,
                BinStatistic::Quantile(q) => stats::quantile(&logs[b], q),
                BinStatistic::Max => max_u[b],
            };
            ModulusBin { log_d: sum_d[b] / c as f64, log_du, pairs: c }
        })
        .collect();
    if bins.len() < 3 {
        return Err(Error::InsufficientData { found: bins.len(), needed: 3 });
    }
    let xs: Vec<f64> = bins.iter().map(|b| b.log_d).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.log_du).collect();
    let LineFit { slope, intercept, slope_stderr, r_squared } =
        stats::fit_line(&xs, &ys).ok_or(Error::InsufficientData { found: bins.len(), needed: 3 })?;
    let half = 1.96 * slope_stderr;
    Ok(ModulusFit {
        xi_hat: slope,
        intercept,
        ci: (slope - half, slope + half),
        r_squared,
        pairs,
        zero_pairs,
        anchors: anchors.len(),
        bins,
    })
}

/// `x̂_n(t, x)`: leftmost grid minimiser of `|u(t, ·)|` on `[x - √a_n, x + √a_n]`.
pub fn hat_x(u: &SolutionField, frame: usize, n: u32, x: f64) -> Result<f64> {
    let g = &u.grid;
    let w = a_seq(n).sqrt();
    if w < g.dx {
        return Err(Error::domain(format!("√a_n = {w:e} is below the grid spacing {:e}", g.dx)));
    }
    if x - w < -g.half_width || x + w > g.half_width {
        return Err(Error::domain(format!("window around x = {x} leaves the domain")));
    }
    let row = u.frame(frame);
    let first = g.nearest_cell(x - w);
    let first = if g.x(first) < x - w - 1e-12 { first + 1 } else { first };
    let mut best = (f64::INFINITY, first);
    for (i, v) in row.iter().enumerate().skip(first) {
        if g.x(i) > x + w + 1e-12 {
            break;
        }
        if v.abs() < best.0 {
            best = (v.abs(), i);
        }
    }
    Ok(g.x(best.1))
}

/// The β-grid for the J-classification. When the exact `L` exceeds `l_max`
/// the β values are re-spaced uniformly on `[0, 1/2 - 6ε₁]` and the grid is
/// marked non-conforming.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaGrid {
    pub gamma: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// `⌊(1/2 - 6ε₁)/ε₀⌋`.
    pub l_exact: u64,
    pub l: usize,
    /// `β_0, …, β_{L+1}` with `β_{L+1} = 1/2 - ε₁`.
    pub betas: Vec<f64>,
    /// `α_i = 2(β_i + ε₁)`, `i = 0..=L`.
    pub alphas: Vec<f64>,
    pub conforming: bool,
}

pub const DEFAULT_L_MAX: usize = 8;

pub fn beta_grid(gamma: f64, eps0: f64, eps1: f64, l_max: usize) -> Result<BetaGrid> {
    let e1_max = (gamma - 0.75) / 100.0;
    if !(eps1 > 0.0 && eps1 < e1_max) {
        return Err(Error::domain(format!("need 0 < ε1 < (γ - 3/4)/100 = {e1_max:e}, got {eps1:e}")));
    }
    if !(eps0 > 0.0 && eps0 < eps1 / 100.0) {
        return Err(Error::domain(format!("need 0 < ε0 < ε1/100 = {:e}, got {eps0:e}", eps1 / 100.0)));
    }
    if l_max == 0 {
        return Err(Error::domain("L_max must be at least 1"));
    }
    let top = 0.5 - 6.0 * eps1;
    let l_exact = (top / eps0).floor() as u64;
    let conforming = l_exact <= l_max as u64;
    let (l, step) = if conforming { (l_exact as usize, eps0) } else { (l_max, top / l_max as f64) };
    let mut betas: Vec<f64> = (0..=l).map(|i| i as f64 * step).collect();
    let alphas = betas.iter().map(|b| 2.0 * (b + eps1)).collect();
    betas.push(0.5 - eps1);
    Ok(BetaGrid { gamma, eps0, eps1, l_exact, l, betas, alphas, conforming })
}

impl BetaGrid {
    /// Band of a derivative value at level `n`; `None` when it lies outside every band.
    ///
    /// `J_0: v >= a^{β_1}/4`, `J_i: v ∈ [a^{β_{i+1}}/4, a^{β_i}/4]` for `0 < i < L`,
    /// `J_L: v ∈ [0, a^{β_L}/4]`; shared endpoints go to the lower index.
    pub fn band(&self, a_n: f64, v: f64) -> Option<usize> {
        let thr = |i: usize| a_n.powf(self.betas[i]) / 4.0;
        if !(v >= 0.0) {
            return None;
        }
        if self.l == 0 {
            return Some(0);
        }
        if v >= thr(1) {
            return Some(0);
        }
        (1..self.l).find(|&i| v >= thr(i + 1) && v <= thr(i)).or(if v <= thr(self.l) { Some(self.l) } else { None })
    }
}

/// Label of one cell in [`classify_j`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JLabel {
    pub x: f64,
    pub smoothed: f64,
    /// `u'_{1,a_n}(s, x̂_n(s,x))`, evaluated only when the gate passes.
    pub derivative: Option<f64>,
    pub band: Option<usize>,
}

/// Labels every cell with `|x| <= K0` at frame `frame`. The common gate is
/// `|⟨u_s, Φ^{m_{n+1}}_x⟩| <= a_n`.
pub fn classify_j(u: &SolutionField, n: u32, frame: usize, k0: f64, grid: &BetaGrid) -> Result<Vec<JLabel>> {
    let g = &u.grid;
    let a = a_seq(n);
    let pairing = Stencil::mollifier(m_seq(n + 1), g.dx)?;
    let dc = Decomposition::new(u, a)?;
    let row = u.frame(frame);
    let s = u.frame_time(frame);
    let mut out = Vec::new();
    for i in 0..g.cells() {
        let x = g.x(i);
        if x.abs() > k0 {
            continue;
        }
        let smoothed = pairing.apply(row, i);
        let (derivative, band) = if smoothed.abs() <= a {
            let xh = hat_x(u, frame, n, x)?;
            let d = dc.u1_prime(s, xh)?;
            (Some(d), grid.band(a, d))
        } else {
            (None, None)
        };
        out.push(JLabel { x, smoothed, derivative, band });
    }
    Ok(out)
}

/// Counts per band (`0..=L`) and of unlabelled cells.
pub fn j_histogram(labels: &[JLabel], l: usize) -> (Vec<usize>, usize) {
    let mut counts = vec![0; l + 1];
    let mut none = 0;
    for lab in labels {
        match lab.band {
            Some(b) => counts[b] += 1,
            None => none += 1,
        }
    }
    (counts, none)
}

/// Summary of weighted-sup separations `sup_x |u(t,x)| e^{-|x|}` across paths at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationRow {
    pub gamma: f64,
    pub t: f64,
    pub paths: usize,
    pub mean: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub max: f64,
}

pub fn separation_row(gamma: f64, t: f64, values: &[f64]) -> Result<SeparationRow> {
    if values.is_empty() {
        return Err(Error::InsufficientData { found: 0, needed: 1 });
    }
    Ok(SeparationRow {
        gamma,
        t,
        paths: values.len(),
        mean: stats::mean(values),
        q10: stats::quantile(values, 0.1),
        q50: stats::quantile(values, 0.5),
        q90: stats::quantile(values, 0.9),
        max: values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, GridSpec};

    fn field(cells: usize, half: f64, frames: &[usize], dt: f64, f: impl Fn(f64, f64) -> f64) -> SolutionField {
        let dx = 2.0 * half / cells as f64;
        let horizon = *frames.last().unwrap() as f64 * dt;
        let g = GridSpec::new(dx, dt.min(0.5 * dx * dx), half, horizon.max(dt), Boundary::Neumann).unwrap();
        let mut values = Vec::new();
        let steps: Vec<usize> = frames.iter().map(|&k| (k as f64 * dt / g.dt).round() as usize).collect();
        for &k in &steps {
            values.extend(g.cell_centres().map(|x| f(g.t(k), x)));
        }
        SolutionField::from_frames(g, steps, values).unwrap()
    }

    #[test]
    fn ladder() {
        let l = gamma_ladder(0.8).unwrap();
        let expected = [1.0, 1.3, 1.54, 1.732, 1.8856, 2.00848];
        assert_eq!(l.gamma_m.len(), expected.len());
        for (a, b) in l.gamma_m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(l.m_bar, 4);
        assert!((l.limit() - 2.5).abs() < 1e-12);
        assert_eq!(l.gamma_tilde(7), 2.0);
        // closed form γ_m = γ^m + (1 - γ^m)/(2(1 - γ))
        let m = 30;
        let closed = 0.8f64.powi(m) + (1.0 - 0.8f64.powi(m)) / 0.4;
        assert!((l.gamma_at(m as usize) - closed).abs() < 1e-12);
        assert!(gamma_ladder(0.75).is_err());
        assert!(gamma_ladder(1.0).is_err());
    }

    #[test]
    fn z_set_trivial_cases() {
        let zero = field(64, 1.0, &[0, 1, 2], 1e-4, |_, _| 0.0);
        let z = extract_z(&zero, 4, 0.5, 1.0).unwrap();
        let inside = (0..64).filter(|&i| zero.grid.x(i).abs() <= 0.5).count();
        assert_eq!(z.len(), 3 * inside);
        assert_eq!(z.validate(&zero).unwrap(), 0);

        let one = field(64, 1.0, &[0, 1], 1e-4, |_, _| 1.0);
        assert!(extract_z(&one, 2, 1.0, 1.0).unwrap().is_empty());

        let lin = field(65, 1.0, &[0, 1], 1e-4, |_, x| x);
        let z = extract_z(&lin, 3, 1.0, 1.0).unwrap();
        assert!(z.points.iter().any(|p| p.cell == 32));
        assert_eq!(z.validate(&lin).unwrap(), 0);
        assert!(extract_z(&lin, 10, 1.0, 1.0).is_err());
    }

    #[test]
    fn hat_x_cases() {
        let u = field(2000, 2.0, &[0], 1e-4, |_, y| y.abs());
        assert!(hat_x(&u, 0, 2, 0.0).unwrap().abs() <= u.grid.dx);
        let c = field(2000, 2.0, &[0], 1e-4, |_, _| 0.3);
        let w = a_seq(2).sqrt();
        let h = hat_x(&c, 0, 2, 0.1).unwrap();
        assert!(h >= 0.1 - w - 1e-12 && h < 0.1 - w + c.grid.dx);
        let shift = 0.3 * w;
        let q = field(2000, 2.0, &[0], 1e-4, |_, y| (y - shift).powi(2));
        let h = hat_x(&q, 0, 2, 0.0).unwrap();
        assert_eq!(h, q.grid.x(q.grid.nearest_cell(shift)));
        assert!(hat_x(&q, 0, 2, 1.9).is_err());
    }

    #[test]
    fn beta_grid_arithmetic() {
        let b = beta_grid(0.8, 3e-6, 4e-4, DEFAULT_L_MAX).unwrap();
        assert_eq!(b.l_exact, 165_866);
        assert!(!b.conforming);
        assert_eq!(b.l, 8);
        assert_eq!(b.betas.len(), 10);
        assert!((b.betas[8] - (0.5 - 6.0 * 4e-4)).abs() < 1e-15);
        assert!((b.betas[9] - (0.5 - 4e-4)).abs() < 1e-15);
        assert!((b.alphas[0] - 8e-4).abs() < 1e-15);
        assert!(beta_grid(0.8, 3e-6, 6e-4, 8).is_err());
        assert!(beta_grid(0.8, 5e-6, 4e-4, 8).is_err());
        let exact = beta_grid(0.99, 2e-3 / 100.0 * 0.99, 2e-3, 1 << 20).unwrap();
        assert!(exact.conforming);
        assert_eq!(exact.l as u64, exact.l_exact);
    }

    #[test]
    fn bands_partition() {
        let b = beta_grid(0.8, 3e-6, 4e-4, 8).unwrap();
        let a = a_seq(3);
        assert_eq!(b.band(a, 10.0), Some(0));
        assert_eq!(b.band(a, -1e-3), None);
        assert_eq!(b.band(a, 0.0), Some(8));
        for k in 0..400 {
            let v = 0.3 * (k as f64 / 400.0).powi(4);
            let label = b.band(a, v).unwrap();
            let thr = |i: usize| a.powf(b.betas[i]) / 4.0;
            match label {
                0 => assert!(v >= thr(1)),
                l if l == b.l => assert!(v <= thr(l)),
                i => assert!(v >= thr(i + 1) && v <= thr(i)),
            }
        }
    }

    #[test]
    fn classify_gate_and_partition() {
        let u = field(800, 2.0, &[0, 50, 100], 1e-3, |t, x| t * 10.0 * x);
        let g = beta_grid(0.8, 3e-6, 4e-4, 8).unwrap();
        let labels = classify_j(&u, 2, 2, 1.0, &g).unwrap();
        let a = a_seq(2);
        for l in &labels {
            if l.smoothed.abs() > a {
                assert!(l.band.is_none() && l.derivative.is_none());
            } else {
                assert!(l.derivative.unwrap() > 0.0);
                assert_eq!(l.band, g.band(a, l.derivative.unwrap()));
            }
        }
        assert!(labels.iter().any(|l| l.band == Some(0)));
        let (counts, none) = j_histogram(&labels, g.l);
        assert_eq!(counts.iter().sum::<usize>() + none, labels.len());
    }

    #[test]
    fn separation_summary() {
        let r = separation_row(1.0, 0.5, &[0.0; 10]).unwrap();
        assert_eq!((r.mean, r.max, r.q50), (0.0, 0.0, 0.0));
        assert!(separation_row(1.0, 0.5, &[]).is_err());
    }
}
