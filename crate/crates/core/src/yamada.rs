//! Yamada–Watanabe functions and the local-time functionals built from them.
//!
//! Level `n` uses `a_n = exp(-n(n+1)/2)` and a density `ψ_n` on `(a_n, a_{n-1})`.
//! With `r = (ln x - ln a_n)/n ∈ (0, 1)` (note `ln a_{n-1} - ln a_n = n`) we take
//!
//! ```text
//! ψ_n(x) = 30 r²(1-r)² / (n x)
//! ```
//!
//! so `ψ_n(x) dx = 30 r²(1-r)² dr`, which integrates to exactly 1 and peaks at
//! `1.875/(n x) < 2/(n x)`. Then `φ'_n(x) = sgn(x)·(10r³ - 15r⁴ + 6r⁵)` and `φ_n`
//! is its closed-form antiderivative.
//!
//! The space mollifier is `Φ(y) = (35/32)(1 - y²)³` on `(-1, 1)`, rescaled as
//! `Φ^m_x(y) = m Φ(m(x - y))`. Pairings `⟨u, Φ^m_x⟩` are computed with a fixed
//! stencil: the Catmull–Rom interpolant of the samples is integrated exactly
//! against the polynomial profile, which reproduces quadratics exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::coeff::Coefficient;
use crate::grid::GridSpec;
use crate::noise::NoiseSource;
use crate::quad::{self, QuadOptions, GL5_NODES, GL5_WEIGHTS};
use crate::solver::CoupledRun;
use crate::{Error, Result};

/// `a_n = exp(-n(n+1)/2)`.
pub fn a_seq(n: u32) -> f64 {
    let n = n as f64;
    (-n * (n + 1.0) / 2.0).exp()
}

/// `m_n = a_{n-1}^{-1/2} = exp((n-1)n/4)` for `n >= 1`.
pub fn m_seq(n: u32) -> f64 {
    let n = n as f64;
    ((n - 1.0) * n / 4.0).exp()
}

/// Largest `n` whose pairing scale `m_{n+1}` satisfies `m_{n+1}·dx <= 1/2`.
pub fn max_level(dx: f64) -> Option<u32> {
    (1..64u32).take_while(|&n| m_seq(n + 1) * dx <= 0.5).last()
}

/// `30 r²(1-r)²`, the density of `ψ_n` in the log variable.
fn bump(r: f64) -> f64 {
    if r <= 0.0 || r >= 1.0 {
        return 0.0;
    }
    let s = r * (1.0 - r);
    30.0 * s * s
}

/// `∫_0^r bump = 10r³ - 15r⁴ + 6r⁵`, clamped to `[0, 1]`.
fn bump_cdf(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        r * r * r * (10.0 + r * (-15.0 + 6.0 * r))
    }
}

/// Level-`n` functions `ψ_n, φ_n, φ'_n, φ''_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YWFamily {
    pub n: u32,
    pub a_n: f64,
    pub a_prev: f64,
    /// `m_n = a_{n-1}^{-1/2}`.
    pub m_n: f64,
    /// `φ_n(a_{n-1})`.
    phi_top: f64,
}

impl YWFamily {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(Error::domain(format!("level n must be in 1..=30, got {n}")));
        }
        let mut fam = YWFamily { n, a_n: a_seq(n), a_prev: a_seq(n - 1), m_n: m_seq(n), phi_top: 0.0 };
        fam.phi_top = fam.phi_inner(1.0);
        // ψ_n <= 1.875/(n x) by construction; guard anyway.
        let peak = 30.0 / 16.0;
        if peak > 2.0 {
            return Err(Error::domain("ψ_n envelope infeasible"));
        }
        Ok(fam)
    }

    fn log_var(&self, x: f64) -> f64 {
        (x.ln() - self.a_n.ln()) / self.n as f64
    }

    pub fn psi(&self, x: f64) -> f64 {
        if x <= self.a_n || x >= self.a_prev {
            return 0.0;
        }
        bump(self.log_var(x)) / (self.n as f64 * x)
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= self.a_n {
            return 0.0;
        }
        let v = if ax >= self.a_prev { 1.0 } else { bump_cdf(self.log_var(ax)) };
        v.copysign(x)
    }

    pub fn phi_second(&self, x: f64) -> f64 {
        self.psi(x.abs())
    }

    /// `φ_n(a_n e^{n r}) = n a_n ∫_0^r P(ρ) e^{nρ} dρ`, `P = 10ρ³ - 15ρ⁴ + 6ρ⁵`.
    fn phi_inner(&self, r: f64) -> f64 {
        let n = self.n as f64;
        // ∫ P e^{nρ} = e^{nρ} Σ_k (-1)^k P^{(k)}(ρ) / n^{k+1}
        let antideriv = |rho: f64| -> f64 {
            let p = [
                rho * rho * rho * (10.0 + rho * (-15.0 + 6.0 * rho)),
                rho * rho * (30.0 + rho * (-60.0 + 30.0 * rho)),
                rho * (60.0 + rho * (-180.0 + 120.0 * rho)),
                60.0 + rho * (-360.0 + 360.0 * rho),
                -360.0 + 720.0 * rho,
                720.0,
            ];
            let mut sum = 0.0;
            let mut nk = n;
            for (k, d) in p.iter().enumerate() {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * d / nk;
                nk *= n;
            }
            (n * rho).exp() * sum
        };
        (n * self.a_n * (antideriv(r) - antideriv(0.0))).max(0.0)
    }

    pub fn phi(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= self.a_n {
            0.0
        } else if ax >= self.a_prev {
            self.phi_top + (ax - self.a_prev)
        } else {
            self.phi_inner(self.log_var(ax))
        }
    }

    /// `sup_x (|x| - φ_n(x)) = a_{n-1} - φ_n(a_{n-1})`, attained for all `|x| >= a_{n-1}`.
    pub fn gap(&self) -> f64 {
        self.a_prev - self.phi_top
    }

    /// `∫_0^∞ ψ_n(x) h(x) dx`, by quadrature in the log variable.
    pub fn half_line_pairing(&self, h: impl Fn(f64) -> f64) -> Result<f64> {
        let n = self.n as f64;
        let a = self.a_n;
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, max_intervals: 2000 };
        Ok(quad::integrate(|r| bump(r) * h(a * (n * r).exp()), 0.0, 1.0, opts)?.value)
    }

    /// `∫_ℝ φ''_n(x) h(x) dx = ∫_0^∞ ψ_n(x) (h(x) + h(-x)) dx`.
    pub fn full_line_pairing(&self, h: impl Fn(f64) -> f64) -> Result<f64> {
        self.half_line_pairing(|x| h(x) + h(-x))
    }
}

/// Outcome of checking the level-`n` invariants on a dense grid of the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyCheck {
    pub n: u32,
    pub mass_error: f64,
    /// `max ψ_n(x) n x / 2` over the grid (must be <= 1).
    pub envelope_ratio: f64,
    pub max_phi_prime: f64,
    /// `max |φ_n|` on `|x| <= a_n`.
    pub max_phi_below: f64,
    /// Range of `|x| - φ_n(x)`.
    pub min_gap: f64,
    pub max_gap: f64,
}

impl FamilyCheck {
    pub fn mass_ok(&self) -> bool {
        self.mass_error <= 1e-10
    }
    pub fn envelope_ok(&self) -> bool {
        self.envelope_ratio <= 1.0
    }
    pub fn phi_prime_ok(&self) -> bool {
        self.max_phi_prime <= 1.0
    }
    pub fn vanishing_ok(&self) -> bool {
        self.max_phi_below == 0.0
    }
    pub fn gap_ok(&self, a_prev: f64) -> bool {
        self.min_gap >= -1e-15 && self.max_gap <= a_prev * (1.0 + 1e-12)
    }
    pub fn all_ok(&self) -> bool {
        let a_prev = a_seq(self.n - 1);
        self.mass_ok() && self.envelope_ok() && self.phi_prime_ok() && self.vanishing_ok() && self.gap_ok(a_prev)
    }
}

/// Evaluates the five family invariants on `points` log-spaced points of
/// `[a_n/10, 10 a_{n-1}]` (both signs) plus `points` uniform points of `[-a_n, a_n]`.
pub fn check_family(fam: &YWFamily, points: usize) -> Result<FamilyCheck> {
    let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 4000 };
    // mass in the original variable, independent of the log-variable construction
    let mut pts = Vec::with_capacity(65);
    for j in 0..=64 {
        pts.push(fam.a_n * (fam.n as f64 * j as f64 / 64.0).exp());
    }
    let mass = quad::integrate_with_breaks(|x| fam.psi(x), &pts, opts)?.value;
    let mut out = FamilyCheck {
        n: fam.n,
        mass_error: (mass - 1.0).abs(),
        envelope_ratio: 0.0,
        max_phi_prime: 0.0,
        max_phi_below: 0.0,
        min_gap: f64::INFINITY,
        max_gap: f64::NEG_INFINITY,
    };
    let (lo, hi) = ((fam.a_n / 10.0).ln(), (10.0 * fam.a_prev).ln());
    for j in 0..points {
        let x = (lo + (hi - lo) * j as f64 / (points - 1).max(1) as f64).exp();
        out.envelope_ratio = out.envelope_ratio.max(fam.psi(x) * fam.n as f64 * x / 2.0);
        for s in [x, -x] {
            out.max_phi_prime = out.max_phi_prime.max(fam.phi_prime(s).abs());
            let gap = s.abs() - fam.phi(s);
            out.min_gap = out.min_gap.min(gap);
            out.max_gap = out.max_gap.max(gap);
        }
    }
    for j in 0..points {
        let x = fam.a_n * (2.0 * j as f64 / (points - 1).max(1) as f64 - 1.0);
        out.max_phi_below = out.max_phi_below.max(fam.phi(x).abs());
    }
    Ok(out)
}

/// `Φ(y) = (35/32)(1 - y²)³` on `(-1, 1)`.
pub fn mollifier_profile(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let s = 1.0 - y * y;
    35.0 / 32.0 * s * s * s
}

/// `Φ''(y) = (35/32)(1 - y²)(30y² - 6)` on `(-1, 1)`.
pub fn mollifier_profile_second(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        return 0.0;
    }
    35.0 / 32.0 * (1.0 - y * y) * (30.0 * y * y - 6.0)
}

/// Second moment `∫ y² Φ(y) dy`.
pub const MOLLIFIER_SECOND_MOMENT: f64 = 1.0 / 9.0;

/// Linear functional `Σ_j w_j v[i + lo + j]` (indices clamped to the grid),
/// translation invariant because pairings are only taken at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub lo: isize,
    pub weights: Vec<f64>,
}

/// Catmull–Rom basis on `τ ∈ [0, 1]` for the nodes `-1, 0, 1, 2`.
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t + 2.0 * t2 - t3),
        0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
        0.5 * (t + 4.0 * t2 - 3.0 * t3),
        0.5 * (-t2 + t3),
    ]
}

fn check_scale(m: f64, dx: f64) -> Result<()> {
    let ratio = m * dx;
    if !(ratio <= 0.5) {
        return Err(Error::GridTooCoarse { m, ratio, max_level: max_level(dx) });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Interp {
    CatmullRom,
    Linear,
}

impl Stencil {
    /// Integrates `profile(s)` (s in cell units, support `[-h, h]`) against the
    /// interpolant of the samples; exact for polynomial profiles of degree <= 6.
    fn build(h: f64, dx: f64, interp: Interp, profile: impl Fn(f64) -> f64) -> Self {
        let c_lo = (-h).floor() as isize;
        let c_hi = h.ceil() as isize;
        let lo = c_lo - 1;
        let mut weights = vec![0.0; (c_hi - c_lo + 3) as usize];
        for c in c_lo..c_hi {
            let a = (c as f64).max(-h);
            let b = ((c + 1) as f64).min(h);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for (node, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
                let s = mid + half * node;
                let tau = s - c as f64;
                let val = profile(s) * w * half * dx;
                let base = (c - 1 - lo) as usize;
                match interp {
                    Interp::CatmullRom => {
                        for (k, cr) in catmull_rom(tau).iter().enumerate() {
                            weights[base + k] += val * cr;
                        }
                    }
                    Interp::Linear => {
                        weights[base + 1] += val * (1.0 - tau);
                        weights[base + 2] += val * tau;
                    }
                }
            }
        }
        Stencil { lo, weights }
    }

    /// `⟨v, Φ^m_x⟩`.
    pub fn mollifier(m: f64, dx: f64) -> Result<Self> {
        check_scale(m, dx)?;
        Ok(Self::build(1.0 / (m * dx), dx, Interp::CatmullRom, |s| m * mollifier_profile(m * s * dx)))
    }

    /// `⟨v, ½ ∂²_x Φ^m_x⟩`.
    pub fn mollifier_half_laplacian(m: f64, dx: f64) -> Result<Self> {
        check_scale(m, dx)?;
        Ok(Self::build(1.0 / (m * dx), dx, Interp::CatmullRom, |s| 0.5 * m * m * m * mollifier_profile_second(m * s * dx)))
    }

    /// `⟨g, Φ^m_x⟩` for the piecewise-linear interpolant (nonnegative weights).
    pub fn mollifier_linear(m: f64, dx: f64) -> Result<Self> {
        check_scale(m, dx)?;
        Ok(Self::build(1.0 / (m * dx), dx, Interp::Linear, |s| m * mollifier_profile(m * s * dx)))
    }

    #[inline]
    pub fn apply(&self, v: &[f64], i: usize) -> f64 {
        let n = v.len() as isize;
        let start = i as isize + self.lo;
        if start >= 0 && start + self.weights.len() as isize <= n {
            let s = start as usize;
            return self.weights.iter().zip(&v[s..s + self.weights.len()]).map(|(w, x)| w * x).sum();
        }
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let idx = (start + j as isize).clamp(0, n - 1) as usize;
            acc += w * v[idx];
        }
        acc
    }

    /// `Σ_j (w_j)² g[i + lo + j]`, the variance weight of the noise pairing.
    #[inline]
    pub fn apply_squared(&self, v: &[f64], i: usize) -> f64 {
        let n = v.len() as isize;
        let start = i as isize + self.lo;
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let idx = (start + j as isize).clamp(0, n - 1) as usize;
            acc += w * w * v[idx];
        }
        acc
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `⟨u_s, Φ^{m_{n+1}}_x⟩` at every cell of a frame.
pub fn smoothed_frame(u: &[f64], n: u32, dx: f64) -> Result<Vec<f64>> {
    let st = Stencil::mollifier(m_seq(n + 1), dx)?;
    Ok((0..u.len()).map(|i| st.apply(u, i)).collect())
}

/// Time profile of the space-time test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Temporal {
    Constant,
    /// `1 - s/(2 t0)`, strictly positive on `[0, t0]`.
    Decreasing,
}

/// `Ψ_s(x) = w(s) (1 - (x/K1)²)³` on `|x| < K1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctions {
    pub k1: f64,
    pub t0: f64,
    pub temporal: Temporal,
}

impl TestFunctions {
    pub fn new(k1: f64, t0: f64, temporal: Temporal) -> Result<Self> {
        if !(k1 > 0.0 && t0 > 0.0) {
            return Err(Error::domain(format!("test function needs K1 > 0 and t0 > 0, got {k1}, {t0}")));
        }
        Ok(TestFunctions { k1, t0, temporal })
    }

    fn space(&self, x: f64) -> f64 {
        let r = x / self.k1;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - r * r;
        s * s * s
    }

    pub fn psi(&self, s: f64, x: f64) -> f64 {
        let w = match self.temporal {
            Temporal::Constant => 1.0,
            Temporal::Decreasing => 1.0 - s / (2.0 * self.t0),
        };
        w * self.space(x)
    }

    /// `∂_s Ψ_s(x)`.
    pub fn psi_dot(&self, _s: f64, x: f64) -> f64 {
        match self.temporal {
            Temporal::Constant => 0.0,
            Temporal::Decreasing => -self.space(x) / (2.0 * self.t0),
        }
    }

    /// `∫_0^t ∫ Ψ_s(x) dx ds` in closed form (`∫(1-r²)³ = 32/35`).
    pub fn space_time_mass(&self, t: f64) -> f64 {
        let space = self.k1 * 32.0 / 35.0;
        let time = match self.temporal {
            Temporal::Constant => t,
            Temporal::Decreasing => t - t * t / (4.0 * self.t0),
        };
        space * time
    }
}

/// Cells whose centre lies in the support of `Ψ`.
fn support_cells(grid: &GridSpec, k1: f64) -> core::ops::Range<usize> {
    let lo = (0..grid.cells()).find(|&i| grid.x(i) > -k1).unwrap_or(grid.cells());
    let hi = (0..grid.cells()).rev().find(|&i| grid.x(i) < k1).map_or(lo, |i| i + 1);
    lo..hi.max(lo)
}

/// Spatial part of the local-time functional at level `n`:
/// `a_n^{-3/2-2/n} ∫∫ 1(|⟨u_s,Φ^{m}_x⟩| < a_n) |u(s,y)|^{2γ} Φ^{m}_x(y) Ψ_s(x) dy dx`
/// with `m = m_{n+1}`; [`LocalTime::rate`] gives it for one time slice.
#[derive(Debug, Clone)]
pub struct LocalTime {
    pub fam: YWFamily,
    pub gamma: f64,
    pub test: TestFunctions,
    grid: GridSpec,
    pairing: Stencil,
    weights: Stencil,
    cells: core::ops::Range<usize>,
    prefactor: f64,
}

impl LocalTime {
    pub fn new(grid: &GridSpec, n: u32, gamma: f64, test: TestFunctions) -> Result<Self> {
        let fam = YWFamily::new(n)?;
        let m = m_seq(n + 1);
        let pairing = Stencil::mollifier(m, grid.dx)?;
        let weights = Stencil::mollifier_linear(m, grid.dx)?;
        let prefactor = fam.a_n.powf(-1.5 - 2.0 / n as f64);
        Ok(LocalTime { fam, gamma, test, grid: *grid, pairing, weights, cells: support_cells(grid, test.k1), prefactor })
    }

    /// Integrand in time at `s` for the frame `u`.
    pub fn rate(&self, s: f64, u: &[f64]) -> f64 {
        let two_gamma = 2.0 * self.gamma;
        let mut powered: Option<Vec<f64>> = None;
        let mut acc = 0.0;
        for i in self.cells.clone() {
            let w = self.test.psi(s, self.grid.x(i));
            if w == 0.0 || self.pairing.apply(u, i).abs() >= self.fam.a_n {
                continue;
            }
            let g = powered.get_or_insert_with(|| u.iter().map(|z| z.abs().powf(two_gamma)).collect());
            acc += self.weights.apply(g, i) * w;
        }
        self.prefactor * acc * self.grid.dx
    }

    /// `I^n(t)` on a stored run by the left-point rule over the stored frames.
    pub fn integrate(&self, run: &CoupledRun, t: f64) -> Result<f64> {
        if t > self.test.t0 + 1e-12 {
            return Err(Error::domain(format!("t = {t} exceeds the test-function horizon {}", self.test.t0)));
        }
        let u = &run.u;
        let mut total = 0.0;
        for j in 0..u.frames().saturating_sub(1) {
            let (s0, s1) = (u.frame_time(j), u.frame_time(j + 1).min(t));
            if s0 >= t {
                break;
            }
            total += self.rate(s0, u.frame(j)) * (s1 - s0);
        }
        Ok(total)
    }
}

/// The six terms of the Itô expansion of `Z_n(t) = ⟨φ_n(⟨u_t, Φ^{m_n}_·⟩), Ψ_t⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ItoTerms {
    /// Martingale term (noise increments).
    pub i1: f64,
    /// Laplacian term `⟨u_s, ½ΔΦ^m_x⟩`.
    pub i2: f64,
    /// Quadratic-variation term with `ψ_n` and `D²`.
    pub i3: f64,
    /// Time derivative of `Ψ`.
    pub i4: f64,
    /// Drift difference.
    pub i5: f64,
    /// `Z_n(t)`.
    pub zn: f64,
    /// `Z_n(0)`.
    pub zn0: f64,
}

impl ItoTerms {
    pub fn sum(&self) -> f64 {
        self.i1 + self.i2 + self.i3 + self.i4 + self.i5
    }

    /// `Z_n(t) - Z_n(0) - Σ I_i`.
    pub fn residual(&self) -> f64 {
        self.zn - self.zn0 - self.sum()
    }
}

/// Streaming evaluation of [`ItoTerms`] along a coupled run.
///
/// Feed `(k, X1^k, X2^k, ΔW_k)` for each step `k < k_end` via [`ItoAccumulator::step`],
/// then the state at `k_end` via [`ItoAccumulator::finish`].
#[derive(Debug, Clone)]
pub struct ItoAccumulator {
    pub fam: YWFamily,
    pub test: TestFunctions,
    grid: GridSpec,
    coeff: CoeffHandle,
    pairing: Stencil,
    half_laplacian: Stencil,
    cells: core::ops::Range<usize>,
    terms: ItoTerms,
    started: bool,
    u: Vec<f64>,
    d: Vec<f64>,
    d2: Vec<f64>,
    b: Vec<f64>,
    noise: Vec<f64>,
}

#[derive(Clone)]
struct CoeffHandle(Coefficient);

impl core::fmt::Debug for CoeffHandle {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        self.0.fmt(f)
    }
}

impl ItoAccumulator {
    pub fn new(grid: &GridSpec, coeff: &Coefficient, n: u32, test: TestFunctions) -> Result<Self> {
        let fam = YWFamily::new(n)?;
        // the pairing runs at m_n; the local-time scale m_{n+1} must be resolvable too
        check_scale(m_seq(n + 1), grid.dx)?;
        let pairing = Stencil::mollifier(fam.m_n, grid.dx)?;
        let half_laplacian = Stencil::mollifier_half_laplacian(fam.m_n, grid.dx)?;
        let c = grid.cells();
        Ok(ItoAccumulator {
            fam,
            test,
            grid: *grid,
            coeff: CoeffHandle(coeff.clone()),
            pairing,
            half_laplacian,
            cells: support_cells(grid, test.k1),
            terms: ItoTerms::default(),
            started: false,
            u: vec![0.0; c],
            d: vec![0.0; c],
            d2: vec![0.0; c],
            b: vec![0.0; c],
            noise: vec![0.0; c],
        })
    }

    fn load(&mut self, k: usize, x1: &[f64], x2: &[f64], dw: Option<&[f64]>) {
        let t = self.grid.t(k);
        let c = &self.coeff.0;
        let inv_dx = 1.0 / self.grid.dx;
        for i in 0..x1.len() {
            self.u[i] = x1[i] - x2[i];
            if let Some(dw) = dw {
                let y = self.grid.x(i);
                let d = c.sigma(t, y, x1[i]) - c.sigma(t, y, x2[i]);
                self.d[i] = d;
                self.d2[i] = d * d;
                self.noise[i] = d * dw[i] * inv_dx;
                self.b[i] = c.drift(t, y, x1[i]) - c.drift(t, y, x2[i]);
            }
        }
    }

    fn z(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in self.cells.clone() {
            let v = self.pairing.apply(&self.u, i);
            acc += self.fam.phi(v) * self.test.psi(t, self.grid.x(i));
        }
        acc * self.grid.dx
    }

    /// Adds the contributions of the step `t_k -> t_{k+1}`.
    pub fn step(&mut self, k: usize, x1: &[f64], x2: &[f64], dw: &[f64]) {
        self.load(k, x1, x2, Some(dw));
        let t = self.grid.t(k);
        if !self.started {
            self.terms.zn0 = self.z(t);
            self.started = true;
        }
        let (dt, dx) = (self.grid.dt, self.grid.dx);
        let drift = self.coeff.0.has_drift();
        let (mut i1, mut i2, mut i3, mut i4, mut i5) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in self.cells.clone() {
            let x = self.grid.x(i);
            let psi = self.test.psi(t, x);
            let v = self.pairing.apply(&self.u, i);
            let dphi = self.fam.phi_prime(v);
            if psi != 0.0 {
                if dphi != 0.0 {
                    i1 += dphi * psi * self.pairing.apply(&self.noise, i);
                    i2 += dphi * psi * self.half_laplacian.apply(&self.u, i);
                    if drift {
                        i5 += dphi * psi * self.pairing.apply(&self.b, i);
                    }
                }
                let ddphi = self.fam.phi_second(v);
                if ddphi != 0.0 {
                    i3 += 0.5 * ddphi * psi * self.pairing.apply_squared(&self.d2, i);
                }
            }
            let psi_dot = self.test.psi_dot(t, x);
            if psi_dot != 0.0 {
                i4 += self.fam.phi(v) * psi_dot;
            }
        }
        self.terms.i1 += i1 * dx;
        self.terms.i2 += i2 * dt * dx;
        // Var of the paired noise is Σ_j w_j² D_j² dt/dx; the x-sum brings dx
        self.terms.i3 += i3 * dt;
        self.terms.i4 += i4 * dt * dx;
        self.terms.i5 += i5 * dt * dx;
    }

    /// Evaluates `Z_n` at step `k_end` and returns all terms.
    pub fn finish(mut self, k_end: usize, x1: &[f64], x2: &[f64]) -> ItoTerms {
        self.load(k_end, x1, x2, None);
        let t = self.grid.t(k_end);
        self.terms.zn = self.z(t);
        if !self.started {
            self.terms.zn0 = self.terms.zn;
        }
        self.terms
    }
}

/// Itô terms of a stored run (every step stored) up to step `k_end`, regenerating
/// the noise rows from `noise`.
pub fn ito_terms<N: NoiseSource + ?Sized>(
    run: &CoupledRun,
    coeff: &Coefficient,
    noise: &N,
    n: u32,
    test: TestFunctions,
    k_end: usize,
) -> Result<ItoTerms> {
    let grid = run.grid();
    if k_end > grid.steps() || grid.t(k_end) > test.t0 + 1e-12 {
        return Err(Error::domain(format!("end step {k_end} beyond the run or the test-function horizon")));
    }
    if (0..=k_end).any(|k| run.u.at_step(k).is_none()) {
        return Err(Error::domain("Itô terms need every step stored (frame stride 1)"));
    }
    let mut acc = ItoAccumulator::new(grid, coeff, n, test)?;
    let mut dw = vec![0.0; grid.cells()];
    for k in 0..k_end {
        noise.fill_row(k, &mut dw);
        acc.step(k, run.x1.at_step(k).unwrap(), run.x2.at_step(k).unwrap(), &dw);
    }
    Ok(acc.finish(k_end, run.x1.at_step(k_end).unwrap(), run.x2.at_step(k_end).unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_values() {
        assert_eq!(a_seq(0), 1.0);
        assert!((a_seq(1) - 0.367_879_4).abs() < 1e-7);
        assert!((a_seq(2) - 0.049_787_1).abs() < 1e-7);
        for n in 0..12 {
            let lhs = a_seq(n + 1);
            let rhs = a_seq(n) * (-(n as f64) - 1.0).exp();
            assert!((lhs / rhs - 1.0).abs() < 1e-15);
            assert!((a_seq(n + 1) / (a_seq(n) * a_seq(n).powf(2.0 / n.max(1) as f64)) - 1.0).abs() < 1e-12 || n == 0);
        }
        assert!((m_seq(3) - a_seq(2).powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn family_basics() {
        let f = YWFamily::new(3).unwrap();
        assert_eq!(f.phi(f.a_n / 2.0), 0.0);
        assert_eq!(f.phi_prime(2.0 * f.a_prev), 1.0);
        assert_eq!(f.phi_prime(-2.0 * f.a_prev), -1.0);
        let g = f.gap();
        assert!(g > 0.0 && g <= f.a_prev);
        assert!(((3.0 * f.a_prev - f.phi(3.0 * f.a_prev)) - g).abs() < 1e-15);
        // continuity at both ends of the support
        let eps = 1e-12;
        assert!((f.phi(f.a_prev * (1.0 - eps)) - f.phi(f.a_prev * (1.0 + eps))).abs() < 1e-12);
        assert!(f.phi(f.a_n * (1.0 + 1e-9)) < 1e-20);
        assert!(YWFamily::new(0).is_err());
    }

    #[test]
    fn phi_matches_quadrature_of_phi_prime() {
        for n in 1..=5 {
            let f = YWFamily::new(n).unwrap();
            for &frac in &[0.1, 0.5, 0.9, 1.5] {
                let x = f.a_n * (frac * n as f64).exp();
                let opts = QuadOptions { abs_tol: 1e-16, rel_tol: 1e-12, max_intervals: 2000 };
                let q = quad::integrate(|y| f.phi_prime(y), f.a_n, x, opts).unwrap().value;
                assert!((q - f.phi(x)).abs() < 1e-12 * x.max(1e-3), "n={n} {q} {}", f.phi(x));
            }
        }
    }

    #[test]
    fn all_invariants_small_levels() {
        for n in 1..=6 {
            let f = YWFamily::new(n).unwrap();
            let c = check_family(&f, 2000).unwrap();
            assert!(c.all_ok(), "{c:?}");
        }
    }

    #[test]
    fn stencil_moments() {
        let dx = 0.01;
        let m = 7.0;
        let st = Stencil::mollifier(m, dx).unwrap();
        assert!((st.sum() - 1.0).abs() < 1e-13);
        let xs: Vec<f64> = (0..1000).map(|i| -5.0 + (i as f64 + 0.5) * dx).collect();
        let lin: Vec<f64> = xs.clone();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        for &i in &[300usize, 512, 700] {
            assert!((st.apply(&lin, i) - xs[i]).abs() < 1e-12);
            let expected = xs[i] * xs[i] + MOLLIFIER_SECOND_MOMENT / (m * m);
            assert!((st.apply(&sq, i) - expected).abs() < 1e-12);
        }
        let lap = Stencil::mollifier_half_laplacian(m, dx).unwrap();
        // ½ ∂²_x ⟨y², Φ^m_x⟩ = 1
        assert!((lap.apply(&sq, 500) - 1.0).abs() < 1e-9);
        let lin_st = Stencil::mollifier_linear(m, dx).unwrap();
        assert!(lin_st.weights.iter().all(|&w| w >= 0.0));
        assert!((lin_st.sum() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn resolution_guard() {
        match Stencil::mollifier(100.0, 0.01) {
            Err(Error::GridTooCoarse { max_level, .. }) => assert_eq!(max_level, max_level_for(0.01)),
            other => panic!("{other:?}"),
        }
        assert_eq!(max_level(0.01), Some(3));
        assert!(smoothed_frame(&[0.0; 20], 5, 0.01).is_err());
    }

    fn max_level_for(dx: f64) -> Option<u32> {
        (1..20).filter(|&n| m_seq(n + 1) * dx <= 0.5).max()
    }

    #[test]
    fn test_function_mass() {
        let psi = TestFunctions::new(1.5, 0.8, Temporal::Decreasing).unwrap();
        let opts = QuadOptions::default();
        let space = quad::integrate(|x| psi.psi(0.0, x), -1.5, 1.5, opts).unwrap().value;
        assert!((space - 1.5 * 32.0 / 35.0).abs() < 1e-12);
        let st = quad::integrate(|s| quad::integrate(|x| psi.psi(s, x), -1.5, 1.5, opts).unwrap().value, 0.0, 0.8, opts)
            .unwrap()
            .value;
        assert!((st - psi.space_time_mass(0.8)).abs() < 1e-11);
        assert!(TestFunctions::new(0.0, 1.0, Temporal::Constant).is_err());
    }

    fn constant_run(g: &GridSpec, c1: f64, c2: f64) -> CoupledRun {
        use crate::solver::SolutionField;
        let steps: Vec<usize> = (0..=g.steps()).collect();
        let field = |c: f64| SolutionField::from_frames(*g, steps.clone(), vec![c; steps.len() * g.cells()]).unwrap();
        CoupledRun { x1: field(c1), x2: field(c2), u: field(c1 - c2), weighted_sup: vec![0.0; steps.len()], seed: 0, path_index: 0 }
    }

    #[test]
    fn local_time_constant_fields() {
        let g = GridSpec::new(0.02, 2e-4, 3.0, 0.1, crate::grid::Boundary::Neumann).unwrap();
        let test = TestFunctions::new(1.0, 0.1, Temporal::Constant).unwrap();
        let lt = LocalTime::new(&g, 2, 0.9, test).unwrap();
        assert_eq!(lt.integrate(&constant_run(&g, 0.5, 0.5), 0.1).unwrap(), 0.0);
        assert_eq!(lt.integrate(&constant_run(&g, 0.5, 0.4), 0.1).unwrap(), 0.0);
        let c = 0.03;
        let got = lt.integrate(&constant_run(&g, 0.5 + c, 0.5), 0.1).unwrap();
        let a = a_seq(2);
        let expected = a.powf(-1.5 - 1.0) * c.powf(1.8) * test.space_time_mass(0.1);
        assert!((got / expected - 1.0).abs() < 1e-4, "{got} {expected}");
        let half = lt.integrate(&constant_run(&g, 0.5 + c, 0.5), 0.05).unwrap();
        assert!(half > 0.0 && half < got);
        assert!(lt.integrate(&constant_run(&g, 0.5, 0.5), 0.2).is_err());
    }

    #[test]
    fn ito_terms_vanish_on_equal_and_deterministic_runs() {
        use crate::coeff::{make_lipschitz, Coefficient};
        use crate::noise::NoiseStream;
        use crate::solver::{sample_profile, solve_coupled, FramePolicy};
        let g = GridSpec::new(0.1, 0.0025, 3.0, 0.1, crate::grid::Boundary::Neumann).unwrap();
        let test = TestFunctions::new(1.0, 0.1, Temporal::Decreasing).unwrap();
        let noise = NoiseStream::new(&g, 3, 0);
        let x0 = sample_profile(&g, |x| (-x * x).exp());
        let lip = make_lipschitz(1.0, 0.5);
        let run = solve_coupled(&g, &lip, &x0, &x0, &noise, FramePolicy { stride: 1 }, 3, 0).unwrap();
        let t = ito_terms(&run, &lip, &noise, 2, test, g.steps()).unwrap();
        assert_eq!(t, ItoTerms::default());

        let zero = Coefficient::zero();
        let x1 = sample_profile(&g, |x| 0.2 * (2.0 * x).sin());
        let run = solve_coupled(&g, &zero, &x1, &vec![0.0; g.cells()], &noise, FramePolicy { stride: 1 }, 3, 0).unwrap();
        let t = ito_terms(&run, &zero, &noise, 2, test, g.steps()).unwrap();
        assert_eq!((t.i1, t.i3), (0.0, 0.0));
        assert!(t.zn0 > 0.0 && t.residual().abs() < 3e-2 * t.zn0, "{t:?}");

        let sparse = solve_coupled(&g, &zero, &x1, &x1, &noise, FramePolicy { stride: 2 }, 3, 0).unwrap();
        assert!(ito_terms(&sparse, &zero, &noise, 2, test, g.steps()).is_err());
    }
}
