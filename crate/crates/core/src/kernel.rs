//! Gaussian heat kernel `p_t(x) = (2πt)^{-1/2} exp(-x²/2t)` and the integral
//! identities built from it.
//!
//! Every closed form here has a quadrature twin selected by [`Method`], so the
//! two routes can be compared point by point (see [`verify`]).

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

use crate::quad::{self, QuadOptions};
use crate::stats::{normal_pdf, normal_cdf};
use crate::{Error, Result};

pub mod verify;

/// Number of standard deviations after which a Gaussian is treated as zero.
pub const TAIL_SIGMAS: f64 = 13.0;

/// Which route evaluates an identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
}

/// A `(t, x)` pair for density evaluations; `t` must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuery {
    pub t: f64,
    pub x: f64,
}

impl KernelQuery {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        check_time(t)?;
        Ok(KernelQuery { t, x })
    }

    pub fn density(&self) -> f64 {
        density(self.t, self.x)
    }

    pub fn derivative(&self) -> f64 {
        density_deriv(self.t, self.x)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(alloc::format!("heat kernel needs t > 0, got {t}")))
    }
}

#[inline]
pub(crate) fn density(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

#[inline]
pub(crate) fn density_deriv(t: f64, x: f64) -> f64 {
    -(x / t) * density(t, x)
}

#[inline]
pub(crate) fn density_second_deriv(t: f64, x: f64) -> f64 {
    (x * x / (t * t) - 1.0 / t) * density(t, x)
}

/// `p_t(x)`.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    Ok(density(t, x))
}

/// `p'_t(x) = -(x/t) p_t(x)`.
pub fn heat_kernel_deriv(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    Ok(density_deriv(t, x))
}

/// `|p'_t(z)| / (t^{-1/2} p_{2t}(z))`, which equals `√2 u e^{-u²/4}` with `u = |z|/√t`.
pub fn derivative_ratio(t: f64, z: f64) -> Result<f64> {
    check_time(t)?;
    // Evaluated from the two densities rather than the reduced form so that the
    // sweep exercises the same code as `heat_kernel_deriv`.
    let num = density_deriv(t, z).abs();
    let den = density(2.0 * t, z) / t.sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Supremum over `z` of [`derivative_ratio`] at fixed `t`, by golden-section
/// search on `z ∈ [0, 6√t]`. Returns `(sup, argmax)`.
pub fn sup_derivative_ratio(t: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    let f = |z: f64| derivative_ratio(t, z).unwrap_or(0.0);
    let golden = 0.5 * (5.0.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 6.0 * t.sqrt());
    let mut c = b - golden * (b - a);
    let mut d = a + golden * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) <= 1e-14 * t.sqrt() {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - golden * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + golden * (b - a);
            fd = f(d);
        }
    }
    let z = 0.5 * (a + b);
    Ok((f(z), z))
}

/// `∫ p'_a(w) p'_b(w - z) dw = (1/T - z²/T²) p_T(z)` with `T = a + b`.
pub fn derivative_overlap(a: f64, b: f64, z: f64) -> Result<f64> {
    check_time(a)?;
    check_time(b)?;
    Ok(-density_second_deriv(a + b, z))
}

fn overlap_quadrature(a: f64, b: f64, z: f64) -> Result<f64> {
    let width = z.abs() + 12.0 * a.max(b).sqrt();
    let big_t = a + b;
    // size of ∫|p'_a(w) p'_b(w-z)| dw, used only to set the absolute tolerance
    let scale = density(big_t, z) * (1.0 / (a * b).sqrt() + z * z / (big_t * big_t));
    let opts = QuadOptions { abs_tol: (1e-15 * scale).max(1e-300), rel_tol: 1e-13, max_intervals: 20_000 };
    let mut pts = [-width, 0.0_f64.min(z), 0.0_f64.max(z), width];
    pts.sort_unstable_by(f64::total_cmp);
    let norm = 1.0 / (2.0 * PI * (a * b).sqrt());
    // one exponential for the product so that neither factor underflows on its own
    let f = |w: f64| {
        let v = w - z;
        (w / a) * (v / b) * norm * (-(w * w) / (2.0 * a) - v * v / (2.0 * b)).exp()
    };
    Ok(quad::integrate_with_breaks(f, &pts, opts)?.value)
}

/// `∫ p'_t(w) p'_t(w - x) dw`; closed form `(t/2 - x²/4) p_{2t}(x) / t²`.
pub fn kernel_product_integral(t: f64, x: f64, method: Method) -> Result<f64> {
    check_time(t)?;
    match method {
        Method::ClosedForm => Ok((t / 2.0 - x * x / 4.0) * density(2.0 * t, x) / (t * t)),
        Method::Quadrature => overlap_quadrature(t, t, x),
    }
}

/// `∫ p'_{t'}(w) p'_t(w) dw`; closed form `(t + t')^{-1} p_{t+t'}(0)`.
pub fn kernel_cross_time(t: f64, t_prime: f64, method: Method) -> Result<f64> {
    check_time(t)?;
    check_time(t_prime)?;
    match method {
        Method::ClosedForm => Ok(density(t + t_prime, 0.0) / (t + t_prime)),
        Method::Quadrature => overlap_quadrature(t_prime, t, 0.0),
    }
}

/// Left- and right-hand sides of a squared-increment bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Increment {
    pub lhs: f64,
    /// `(t-s)^{-k} [1 ∧ d²/(t-s)]` with `k = 1/2` (density) or `3/2` (derivative).
    pub envelope: f64,
}

impl L2Increment {
    pub fn ratio(&self) -> f64 {
        if self.envelope == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.envelope
        }
    }
}

/// Parabolic distance `d((t,x),(t',x')) = √|t'-t| + |x'-x|`.
pub fn parabolic_distance(t: f64, x: f64, t2: f64, x2: f64) -> f64 {
    (t2 - t).abs().sqrt() + (x2 - x).abs()
}

fn check_order(s: f64, t: f64, t2: f64) -> Result<()> {
    if s < t && t <= t2 && s.is_finite() && t2.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(alloc::format!("need s < t <= t', got s={s}, t={t}, t'={t2}")))
    }
}

/// `∫ (p_{t'-s}(y-x') - p_{t-s}(y-x))² dy` with its envelope `(t-s)^{-1/2}[1 ∧ d²/(t-s)]`.
pub fn kernel_l2_increment(s: f64, t: f64, t2: f64, x: f64, x2: f64, method: Method) -> Result<L2Increment> {
    check_order(s, t, t2)?;
    let a = t2 - s;
    let b = t - s;
    let lhs = match method {
        Method::ClosedForm => {
            (density(2.0 * a, 0.0) + density(2.0 * b, 0.0) - 2.0 * density(a + b, x - x2)).max(0.0)
        }
        Method::Quadrature => {
            let w = 12.0 * a.sqrt();
            let (lo, hi) = (x.min(x2) - w, x.max(x2) + w);
            let opts = QuadOptions { abs_tol: 1e-16 / b.sqrt(), rel_tol: 1e-12, max_intervals: 20_000 };
            let f = |y: f64| {
                let d = density(a, y - x2) - density(b, y - x);
                d * d
            };
            let mut pts = [lo, x.min(x2), x.max(x2), hi];
            pts.sort_unstable_by(f64::total_cmp);
            quad::integrate_with_breaks(f, &pts, opts)?.value
        }
    };
    let d = parabolic_distance(t, x, t2, x2);
    let envelope = b.powf(-0.5) * (1.0_f64).min(d * d / b);
    Ok(L2Increment { lhs, envelope })
}

/// Derivative analogue: `∫ (p'_{t'-s}(y-x') - p'_{t-s}(y-x))² dy` with envelope
/// `(t-s)^{-3/2}[1 ∧ d²/(t-s)]`.
pub fn kernel_deriv_l2_increment(
    s: f64,
    t: f64,
    t2: f64,
    x: f64,
    x2: f64,
    method: Method,
) -> Result<L2Increment> {
    check_order(s, t, t2)?;
    let a = t2 - s;
    let b = t - s;
    let lhs = match method {
        Method::ClosedForm => {
            let self_a = density(2.0 * a, 0.0) / (2.0 * a);
            let self_b = density(2.0 * b, 0.0) / (2.0 * b);
            let cross = -density_second_deriv(a + b, x - x2);
            (self_a + self_b - 2.0 * cross).max(0.0)
        }
        Method::Quadrature => {
            let w = 12.0 * a.sqrt();
            let (lo, hi) = (x.min(x2) - w, x.max(x2) + w);
            let opts = QuadOptions { abs_tol: 1e-16 / (b * b.sqrt()), rel_tol: 1e-12, max_intervals: 20_000 };
            let f = |y: f64| {
                let d = density_deriv(a, y - x2) - density_deriv(b, y - x);
                d * d
            };
            let mut pts = [lo, x.min(x2), x.max(x2), hi];
            pts.sort_unstable_by(f64::total_cmp);
            quad::integrate_with_breaks(f, &pts, opts)?.value
        }
    };
    let d = parabolic_distance(t, x, t2, x2);
    let envelope = b.powf(-1.5) * (1.0_f64).min(d * d / b);
    Ok(L2Increment { lhs, envelope })
}

/// Parameters of `J_{p,q}(Δ₁, Δ₂, Δ) = ∫_{t-Δ₁}^{t-Δ₂} (t-s)^q (1 ∧ Δ/(t-s))^p ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JParams {
    pub p: f64,
    pub q: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta: f64,
}

impl JParams {
    pub fn validate(&self, t: f64) -> Result<()> {
        let ok = self.p > 0.0
            && self.p <= 1.0
            && self.q.is_finite()
            && self.delta2 >= 0.0
            && self.delta2 <= self.delta1
            && self.delta1 <= t
            && self.delta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(alloc::format!("inadmissible J parameters {self:?} at t={t}")))
        }
    }
}

/// Which of the three bounds applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JCase {
    /// `q > p - 1`
    A,
    /// `-1 < q < p - 1`
    B,
    /// `q < -1`
    C,
}

/// Width of the band around `q = p-1` and `q = -1` inside which no bound is returned.
pub const J_EXCLUSION_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JOutcome {
    pub value: f64,
    /// `None` when `q` falls inside the exclusion band around a case boundary.
    pub bound: Option<(f64, JCase)>,
}

/// `∫_lo^hi u^e du` for `0 <= lo <= hi`.
fn power_integral(e: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if (e + 1.0).abs() < 1e-12 {
        if lo == 0.0 {
            return f64::INFINITY;
        }
        return (hi / lo).ln();
    }
    if lo == 0.0 && e < -1.0 {
        return f64::INFINITY;
    }
    (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0)
}

/// `J_{p,q}` via the substitution `u = t - s`, with the matching upper bound.
pub fn j_integral(params: JParams, t: f64) -> Result<JOutcome> {
    params.validate(t)?;
    let JParams { p, q, delta1: d1, delta2: d2, delta: dl } = params;
    let mut value = 0.0;
    if d2 < dl {
        value += power_integral(q, d2, dl.min(d1));
    }
    if d1 > dl && dl > 0.0 {
        value += dl.powf(p) * power_integral(q - p, d2.max(dl), d1);
    }
    if d1 == d2 {
        value = 0.0;
    }

    let near = |b: f64| (q - b).abs() < J_EXCLUSION_BAND;
    let bound = if near(p - 1.0) || near(-1.0) {
        None
    } else if q > p - 1.0 {
        Some((2.0 / (q + 1.0 - p) * dl.min(d1).powf(p) * d1.powf(q + 1.0 - p), JCase::A))
    } else if q > -1.0 {
        let c = 1.0 / (p - 1.0 - q) + 1.0 / (q + 1.0);
        let b = if d2 <= dl {
            dl.min(d1).powf(q + 1.0)
        } else {
            dl.min(d1).powf(p) * d2.powf(q - p + 1.0)
        };
        Some((c * b, JCase::B))
    } else {
        Some((2.0 / (q + 1.0).abs() * dl.min(d2).powf(p) * d2.powf(q + 1.0 - p), JCase::C))
    };
    Ok(JOutcome { value, bound })
}

/// Quadrature of the defining `s`-integral of `J_{p,q}` (independent of [`j_integral`]).
pub fn j_integral_quadrature(params: JParams, t: f64) -> Result<f64> {
    params.validate(t)?;
    let JParams { p, q, delta1: d1, delta2: d2, delta: dl } = params;
    if d1 == d2 {
        return Ok(0.0);
    }
    let f = |s: f64| {
        let u = t - s;
        u.powf(q) * (1.0_f64).min(dl / u).powf(p)
    };
    let (lo, hi) = (t - d1, t - d2);
    let mut pts = Vec::with_capacity(3);
    pts.push(lo);
    let kink = t - dl;
    if kink > lo && kink < hi {
        pts.push(kink);
    }
    pts.push(hi);
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-11, max_intervals: 20_000 };
    Ok(quad::integrate_with_breaks(f, &pts, opts)?.value)
}

/// How a sampled function is continued beyond its first and last sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    Zero,
    /// Constant continuation with the edge values.
    Constant,
}

/// Uniform samples `values[i] = f(x0 + i·dx)`, piecewise-linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub extension: Extension,
}

impl SampledFunction {
    pub fn from_fn(x0: f64, dx: f64, n: usize, extension: Extension, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|i| f(x0 + i as f64 * dx)).collect();
        SampledFunction { x0, dx, values, extension }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    /// Piecewise-linear interpolant (with the extension rule outside).
    pub fn interpolate(&self, x: f64) -> f64 {
        interpolate(&self.values, self.x0, self.dx, self.extension, x)
    }

    /// `(P_τ f)(x)`.
    pub fn smooth_at(&self, tau: f64, x: f64) -> f64 {
        convolve_at(&self.values, self.x0, self.dx, self.extension, tau, x)
    }
}

pub(crate) fn interpolate(values: &[f64], x0: f64, dx: f64, ext: Extension, x: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let r = (x - x0) / dx;
    if r < 0.0 || r > (n - 1) as f64 {
        return match ext {
            Extension::Zero => 0.0,
            Extension::Constant => {
                if r < 0.0 {
                    values[0]
                } else {
                    values[n - 1]
                }
            }
        };
    }
    let j = (r.floor() as usize).min(n.saturating_sub(2));
    if n == 1 {
        return values[0];
    }
    let w = r - j as f64;
    values[j] * (1.0 - w) + values[j + 1] * w
}

/// Upper Gaussian tail of `|z|`, i.e. `Q(|z|)`.
#[inline]
fn tail(z: f64) -> f64 {
    0.5 * libm::erfc(z.abs() * core::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
fn mass_between(za: f64, ta: f64, zb: f64, tb: f64) -> f64 {
    if za >= 0.0 {
        ta - tb
    } else if zb <= 0.0 {
        tb - ta
    } else {
        1.0 - ta - tb
    }
}

/// Exact Gaussian smoothing of the piecewise-linear interpolant:
/// `∫ f_h(y) p_τ(y - x) dy`. `τ = 0` returns the interpolant itself.
pub(crate) fn convolve_at(values: &[f64], x0: f64, dx: f64, ext: Extension, tau: f64, x: f64) -> f64 {
    convolve_impl(values, x0, dx, ext, tau, x).0
}

/// `d/dx` of [`convolve_at`], i.e. `-∫ f_h(y) p'_τ(y - x) dy`, evaluated analytically.
pub(crate) fn convolve_deriv_at(values: &[f64], x0: f64, dx: f64, ext: Extension, tau: f64, x: f64) -> f64 {
    convolve_impl(values, x0, dx, ext, tau, x).1
}

fn convolve_impl(values: &[f64], x0: f64, dx: f64, ext: Extension, tau: f64, x: f64) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    if tau <= 0.0 {
        let v = interpolate(values, x0, dx, ext, x);
        let r = (x - x0) / dx;
        let slope = if n < 2 || r < 0.0 || r > (n - 1) as f64 {
            0.0
        } else {
            let j = (r.floor() as usize).min(n - 2);
            (values[j + 1] - values[j]) / dx
        };
        return (v, slope);
    }
    let sd = tau.sqrt();
    let first = x0;
    let last = x0 + (n - 1) as f64 * dx;
    let mut value = 0.0;
    let mut deriv = 0.0;
    if n >= 2 {
        let lo_x = x - TAIL_SIGMAS * sd;
        let hi_x = x + TAIL_SIGMAS * sd;
        let j_lo = (((lo_x - x0) / dx).floor().max(0.0) as usize).min(n - 1);
        let j_hi = (((hi_x - x0) / dx).ceil().max(0.0) as usize).min(n - 1);
        if j_hi > j_lo {
            let mut za = (x0 + j_lo as f64 * dx - x) / sd;
            let mut ta = tail(za);
            let mut pa = normal_pdf(za);
            for j in j_lo..j_hi {
                let yj = x0 + j as f64 * dx;
                let zb = (yj + dx - x) / sd;
                let tb = tail(zb);
                let pb = normal_pdf(zb);
                let mass = mass_between(za, ta, zb, tb);
                let slope = (values[j + 1] - values[j]) / dx;
                // ∫ (y - y_j) p_τ(y - x) dy over the cell
                let first_moment = (x - yj) * mass + sd * (pa - pb);
                value += values[j] * mass + slope * first_moment;
                deriv += slope * mass;
                za = zb;
                ta = tb;
                pa = pb;
            }
        }
    }
    let z_first = (first - x) / sd;
    let z_last = (last - x) / sd;
    match ext {
        Extension::Constant => {
            value += values[0] * normal_cdf(z_first) + values[n - 1] * (1.0 - normal_cdf(z_last));
        }
        Extension::Zero => {
            // boundary terms of the integration by parts
            deriv += values[0] * density(tau, first - x) - values[n - 1] * density(tau, last - x);
        }
    }
    (value, deriv)
}

/// `P_t f` evaluated at the sample points of `f`.
pub fn semigroup_apply(f: &SampledFunction, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(alloc::format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.values.clone());
    }
    Ok((0..f.values.len()).map(|i| f.smooth_at(t, f.x(i))).collect())
}

/// `P_t f` at arbitrary points.
pub fn semigroup_apply_at(f: &SampledFunction, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(alloc::format!("semigroup time must be >= 0, got {t}")));
    }
    Ok(xs.iter().map(|&x| f.smooth_at(t, x)).collect())
}
