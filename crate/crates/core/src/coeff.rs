//! Coefficient pairs `(σ, b)` of the equation, evaluated as `f(t, x, X)`.
//!
//! Each [`Coefficient`] carries the constants it claims to satisfy:
//! linear growth `|σ| + |b| <= c(1 + |X|)`, the Hölder envelope
//! `|σ(X) - σ(X')| <= R0 e^{R1|x|} (1 + |X| + |X'|)^{R2} |X - X'|^γ` and the
//! drift Lipschitz bound `|b(X) - b(X')| <= B |X - X'|`. [`verify_conditions`]
//! checks those claims on random samples.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::kernel::density;
use crate::quad::{self, QuadOptions};
use crate::{Error, Result};

pub type CoeffFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Power,
    Lipschitz,
    Weierstrass,
    Custom,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Power => "power",
            Family::Lipschitz => "lipschitz",
            Family::Weierstrass => "weierstrass",
            Family::Custom => "custom",
        }
    }
}

/// Declared regularity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub gamma: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    /// Drift Lipschitz constant `B`.
    pub drift_lipschitz: f64,
    pub growth: f64,
}

#[derive(Clone)]
pub struct Coefficient {
    sigma: CoeffFn,
    drift: CoeffFn,
    pub constants: Constants,
    pub family: Family,
    pub label: String,
    drift_active: bool,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("label", &self.label)
            .field("family", &self.family)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

fn zero_fn() -> CoeffFn {
    Arc::new(|_, _, _| 0.0)
}

impl Coefficient {
    pub fn custom(
        label: impl Into<String>,
        sigma: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        drift: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        constants: Constants,
    ) -> Self {
        Coefficient { sigma: Arc::new(sigma), drift: Arc::new(drift), constants, family: Family::Custom, label: label.into(), drift_active: true }
    }

    /// `σ = b = 0`.
    pub fn zero() -> Self {
        let constants = Constants { gamma: 1.0, r0: 0.0, r1: 0.0, r2: 0.0, drift_lipschitz: 0.0, growth: 0.0 };
        Coefficient {
            sigma: zero_fn(),
            drift: zero_fn(),
            constants,
            family: Family::Custom,
            label: "zero".into(),
            drift_active: false,
        }
    }

    /// `σ ≡ c`, `b = 0` (additive noise).
    pub fn constant(c: f64) -> Self {
        let constants = Constants { gamma: 1.0, r0: 0.0, r1: 0.0, r2: 0.0, drift_lipschitz: 0.0, growth: c.abs() };
        Coefficient {
            sigma: Arc::new(move |_, _, _| c),
            drift: zero_fn(),
            constants,
            family: Family::Custom,
            label: format!("constant({c})"),
            drift_active: false,
        }
    }

    #[inline]
    pub fn sigma(&self, t: f64, x: f64, v: f64) -> f64 {
        (self.sigma)(t, x, v)
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64, v: f64) -> f64 {
        (self.drift)(t, x, v)
    }

    pub fn gamma(&self) -> f64 {
        self.constants.gamma
    }

    /// `false` when `b` is known to vanish identically (saves a call per cell in the solver).
    pub fn has_drift(&self) -> bool {
        self.drift_active
    }

    /// Replaces the drift, adding `lipschitz` to `B` and to the growth constant.
    pub fn with_drift(
        mut self,
        drift: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        growth: f64,
    ) -> Self {
        self.drift = Arc::new(drift);
        self.drift_active = true;
        self.constants.drift_lipschitz = lipschitz;
        self.constants.growth += growth;
        self.label = format!("{}+drift", self.label);
        self
    }

    /// `b(X) = slope·X`.
    pub fn with_linear_drift(self, slope: f64) -> Self {
        let label = format!("{}+drift({slope})", self.label);
        let mut c = self.with_drift(move |_, _, v| slope * v, slope.abs(), slope.abs());
        c.label = label;
        c
    }

    /// `σ_K(t,x,X) = σ(t, x, clamp(X, ±K e^{|x|})) 1(t <= K)`, and likewise for `b`.
    pub fn truncate(&self, k: f64) -> Result<Coefficient> {
        if !(k >= 1.0) {
            return Err(Error::domain(format!("truncation level must be >= 1, got {k}")));
        }
        let clamp = move |t: f64, x: f64, v: f64| -> Option<f64> {
            if t > k {
                return None;
            }
            let m = k * x.abs().exp();
            Some(v.max(-m).min(m))
        };
        let s = self.sigma.clone();
        let d = self.drift.clone();
        Ok(Coefficient {
            sigma: Arc::new(move |t, x, v| clamp(t, x, v).map_or(0.0, |w| s(t, x, w))),
            drift: Arc::new(move |t, x, v| clamp(t, x, v).map_or(0.0, |w| d(t, x, w))),
            constants: self.constants,
            family: self.family,
            label: format!("{}|K={k}", self.label),
            drift_active: self.drift_active,
        })
    }
}

/// `σ(X) = scale·|X|^γ`, `b = 0`.
pub fn make_power(gamma: f64, scale: f64) -> Result<Coefficient> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("power exponent must lie in (0, 1], got {gamma}")));
    }
    // ||X|^γ - |X'|^γ| <= ||X| - |X'||^γ <= |X - X'|^γ
    let constants =
        Constants { gamma, r0: scale.abs(), r1: 0.0, r2: 0.0, drift_lipschitz: 0.0, growth: scale.abs() };
    Ok(Coefficient {
        sigma: Arc::new(move |_, _, v: f64| scale * v.abs().powf(gamma)),
        drift: zero_fn(),
        constants,
        family: Family::Power,
        label: format!("power(gamma={gamma},scale={scale})"),
        drift_active: false,
    })
}

/// `σ(X) = slope·X`, `b(X) = drift_slope·X`.
pub fn make_lipschitz(slope: f64, drift_slope: f64) -> Coefficient {
    let constants = Constants {
        gamma: 1.0,
        r0: slope.abs(),
        r1: 0.0,
        r2: 0.0,
        drift_lipschitz: drift_slope.abs(),
        growth: slope.abs() + drift_slope.abs(),
    };
    Coefficient {
        sigma: Arc::new(move |_, _, v| slope * v),
        drift: Arc::new(move |_, _, v| drift_slope * v),
        constants,
        family: Family::Lipschitz,
        label: format!("lipschitz(slope={slope},drift={drift_slope})"),
        drift_active: drift_slope != 0.0,
    }
}

/// `σ(X) = Σ_{j=1}^{depth} 2^{-jγ} cos(2^j X)`, `b = 0`.
pub fn make_weierstrass(gamma: f64, depth: u32) -> Result<Coefficient> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("weierstrass exponent must lie in (0, 1), got {gamma}")));
    }
    if depth == 0 || depth > 60 {
        return Err(Error::domain(format!("weierstrass depth must be in 1..=60, got {depth}")));
    }
    let terms: Vec<(f64, f64)> = (1..=depth as i32).map(|j| (2f64.powi(j), 2f64.powf(-(j as f64) * gamma))).collect();
    let growth: f64 = terms.iter().map(|t| t.1).sum();
    // Split the sum at 2^j |X - X'| = 1: small j use the Lipschitz bound,
    // large j the bound |cos a - cos b| <= 2.
    let r0 = 1.0 / (1.0 - 2f64.powf(gamma - 1.0)) + 2.0 / (1.0 - 2f64.powf(-gamma));
    let constants = Constants { gamma, r0, r1: 0.0, r2: 0.0, drift_lipschitz: 0.0, growth };
    Ok(Coefficient {
        sigma: Arc::new(move |_, _, v: f64| terms.iter().map(|&(l, w)| w * (l * v).cos()).sum()),
        drift: zero_fn(),
        constants,
        family: Family::Weierstrass,
        label: format!("weierstrass(gamma={gamma},depth={depth})"),
        drift_active: false,
    })
}

/// Smooth cutoff: 1 on `[-n, n]`, 0 off `[-(n+2), n+2]`, cubic smoothstep in between
/// (`|ψ̃'| <= 3/4`).
pub fn cutoff(n: f64, v: f64) -> f64 {
    let r = ((v.abs() - n) / 2.0).clamp(0.0, 1.0);
    1.0 - r * r * (3.0 - 2.0 * r)
}

/// Gaussian-smoothed and cut-off diffusion coefficient at level `n`.
#[derive(Debug, Clone)]
pub struct MollifiedCoefficient {
    pub base: Coefficient,
    pub n: u32,
    /// Largest sampled difference quotient of `σ_n` over `|X| <= n + 2`.
    pub lipschitz_estimate: f64,
}

/// Points `(t, x)` at which Lipschitz estimates are sampled.
const PROBE_TX: [(f64, f64); 3] = [(0.0, 0.0), (0.5, 1.0), (1.0, -2.0)];

impl MollifiedCoefficient {
    /// `σ_n(t,x,X) = ψ̃_n(X) ∫ σ(t,x,X') p_{2^{-n}}(X' - X) dX'`.
    pub fn sigma(&self, t: f64, x: f64, v: f64) -> Result<f64> {
        mollified_sigma(&self.base, self.n, t, x, v)
    }

    /// The smoothed pair as a plain [`Coefficient`] (quadrature failures evaluate to NaN).
    pub fn to_coefficient(&self) -> Coefficient {
        let base = self.base.clone();
        let n = self.n;
        let mut constants = self.base.constants;
        constants.growth *= 2.0;
        Coefficient {
            sigma: Arc::new(move |t, x, v| mollified_sigma(&base, n, t, x, v).unwrap_or(f64::NAN)),
            drift: self.base.drift.clone(),
            constants,
            family: self.base.family,
            label: format!("{}|mollified(n={n})", self.base.label),
            drift_active: self.base.drift_active,
        }
    }
}

fn mollified_sigma(base: &Coefficient, n: u32, t: f64, x: f64, v: f64) -> Result<f64> {
    let w = cutoff(n as f64, v);
    if w == 0.0 {
        return Ok(0.0);
    }
    let var = 2f64.powi(-(n as i32));
    let half = 10.0 * var.sqrt();
    let (lo, hi) = (v - half, v + half);
    let mut pts = Vec::with_capacity(4);
    pts.push(lo);
    pts.push(v);
    if lo < 0.0 && hi > 0.0 && v != 0.0 {
        pts.push(0.0);
    }
    pts.push(hi);
    pts.sort_unstable_by(f64::total_cmp);
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 4000 };
    let q = quad::integrate_with_breaks(|y| base.sigma(t, x, y) * density(var, y - v), &pts, opts)?;
    Ok(q.value * w)
}

pub fn mollify(base: &Coefficient, n: u32) -> Result<MollifiedCoefficient> {
    if n == 0 {
        return Err(Error::domain("mollification level must be >= 1"));
    }
    let h = 2f64.powf(-(n as f64) / 2.0) / 8.0;
    let reach = n as f64 + 2.0;
    let count = (2.0 * reach / h).ceil() as usize;
    let mut c: f64 = 0.0;
    for &(t, x) in &PROBE_TX {
        let mut prev = mollified_sigma(base, n, t, x, -reach)?;
        for j in 1..=count {
            let v = -reach + j as f64 * h;
            let cur = mollified_sigma(base, n, t, x, v)?;
            c = c.max((cur - prev).abs() / h);
            prev = cur;
        }
    }
    Ok(MollifiedCoefficient { base: base.clone(), n, lipschitz_estimate: c })
}

/// Worst sampled ratios against the declared constants. A ratio above
/// `1 + 1e-9` is a violation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub samples: usize,
    pub growth_ratio: f64,
    pub holder_ratio: f64,
    pub drift_ratio: f64,
}

pub const CONDITION_SLACK: f64 = 1e-9;

impl ConditionReport {
    pub fn growth_ok(&self) -> bool {
        self.growth_ratio <= 1.0 + CONDITION_SLACK
    }
    pub fn holder_ok(&self) -> bool {
        self.holder_ratio <= 1.0 + CONDITION_SLACK
    }
    pub fn drift_ok(&self) -> bool {
        self.drift_ratio <= 1.0 + CONDITION_SLACK
    }
    pub fn pass(&self) -> bool {
        self.growth_ok() && self.holder_ok() && self.drift_ok()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Samples `t ∈ [0,2]`, `x ∈ [-3,3]`, `X = ±10^{U(-12,1)}` and `X' = X ± h` with
/// `h = 10^{U(-12,0)}` (Hölder pairs only need `|X - X'| <= 1`).
pub fn verify_conditions(c: &Coefficient, budget: usize, seed: u64) -> Result<ConditionReport> {
    if budget == 0 {
        return Err(Error::domain("sample budget must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let k = c.constants;
    let mut report = ConditionReport { samples: budget, growth_ratio: 0.0, holder_ratio: 0.0, drift_ratio: 0.0 };
    for _ in 0..budget {
        let t = 2.0 * unit();
        let x = 6.0 * unit() - 3.0;
        let sign = if unit() < 0.5 { -1.0 } else { 1.0 };
        let v = sign * 10f64.powf(-12.0 + 13.0 * unit());
        let h = 10f64.powf(-12.0 * unit());
        let v2 = if unit() < 0.5 { v - h } else { v + h };
        let dv = (v2 - v).abs();

        let s1 = c.sigma(t, x, v);
        let s2 = c.sigma(t, x, v2);
        let b1 = c.drift(t, x, v);
        let b2 = c.drift(t, x, v2);
        for (s, b, w) in [(s1, b1, v), (s2, b2, v2)] {
            report.growth_ratio = report.growth_ratio.max(ratio(s.abs() + b.abs(), k.growth * (1.0 + w.abs())));
        }
        // allow for rounding in the evaluations themselves
        let slack = |a: f64, b: f64| 4.0 * f64::EPSILON * (a.abs() + b.abs());
        let ds = ((s1 - s2).abs() - slack(s1, s2)).max(0.0);
        let db = ((b1 - b2).abs() - slack(b1, b2)).max(0.0);
        let env = k.r0 * (k.r1 * x.abs()).exp() * (1.0 + v.abs() + v2.abs()).powf(k.r2) * dv.powf(k.gamma);
        report.holder_ratio = report.holder_ratio.max(ratio(ds, env));
        report.drift_ratio = report.drift_ratio.max(ratio(db, k.drift_lipschitz * dv));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_values() {
        let c = make_power(1.0, 1.0).unwrap();
        assert_eq!(c.sigma(0.0, 0.0, 4.0), 4.0);
        let c = make_power(0.5, 1.0).unwrap();
        assert_eq!(c.sigma(0.0, 0.0, 4.0), 2.0);
        assert!(make_power(0.0, 1.0).is_err());
        assert!(make_power(1.2, 1.0).is_err());
    }

    #[test]
    fn weierstrass_at_zero_is_partial_sum() {
        let c = make_weierstrass(0.8, 12).unwrap();
        let expected: f64 = (1..=12).map(|j| 2f64.powf(-0.8 * j as f64)).sum();
        assert!((c.sigma(0.0, 0.0, 0.0) - expected).abs() < 1e-15);
        assert!(expected < 2.31);
        assert!(make_weierstrass(1.0, 3).is_err());
        assert!(make_weierstrass(0.5, 0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let base = make_lipschitz(1.0, 0.0);
        let tr = base.truncate(1.0).unwrap();
        assert_eq!(tr.sigma(0.5, 0.0, 0.5), 0.5);
        assert_eq!(tr.sigma(0.5, 0.0, 5.0), 1.0);
        assert_eq!(tr.sigma(2.0, 0.0, 0.3), 0.0);
        let tt = tr.truncate(1.0).unwrap();
        for &(t, x, v) in &[(0.2, 0.5, 7.0), (0.9, -1.0, -9.0), (0.1, 0.0, 0.2)] {
            assert_eq!(tt.sigma(t, x, v), tr.sigma(t, x, v));
        }
        assert!(base.truncate(0.5).is_err());
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(3.0, 2.9), 1.0);
        assert_eq!(cutoff(3.0, -5.0), 0.0);
        assert_eq!(cutoff(3.0, 4.0), 0.5);
        let slope = (0..2000)
            .map(|j| {
                let v = 3.0 + j as f64 * 1e-3;
                (cutoff(3.0, v + 1e-3) - cutoff(3.0, v)).abs() / 1e-3
            })
            .fold(0.0, f64::max);
        assert!(slope <= 0.75 + 1e-6);
    }

    #[test]
    fn mollified_identity_is_exact_inside_cutoff() {
        let m = mollify(&make_lipschitz(1.0, 0.0), 3).unwrap();
        for &v in &[-2.5, 0.0, 1.7, 3.0] {
            assert!((m.sigma(0.0, 0.0, v).unwrap() - v).abs() < 1e-10);
        }
        assert_eq!(m.sigma(0.0, 0.0, 5.0).unwrap(), 0.0);
        assert_eq!(m.sigma(0.0, 0.0, -5.5).unwrap(), 0.0);
    }

    #[test]
    fn declared_constants_hold() {
        for c in [make_lipschitz(1.5, 0.7), make_power(0.8, 1.0).unwrap(), make_weierstrass(0.8, 12).unwrap()] {
            let r = verify_conditions(&c, 20_000, 3).unwrap();
            assert!(r.pass(), "{} {r:?}", c.label);
        }
        let r = verify_conditions(&Coefficient::zero(), 100, 3).unwrap();
        assert_eq!((r.growth_ratio, r.holder_ratio, r.drift_ratio), (0.0, 0.0, 0.0));
    }

    #[test]
    fn understated_exponent_is_flagged() {
        let mut c = make_power(0.8, 1.0).unwrap();
        c.constants.gamma = 0.9;
        let r = verify_conditions(&c, 5_000, 1).unwrap();
        assert!(!r.holder_ok(), "{r:?}");
        assert!(r.growth_ok());
    }
}
