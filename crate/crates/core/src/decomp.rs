//! Smooth/rough splitting of the difference field `u = X1 - X2`:
//!
//! ```text
//! u1(t,x)   = P_δ(u((t-δ)^+, ·))(x)          u2 = u - u1
//! G(s,t,x)  = P_{(t-s)^+ + δ}(u((s-δ)^+, ·))(x)
//! F(s,t,x)  = -∂_x G(s,t,x) = ∫ p'_{(t-s)^+ + δ}(y - x) u((s-δ)^+, y) dy
//! ```
//!
//! Convolutions act on the piecewise-linear interpolant of the stored frame,
//! continued by its edge values outside the truncated domain, and are done in
//! closed form (see [`crate::kernel::SampledFunction`]). Times that fall between
//! stored frames use the nearest frame.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::coeff::Coefficient;
use crate::kernel::{self, convolve_at, convolve_deriv_at, Extension};
use crate::quad::{self, QuadOptions};
use crate::solver::{CoupledRun, SolutionField};
use crate::{Error, Result};

/// Decomposition of a stored field for a fixed window `δ ∈ (0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Decomposition<'a> {
    pub u: &'a SolutionField,
    pub delta: f64,
}

impl<'a> Decomposition<'a> {
    pub fn new(u: &'a SolutionField, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain(format!("smoothing window must lie in (0, 1], got {delta}")));
        }
        Ok(Decomposition { u, delta })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let end = self.u.frame_time(self.u.frames() - 1);
        if !(t >= 0.0 && t <= end + 1e-12) {
            return Err(Error::domain(format!("time {t} outside [0, {end}]")));
        }
        Ok(())
    }

    fn frame_at(&self, t: f64) -> &'a [f64] {
        self.u.frame(self.u.nearest_frame(t))
    }

    fn smooth(&self, frame: &[f64], tau: f64, x: f64) -> f64 {
        let g = &self.u.grid;
        convolve_at(frame, g.x(0), g.dx, Extension::Constant, tau, x)
    }

    fn smooth_deriv(&self, frame: &[f64], tau: f64, x: f64) -> f64 {
        let g = &self.u.grid;
        convolve_deriv_at(frame, g.x(0), g.dx, Extension::Constant, tau, x)
    }

    /// `u(t, x)` from the nearest frame, linearly interpolated in `x`.
    pub fn u(&self, t: f64, x: f64) -> Result<f64> {
        self.check_time(t)?;
        let g = &self.u.grid;
        Ok(kernel::interpolate(self.frame_at(t), g.x(0), g.dx, Extension::Constant, x))
    }

    pub fn u1(&self, t: f64, x: f64) -> Result<f64> {
        self.check_time(t)?;
        let lag = (t - self.delta).max(0.0);
        Ok(self.smooth(self.frame_at(lag), self.delta, x))
    }

    pub fn u2(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.u(t, x)? - self.u1(t, x)?)
    }

    /// `∂_x u1(t, x)`, analytic.
    pub fn u1_prime(&self, t: f64, x: f64) -> Result<f64> {
        self.check_time(t)?;
        let lag = (t - self.delta).max(0.0);
        Ok(self.smooth_deriv(self.frame_at(lag), self.delta, x))
    }

    /// `∂_x u1(t, x)` by adaptive quadrature of `-∫ p'_δ(y - x) u_h(y) dy`
    /// (independent of the closed-form route).
    pub fn u1_prime_quadrature(&self, t: f64, x: f64) -> Result<f64> {
        self.check_time(t)?;
        let lag = (t - self.delta).max(0.0);
        let frame = self.frame_at(lag);
        let g = &self.u.grid;
        let (x0, dx) = (g.x(0), g.dx);
        let delta = self.delta;
        let w = 12.0 * delta.sqrt();
        let mut pts = Vec::new();
        let (lo, hi) = (x - w, x + w);
        pts.push(lo);
        for i in 0..frame.len() {
            let y = x0 + i as f64 * dx;
            if y > lo && y < hi {
                pts.push(y);
            }
        }
        pts.push(hi);
        let scale = frame.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / delta.sqrt();
        let opts = QuadOptions { abs_tol: 1e-14 * scale.max(1e-300), rel_tol: 1e-12, max_intervals: 200_000 };
        let q = quad::integrate_with_breaks(
            |y| -kernel::density_deriv(delta, y - x) * kernel::interpolate(frame, x0, dx, Extension::Constant, y),
            &pts,
            opts,
        )?;
        Ok(q.value)
    }

    pub fn g(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        self.check_time(s)?;
        self.check_time(t)?;
        let lag = (s - self.delta).max(0.0);
        Ok(self.smooth(self.frame_at(lag), (t - s).max(0.0) + self.delta, x))
    }

    /// `F = -∂_x G`, via the analytic derivative of the Gaussian smoothing.
    pub fn f(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        self.check_time(s)?;
        self.check_time(t)?;
        let lag = (s - self.delta).max(0.0);
        Ok(-self.smooth_deriv(self.frame_at(lag), (t - s).max(0.0) + self.delta, x))
    }
}

/// `D = σ(X1) - σ(X2)` and `B = b(X1) - b(X2)` on the stored frames, with the
/// worst ratios against `R0 e^{R1|y|} (1+|X1|+|X2|)^{R2} |u|^γ` and `B_lip |u|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDrivers {
    pub d: Vec<f64>,
    pub b: Vec<f64>,
    pub max_sigma_ratio: f64,
    pub max_drift_ratio: f64,
    pub sigma_violations: usize,
    pub drift_violations: usize,
}

impl LocalDrivers {
    pub fn d_frame(&self, j: usize, cells: usize) -> &[f64] {
        &self.d[j * cells..(j + 1) * cells]
    }

    pub fn b_frame(&self, j: usize, cells: usize) -> &[f64] {
        &self.b[j * cells..(j + 1) * cells]
    }
}

fn envelope_ratio(num: f64, den: f64, scale: f64) -> f64 {
    // `scale` bounds the rounding in `num`
    let num = (num - 4.0 * f64::EPSILON * scale).max(0.0);
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn drivers(run: &CoupledRun, coeff: &Coefficient) -> LocalDrivers {
    let g = run.grid();
    let n = g.cells();
    let k = coeff.constants;
    let frames = run.u.frames();
    let mut d = Vec::with_capacity(frames * n);
    let mut b = Vec::with_capacity(frames * n);
    let mut out = LocalDrivers {
        d: Vec::new(),
        b: Vec::new(),
        max_sigma_ratio: 0.0,
        max_drift_ratio: 0.0,
        sigma_violations: 0,
        drift_violations: 0,
    };
    for j in 0..frames {
        let t = run.u.frame_time(j);
        let (a, c, u) = (run.x1.frame(j), run.x2.frame(j), run.u.frame(j));
        for i in 0..n {
            let y = g.x(i);
            let (s1, s2) = (coeff.sigma(t, y, a[i]), coeff.sigma(t, y, c[i]));
            let (b1, b2) = (coeff.drift(t, y, a[i]), coeff.drift(t, y, c[i]));
            let dv = s1 - s2;
            let bv = b1 - b2;
            d.push(dv);
            b.push(bv);
            let env =
                k.r0 * (k.r1 * y.abs()).exp() * (1.0 + a[i].abs() + c[i].abs()).powf(k.r2) * u[i].abs().powf(k.gamma);
            let rs = envelope_ratio(dv.abs(), env, s1.abs() + s2.abs());
            let rb = envelope_ratio(bv.abs(), k.drift_lipschitz * u[i].abs(), b1.abs() + b2.abs());
            if rs > 1.0 + 1e-9 {
                out.sigma_violations += 1;
            }
            if rb > 1.0 + 1e-9 {
                out.drift_violations += 1;
            }
            out.max_sigma_ratio = out.max_sigma_ratio.max(rs);
            out.max_drift_ratio = out.max_drift_ratio.max(rb);
        }
    }
    out.d = d;
    out.b = b;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, GridSpec};

    fn synthetic(f: impl Fn(f64, f64) -> f64) -> SolutionField {
        let g = GridSpec::new(0.01, 5e-5, 8.0, 1.0, Boundary::Neumann).unwrap();
        let steps: Vec<usize> = (0..=g.steps()).step_by(2000).collect();
        let mut values = Vec::new();
        for &k in &steps {
            values.extend(g.cell_centres().map(|x| f(g.t(k), x)));
        }
        SolutionField::from_frames(g, steps, values).unwrap()
    }

    #[test]
    fn window_is_validated() {
        let u = synthetic(|_, _| 0.0);
        assert!(Decomposition::new(&u, 0.0).is_err());
        assert!(Decomposition::new(&u, 1.5).is_err());
        assert!(Decomposition::new(&u, 1.0).is_ok());
    }

    #[test]
    fn zero_start_gives_zero_smooth_part() {
        let u = synthetic(|t, x| t * x.sin());
        let dc = Decomposition::new(&u, 0.3).unwrap();
        assert_eq!(dc.u1(0.2, 0.5).unwrap(), 0.0);
        assert_eq!(dc.u2(0.2, 0.5).unwrap(), dc.u(0.2, 0.5).unwrap());
    }

    #[test]
    fn moments() {
        let u = synthetic(|_, x| x * x);
        let dc = Decomposition::new(&u, 0.25).unwrap();
        // PL interpolation of y² adds dx²/6 to the second moment
        let v = dc.u1(0.6, 0.4).unwrap();
        assert!((v - (0.16 + 0.25)).abs() < 2e-5, "{v}");
        let c = synthetic(|_, _| -0.7);
        let dc = Decomposition::new(&c, 0.5).unwrap();
        assert!((dc.u1(0.9, 1.3).unwrap() + 0.7).abs() < 1e-14);

        let lin = synthetic(|_, x| x);
        let dc = Decomposition::new(&lin, 0.1).unwrap();
        for &(s, t) in &[(0.5, 0.5), (0.5, 0.9), (0.2, 1.0)] {
            assert!((dc.f(s, t, 0.3).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn f_is_minus_u1_prime() {
        let u = synthetic(|t, x| (1.0 + t) * (2.0 * x).sin() * (-x * x / 4.0).exp());
        let dc = Decomposition::new(&u, 0.05).unwrap();
        for &(t, x) in &[(0.5, 0.1), (0.8, -1.3), (1.0, 2.2)] {
            let f = dc.f(t, t, x).unwrap();
            let q = dc.u1_prime_quadrature(t, x).unwrap();
            assert!((f + q).abs() < 1e-10, "{f} {q}");
            assert!((dc.g(t, t, x).unwrap() - dc.u1(t, x).unwrap()).abs() < 1e-15);
        }
    }
}
