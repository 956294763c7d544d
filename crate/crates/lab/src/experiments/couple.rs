//! Coupled pairs on shared noise: snapshots, stopping times, separation
//! growth, the smooth/rough decomposition of path 0 and the coefficient report.

use shelab_core::coeff::{verify_conditions, Family};
use shelab_core::decomp::{drivers, Decomposition};
use shelab_core::noise::{mix_seed, NoiseStream};
use shelab_core::solver::{ctem_norm, solve_coupled, CoupledRun, FramePolicy};
use shelab_core::stats::fit_line;

use super::Uniforms;
use crate::config::{Config, CoupleSettings};
use crate::ensemble::run_paths;
use crate::report::{Report, Table};
use crate::LabError;

struct PathOut {
    sup_abs_u: f64,
    /// `‖u(t_j)‖_1` at every stored frame.
    separation: Vec<f64>,
    t_k: Vec<f64>,
    sigma_violations: usize,
    drift_violations: usize,
    run: Option<CoupledRun>,
}

pub(super) fn run(cfg: &Config, s: &CoupleSettings) -> Result<Report, LabError> {
    let grid = cfg.grid;
    let coeff = cfg.coefficient.build()?;
    let (x1, x2) = cfg.x0_pair(&grid);
    let xs: Vec<f64> = grid.cell_centres().collect();
    let policy = FramePolicy { stride: cfg.frame_stride };

    let ens = run_paths(cfg.paths, cfg.blowup_quota, |p| {
        let noise = NoiseStream::new(&grid, cfg.seed, p);
        let run = solve_coupled(&grid, &coeff, &x1, &x2, &noise, policy, cfg.seed, p)?;
        let u = &run.u;
        let sup_abs_u = u.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let separation = (0..u.frames()).map(|j| ctem_norm(u.frame(j), &xs, 1.0)).collect::<Result<_, _>>()?;
        let t_k = s.k_levels.iter().map(|&k| run.stopping_time(k)).collect();
        let d = drivers(&run, &coeff);
        Ok(PathOut {
            sup_abs_u,
            separation,
            t_k,
            sigma_violations: d.sigma_violations,
            drift_violations: d.drift_violations,
            run: (p == 0).then_some(run),
        })
    })?;

    let mut rep = Report::default();
    rep.count("paths", ens.results.len() as u64);
    rep.count("blown_up", ens.blown.len() as u64);

    let mut paths = Table::new("paths", &["path", "seed", "sup_abs_u", "sup_weighted_u", "sigma_violations", "drift_violations"]);
    let mut stops = Table::new("stopping_times", &["path", "k", "t_k"]);
    for (p, o) in &ens.results {
        let weighted = o.separation.iter().copied().fold(0.0, f64::max);
        paths.push(vec![
            (*p).into(),
            mix_seed(cfg.seed, *p).into(),
            o.sup_abs_u.into(),
            weighted.into(),
            o.sigma_violations.into(),
            o.drift_violations.into(),
        ]);
        for (k, t) in s.k_levels.iter().zip(&o.t_k) {
            stops.push(vec![(*p).into(), (*k).into(), (*t).into()]);
        }
    }
    rep.tables.push(paths);
    rep.tables.push(stops);

    let sup_abs_u = ens.values().map(|o| o.sup_abs_u).fold(0.0, f64::max);
    rep.constant("sup_abs_u", sup_abs_u);
    if cfg.perturbation.is_trivial() {
        rep.assert("equal-initial-data", sup_abs_u == 0.0, format!("sup |u| = {sup_abs_u:e} over all paths and frames"));
    }

    let builtin = !matches!(coeff.family, Family::Custom);
    let violations: usize = ens.values().map(|o| o.sigma_violations + o.drift_violations).sum();
    if builtin {
        rep.assert("driver-envelopes", violations == 0, format!("{violations} envelope violations of sigma(X1) - sigma(X2) and b(X1) - b(X2)"));
    }

    // mean weighted separation per stored frame, and its exponential growth rate
    let first = &ens.results[0].1;
    let run0 = first.run.as_ref().expect("path 0 keeps its run");
    let frames = run0.u.frames();
    let mut growth = Table::new("separation_growth", &["t", "mean_weighted_u"]);
    let (mut ts, mut logs) = (Vec::new(), Vec::new());
    for j in 0..frames {
        let t = run0.u.frame_time(j);
        let m = ens.values().map(|o| o.separation[j]).sum::<f64>() / ens.results.len() as f64;
        growth.push(vec![t.into(), m.into()]);
        if m > 0.0 {
            ts.push(t);
            logs.push(m.ln());
        }
    }
    rep.tables.push(growth);
    if let Some(fit) = fit_line(&ts, &logs) {
        rep.constant("gronwall_rate", fit.slope);
    }

    let mut snap = Table::new("snapshots", &["t", "x", "X1", "X2", "u"]);
    for j in 0..frames {
        let k = run0.u.frame_steps[j];
        if k % s.snapshot_stride != 0 && j + 1 != frames {
            continue;
        }
        let (a, b, u) = (run0.x1.frame(j), run0.x2.frame(j), run0.u.frame(j));
        for i in 0..grid.cells() {
            snap.push(vec![grid.t(k).into(), grid.x(i).into(), a[i].into(), b[i].into(), u[i].into()]);
        }
    }
    rep.tables.push(snap);

    let dc = Decomposition::new(&run0.u, s.delta)?;
    let mut probes = Table::new("decomposition", &["t", "x", "u", "u1", "u2", "F", "G"]);
    let mut rng = Uniforms(mix_seed(cfg.seed, u64::MAX));
    let (mut split_err, mut g_err) = (0.0_f64, 0.0_f64);
    let t_end = grid.final_time();
    for _ in 0..s.probes {
        let t = t_end * rng.next();
        let x = grid.half_width * (2.0 * rng.next() - 1.0);
        let (u, u1, u2) = (dc.u(t, x)?, dc.u1(t, x)?, dc.u2(t, x)?);
        let (f, g) = (dc.f(t, t, x)?, dc.g(t, t, x)?);
        split_err = split_err.max((u1 + u2 - u).abs());
        g_err = g_err.max((g - u1).abs());
        probes.push(vec![t.into(), x.into(), u.into(), u1.into(), u2.into(), f.into(), g.into()]);
    }
    rep.tables.push(probes);
    rep.assert(
        "decomposition-exact",
        split_err <= 1e-12 && g_err <= 1e-12,
        format!("{} probes: max |u1 + u2 - u| = {split_err:e}, max |G(t,t,x) - u1| = {g_err:e}", s.probes),
    );

    let report = verify_conditions(&coeff, s.condition_budget, cfg.seed)?;
    let mut cond = Table::new("conditions", &["family", "samples", "growth_ratio", "holder_ratio", "drift_ratio", "pass"]);
    cond.push(vec![
        coeff.label.clone().into(),
        report.samples.into(),
        report.growth_ratio.into(),
        report.holder_ratio.into(),
        report.drift_ratio.into(),
        report.pass().into(),
    ]);
    rep.tables.push(cond);
    rep.assert(
        "coefficient-conditions",
        report.pass(),
        format!(
            "worst ratios: growth {:.4}, Hoelder {:.4}, drift {:.4} over {} samples",
            report.growth_ratio, report.holder_ratio, report.drift_ratio, report.samples
        ),
    );
    Ok(rep)
}
