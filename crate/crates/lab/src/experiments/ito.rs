//! `Z_n(t) - Z_n(0) - Σ I_i` on coupled ensembles at several grid levels.

use shelab_core::noise::{mix_seed, NoiseStream};
use shelab_core::solver::solve_coupled_observed;
use shelab_core::stats::fit_line;
use shelab_core::yamada::{ItoAccumulator, ItoTerms};

use super::mean_se;
use crate::config::{Config, ItoSettings};
use crate::ensemble::run_paths;
use crate::report::{Report, Table};
use crate::LabError;

pub(super) fn run(cfg: &Config, s: &ItoSettings) -> Result<Report, LabError> {
    let coeff = cfg.coefficient.build()?;
    let mut rep = Report::default();
    let mut terms = Table::new(
        "ito_terms",
        &["dx", "dt", "path", "seed", "i1", "i2", "i3", "i4", "i5", "zn0", "zn", "residual"],
    );
    let mut levels = Table::new("ito_levels", &["dx", "dt", "paths", "mean_abs_residual", "stderr", "mean_abs_zn"]);
    let mut means = Vec::new();
    let mut blown = 0;

    for grid in &s.levels {
        let (x1, x2) = cfg.x0_pair(grid);
        let k_end = grid.steps();
        let ens = run_paths(cfg.paths, cfg.blowup_quota, |p| {
            let noise = NoiseStream::new(grid, cfg.seed, p);
            let mut acc = Some(ItoAccumulator::new(grid, &coeff, s.n, s.test)?);
            let mut out = ItoTerms::default();
            solve_coupled_observed(grid, &coeff, &x1, &x2, &noise, |k, a, b, dw| match dw {
                Some(dw) => acc.as_mut().expect("accumulator is live until the end").step(k, a, b, dw),
                None => {
                    debug_assert_eq!(k, k_end);
                    out = acc.take().expect("finished once").finish(k, a, b);
                }
            })
            .map_err(|e| e.with_path(p))?;
            Ok(out)
        })?;
        blown += ens.blown.len();
        let mut abs_res = Vec::with_capacity(ens.results.len());
        let mut abs_zn = 0.0;
        for (p, t) in &ens.results {
            abs_res.push(t.residual().abs());
            abs_zn += t.zn.abs();
            terms.push(vec![
                grid.dx.into(),
                grid.dt.into(),
                (*p).into(),
                mix_seed(cfg.seed, *p).into(),
                t.i1.into(),
                t.i2.into(),
                t.i3.into(),
                t.i4.into(),
                t.i5.into(),
                t.zn0.into(),
                t.zn.into(),
                t.residual().into(),
            ]);
        }
        let (mean, se) = mean_se(&abs_res);
        levels.push(vec![
            grid.dx.into(),
            grid.dt.into(),
            abs_res.len().into(),
            mean.into(),
            se.into(),
            (abs_zn / abs_res.len() as f64).into(),
        ]);
        means.push((grid.dx, mean));
    }

    let decreasing = means.windows(2).all(|w| w[1].1 < w[0].1);
    let text: Vec<String> = means.iter().map(|(dx, m)| format!("dx={dx}: {m:.3e}")).collect();
    rep.assert("ito-residual-refinement", decreasing, format!("mean |Zn - Zn(0) - sum I_i|: {}", text.join(", ")));
    let lx: Vec<f64> = means.iter().map(|m| m.0.ln()).collect();
    let ly: Vec<f64> = means.iter().map(|m| m.1.ln()).collect();
    if let Some(fit) = fit_line(&lx, &ly) {
        rep.constant("ito_residual_order", fit.slope);
    }
    rep.count("blown_up", blown as u64);
    rep.tables.push(levels);
    rep.tables.push(terms);
    Ok(rep)
}
