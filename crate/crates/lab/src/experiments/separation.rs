//! Weighted-sup separation `sup_x |u(t,x)| e^{-|x|}` across a sweep of power exponents.

use shelab_core::modulus::separation_row;
use shelab_core::noise::NoiseStream;
use shelab_core::solver::{ctem_norm, solve_coupled_observed};

use crate::config::{Config, SeparationSettings};
use crate::ensemble::run_paths;
use crate::plot::{Chart, Series, Style};
use crate::report::{Report, Table};
use crate::LabError;

pub(super) fn run(cfg: &Config, s: &SeparationSettings) -> Result<Report, LabError> {
    let grid = cfg.grid;
    let (x1, x2) = cfg.x0_pair(&grid);
    let xs: Vec<f64> = grid.cell_centres().collect();
    let steps: Vec<usize> = s.times.iter().map(|&t| grid.nearest_step(t)).collect();

    let mut rep = Report::default();
    let mut table = Table::new("separation", &["gamma", "t", "paths", "mean", "q10", "q50", "q90", "max"]);
    let mut series = Vec::new();
    let mut blown = 0;
    let mut largest: f64 = 0.0;
    for &gamma in &s.gammas {
        let mut spec = cfg.coefficient.clone();
        spec.family = "power".into();
        let coeff = spec.build_with_gamma(gamma)?;
        let ens = run_paths(cfg.paths, cfg.blowup_quota, |p| {
            // the noise depends on the path only, so every γ sees the same realisations
            let noise = NoiseStream::new(&grid, cfg.seed, p);
            let mut out = vec![0.0; steps.len()];
            let mut u = vec![0.0; grid.cells()];
            let mut failed = None;
            solve_coupled_observed(&grid, &coeff, &x1, &x2, &noise, |k, a, b, _| {
                if !steps.contains(&k) {
                    return;
                }
                for i in 0..u.len() {
                    u[i] = a[i] - b[i];
                }
                match ctem_norm(&u, &xs, 1.0) {
                    Ok(v) => steps.iter().enumerate().filter(|(_, &ks)| ks == k).for_each(|(j, _)| out[j] = v),
                    Err(e) => failed = Some(e),
                }
            })
            .map_err(|e| e.with_path(p))?;
            failed.map_or(Ok(out), Err)
        })?;
        blown += ens.blown.len();
        let mut points = Vec::new();
        for (j, &k) in steps.iter().enumerate() {
            let vals: Vec<f64> = ens.values().map(|o| o[j]).collect();
            let row = separation_row(gamma, grid.t(k), &vals)?;
            largest = largest.max(row.max);
            table.push(vec![
                gamma.into(),
                row.t.into(),
                row.paths.into(),
                row.mean.into(),
                row.q10.into(),
                row.q50.into(),
                row.q90.into(),
                row.max.into(),
            ]);
            points.push((row.t, row.mean));
        }
        series.push(Series { label: format!("gamma = {gamma}"), points, style: Style::LineMarkers });
    }
    rep.tables.push(table);
    rep.count("blown_up", blown as u64);
    rep.constant("max_separation", largest);
    if cfg.perturbation.is_trivial() {
        rep.assert("equal-initial-data", largest == 0.0, format!("largest weighted separation {largest:e} with equal initial data"));
    }
    rep.charts.push(Chart {
        name: "separation".into(),
        title: "mean sup |u| e^(-|x|)".into(),
        x_label: "t".into(),
        y_label: "mean weighted separation".into(),
        log_y: false,
        series,
    });
    Ok(rep)
}
