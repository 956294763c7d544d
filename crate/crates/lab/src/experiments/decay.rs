//! Ensemble means of the local-time functional `I^n(t0 ∧ T_K)` over levels `n`.

use shelab_core::noise::{mix_seed, NoiseStream};
use shelab_core::solver::{solve_coupled_observed, weighted_sup};
use shelab_core::stats::fit_line;
use shelab_core::yamada::{a_seq, LocalTime};

use super::mean_se;
use crate::config::{Config, DecaySettings};
use crate::ensemble::run_paths;
use crate::plot::{Chart, Series, Style};
use crate::report::{Report, Table};
use crate::LabError;

struct PathOut {
    values: Vec<f64>,
    t_end: f64,
}

pub(super) fn run(cfg: &Config, s: &DecaySettings) -> Result<Report, LabError> {
    let grid = cfg.grid;
    let coeff = cfg.coefficient.build()?;
    let gamma = coeff.gamma();
    let (x1, x2) = cfg.x0_pair(&grid);
    let xs: Vec<f64> = grid.cell_centres().collect();
    let lt: Vec<LocalTime> = s.n.iter().map(|&n| LocalTime::new(&grid, n, gamma, s.test)).collect::<Result<_, _>>()?;
    let horizon = s.test.t0.min(cfg.k_level);

    let ens = run_paths(cfg.paths, cfg.blowup_quota, |p| {
        let noise = NoiseStream::new(&grid, cfg.seed, p);
        let mut out = PathOut { values: vec![0.0; lt.len()], t_end: horizon };
        let mut stopped = false;
        let mut u = vec![0.0; grid.cells()];
        solve_coupled_observed(&grid, &coeff, &x1, &x2, &noise, |k, a, b, _| {
            let t = grid.t(k);
            if stopped || t >= out.t_end {
                return;
            }
            // T_K: first grid time the weighted sup exceeds K
            if weighted_sup(&xs, a, b) > cfg.k_level {
                out.t_end = t;
                stopped = true;
                return;
            }
            if k % s.sub != 0 {
                return;
            }
            // left-point rule on the sub-sampled steps
            let h = (grid.t(k + s.sub).min(out.t_end) - t).max(0.0);
            for i in 0..u.len() {
                u[i] = a[i] - b[i];
            }
            for (v, l) in out.values.iter_mut().zip(&lt) {
                *v += l.rate(t, &u) * h;
            }
        })
        .map_err(|e| e.with_path(p))?;
        Ok(out)
    })?;

    let mut rep = Report::default();
    rep.count("paths", ens.results.len() as u64);
    rep.count("blown_up", ens.blown.len() as u64);

    let mut per_path = Table::new("in_paths", &["path", "seed", "n", "value", "t_end"]);
    for (p, o) in &ens.results {
        for (j, &n) in s.n.iter().enumerate() {
            per_path.push(vec![(*p).into(), mix_seed(cfg.seed, *p).into(), n.into(), o.values[j].into(), o.t_end.into()]);
        }
    }
    rep.tables.push(per_path);

    let mut table = Table::new("in_decay", &["n", "a_n", "paths", "mean", "stderr"]);
    let mut stats = Vec::new();
    for (j, &n) in s.n.iter().enumerate() {
        let vals: Vec<f64> = ens.values().map(|o| o.values[j]).collect();
        let (m, se) = mean_se(&vals);
        table.push(vec![n.into(), a_seq(n).into(), vals.len().into(), m.into(), se.into()]);
        stats.push((n, m, se));
    }
    rep.tables.push(table);

    let mut monotone = true;
    let mut notes = Vec::new();
    for w in stats.windows(2) {
        let ((n0, m0, s0), (n1, m1, s1)) = (w[0], w[1]);
        let slack = 3.0 * (s0 * s0 + s1 * s1).sqrt();
        let ok = m1 <= m0 + slack;
        monotone &= ok;
        notes.push(format!("I^{n1} - I^{n0} = {:.3e} (3 sigma = {slack:.3e})", m1 - m0));
    }
    rep.assert("in-nonincreasing", monotone, notes.join("; "));

    if stats.iter().all(|s| s.1 > 0.0) {
        let la: Vec<f64> = stats.iter().map(|s| a_seq(s.0).ln()).collect();
        let lm: Vec<f64> = stats.iter().map(|s| s.1.ln()).collect();
        let fit = fit_line(&la, &lm).ok_or_else(|| LabError::Numerical("degenerate decay fit".into()))?;
        rep.constant("in_slope", fit.slope);
        rep.constant("target_exponent", gamma - 0.75);
        rep.assert(
            "in-slope-positive",
            fit.slope > 0.0,
            format!("slope of log mean I^n against log a_n is {:.4} (target rate a_n^(gamma - 3/4))", fit.slope),
        );
    } else {
        log::warn!("some mean I^n vanish; slope not fitted");
    }

    rep.charts.push(Chart {
        name: "in_decay".into(),
        title: format!("mean I^n(t0 ^ T_K), gamma = {gamma}"),
        x_label: "n".into(),
        y_label: "mean I^n".into(),
        log_y: true,
        series: vec![Series {
            label: "mean".into(),
            points: stats.iter().map(|s| (s.0 as f64, s.1)).collect(),
            style: Style::LineMarkers,
        }],
    });
    Ok(rep)
}
