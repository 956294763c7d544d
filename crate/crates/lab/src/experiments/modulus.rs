//! Z-sets, Hölder fits near the zero set, J-band histograms and the γ-ladder.

use shelab_core::modulus::{classify_j, estimate_modulus, extract_z, gamma_ladder, j_histogram, ModulusFit, ZSet};
use shelab_core::noise::{mix_seed, NoiseStream};
use shelab_core::solver::{solve_coupled, CoupledRun, FramePolicy};
use shelab_core::Error;

use crate::config::{Config, ModulusSettings};
use crate::ensemble::run_paths;
use crate::plot::{Chart, Series, Style};
use crate::report::{Report, Table};
use crate::LabError;

struct PathOut {
    z_points: usize,
    z_invalid: usize,
    fit: Option<ModulusFit>,
    histogram: Option<(Vec<usize>, usize)>,
    path0: Option<(CoupledRun, ZSet)>,
}

pub(super) fn run(cfg: &Config, s: &ModulusSettings) -> Result<Report, LabError> {
    let grid = cfg.grid;
    let coeff = cfg.coefficient.build()?;
    let (x1, x2) = cfg.x0_pair(&grid);
    let policy = FramePolicy { stride: cfg.frame_stride };

    let ens = run_paths(cfg.paths, cfg.blowup_quota, |p| {
        let noise = NoiseStream::new(&grid, cfg.seed, p);
        let run = solve_coupled(&grid, &coeff, &x1, &x2, &noise, policy, cfg.seed, p)?;
        let t_k = run.stopping_time(cfg.k_level);
        let z = extract_z(&run.u, s.level, cfg.k_level, t_k)?;
        let z_invalid = z.validate(&run.u)?;
        let fit = match estimate_modulus(&run.u, &z, s.options) {
            Ok(f) => Some(f),
            Err(Error::InsufficientData { .. }) => None,
            Err(e) => return Err(e),
        };
        let histogram = match &s.betas {
            Some(bg) => {
                let frame = (0..run.u.frames()).rev().find(|&j| run.u.frame_time(j) <= t_k + 1e-12).unwrap_or(0);
                let labels = classify_j(&run.u, s.n, frame, s.k0, bg)?;
                Some(j_histogram(&labels, bg.l))
            }
            None => None,
        };
        Ok(PathOut { z_points: z.len(), z_invalid, fit, histogram, path0: (p == 0).then_some((run, z)) })
    })?;

    let mut rep = Report::default();
    rep.count("paths", ens.results.len() as u64);
    rep.count("blown_up", ens.blown.len() as u64);

    let mut fits = Table::new(
        "modulus_fits",
        &[
            "path", "seed", "zset_points", "zset_invalid", "pairs", "zero_pairs", "anchors", "xi_hat", "ci_lo", "ci_hi",
            "r_squared", "intercept",
        ],
    );
    let mut xis = Vec::new();
    for (p, o) in &ens.results {
        let f = o.fit.as_ref();
        let num = |g: fn(&ModulusFit) -> f64| f.map_or(f64::NAN, g);
        fits.push(vec![
            (*p).into(),
            mix_seed(cfg.seed, *p).into(),
            o.z_points.into(),
            o.z_invalid.into(),
            f.map_or(0, |f| f.pairs).into(),
            f.map_or(0, |f| f.zero_pairs).into(),
            f.map_or(0, |f| f.anchors).into(),
            num(|f| f.xi_hat).into(),
            num(|f| f.ci.0).into(),
            num(|f| f.ci.1).into(),
            num(|f| f.r_squared).into(),
            num(|f| f.intercept).into(),
        ]);
        if let Some(f) = f {
            xis.push(f.xi_hat);
        }
    }
    rep.tables.push(fits);

    let invalid: usize = ens.values().map(|o| o.z_invalid).sum();
    let total: usize = ens.values().map(|o| o.z_points).sum();
    rep.assert("zset-revalidates", invalid == 0, format!("{invalid} of {total} stored points fail to re-validate"));
    rep.count("unfitted_paths", (ens.results.len() - xis.len()) as u64);

    let xi_mean = if xis.is_empty() { f64::NAN } else { xis.iter().sum::<f64>() / xis.len() as f64 };
    rep.constant("xi_hat_mean", xi_mean);
    rep.constant("xi_hat_min", xis.iter().copied().fold(f64::NAN, f64::min));
    if let Some(min_xi) = s.min_xi {
        rep.assert(
            "modulus-exponent",
            xi_mean >= min_xi,
            format!("mean xi_hat {xi_mean:.4} over {} fitted paths (required >= {min_xi})", xis.len()),
        );
    }

    let (run0, z0) = ens.results[0].1.path0.as_ref().expect("path 0 keeps its run");
    let mut zset = Table::new("zset", &["t", "x", "u", "witness_t", "witness_x"]);
    for pt in &z0.points {
        zset.push(vec![
            run0.u.frame_time(pt.frame).into(),
            grid.x(pt.cell).into(),
            run0.u.get(pt.frame, pt.cell).into(),
            run0.u.frame_time(pt.witness_frame).into(),
            grid.x(pt.witness_cell).into(),
        ]);
    }
    rep.tables.push(zset);

    let mut bins = Table::new("modulus_bins", &["log_d", "log_du", "pairs"]);
    if let Some(f) = &ens.results[0].1.fit {
        for b in &f.bins {
            bins.push(vec![b.log_d.into(), b.log_du.into(), b.pairs.into()]);
        }
        let (lo, hi) = f.bins.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), b| (a.min(b.log_d), c.max(b.log_d)));
        rep.charts.push(Chart {
            name: "modulus_fit".into(),
            title: format!("path 0: xi_hat = {:.4}", f.xi_hat),
            x_label: "log d".into(),
            y_label: "log |du|".into(),
            log_y: false,
            series: vec![
                Series { label: "bins".into(), points: f.bins.iter().map(|b| (b.log_d, b.log_du)).collect(), style: Style::Markers },
                Series {
                    label: format!("slope {:.4}", f.xi_hat),
                    points: vec![(lo, f.intercept + f.xi_hat * lo), (hi, f.intercept + f.xi_hat * hi)],
                    style: Style::Line,
                },
            ],
        });
    }
    rep.tables.push(bins);

    if let Some(bg) = &s.betas {
        let mut betas = Table::new("beta_grid", &["i", "beta", "alpha"]);
        for (i, b) in bg.betas.iter().enumerate() {
            betas.push(vec![i.into(), (*b).into(), bg.alphas.get(i).copied().unwrap_or(f64::NAN).into()]);
        }
        rep.tables.push(betas);
        rep.count("beta_l_exact", bg.l_exact);
        rep.count("beta_l_used", bg.l as u64);
        rep.count("beta_grid_conforming", bg.conforming as u64);
        if !bg.conforming {
            log::warn!("non-conforming grid: L = {} capped at L_max = {}", bg.l_exact, bg.l);
        }
        let mut hist = Table::new("j_histogram", &["path", "band", "count"]);
        for (p, o) in &ens.results {
            if let Some((counts, none)) = &o.histogram {
                for (i, c) in counts.iter().enumerate() {
                    hist.push(vec![(*p).into(), format!("J{i}").into(), (*c).into()]);
                }
                hist.push(vec![(*p).into(), "none".into(), (*none).into()]);
            }
        }
        rep.tables.push(hist);
    }

    let gamma = coeff.gamma();
    if gamma > 0.75 && gamma < 1.0 {
        let ladder = gamma_ladder(gamma)?;
        let mut t = Table::new("gamma_ladder", &["m", "gamma_m", "gamma_tilde_m"]);
        for (m, g) in ladder.gamma_m.iter().enumerate() {
            t.push(vec![m.into(), (*g).into(), ladder.gamma_tilde(m).into()]);
        }
        rep.tables.push(t);
        rep.count("m_bar", ladder.m_bar as u64);
        rep.constant("gamma_limit", ladder.limit());
    }
    Ok(rep)
}
