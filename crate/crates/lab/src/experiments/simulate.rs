//! Single-solution ensembles: snapshots of path 0, probe values of every path,
//! and the two closed-form oracles that apply to additive noise.

use std::f64::consts::PI;

use shelab_core::kernel::heat_kernel;
use shelab_core::noise::{mix_seed, NoiseField, NoiseStream};
use shelab_core::solver::{sample_profile, solve_observed};

use super::mean_se;
use crate::config::{Config, Shape, SimulateSettings};
use crate::ensemble::run_paths;
use crate::noise_io;
use crate::report::{Report, Table};
use crate::LabError;

struct PathOut {
    probes: Vec<f64>,
    snapshots: Vec<(usize, Vec<f64>)>,
    last: Vec<f64>,
}

pub(super) fn run(cfg: &Config, s: &SimulateSettings) -> Result<Report, LabError> {
    let grid = cfg.grid;
    let coeff = cfg.coefficient.build()?;
    let x0 = sample_profile(&grid, |x| cfg.initial.eval(x));
    let cell = grid.nearest_cell(s.probe_x);
    let steps: Vec<usize> = s.times.iter().map(|&t| grid.nearest_step(t)).collect();
    let total = grid.steps();

    let ens = run_paths(cfg.paths, cfg.blowup_quota, |p| {
        let noise = NoiseStream::new(&grid, cfg.seed, p);
        let mut out = PathOut { probes: vec![0.0; steps.len()], snapshots: Vec::new(), last: Vec::new() };
        solve_observed(&grid, &coeff, &x0, &noise, |k, x| {
            for (j, &ks) in steps.iter().enumerate() {
                if ks == k {
                    out.probes[j] = x[cell];
                }
            }
            if p == 0 && (k % s.snapshot_stride == 0 || k == total) {
                out.snapshots.push((k, x.to_vec()));
            }
            if k == total {
                out.last = x.to_vec();
            }
        })
        .map_err(|e| e.with_path(p))?;
        Ok(out)
    })?;

    let mut rep = Report::default();
    rep.count("paths", ens.results.len() as u64);
    rep.count("blown_up", ens.blown.len() as u64);

    let mut snap = Table::new("snapshots", &["t", "x", "X"]);
    if let Some((0, first)) = ens.results.first() {
        for (k, frame) in &first.snapshots {
            for (i, v) in frame.iter().enumerate() {
                snap.push(vec![grid.t(*k).into(), grid.x(i).into(), (*v).into()]);
            }
        }
    }
    rep.tables.push(snap);

    let mut probes = Table::new("probes", &["path", "seed", "t", "x", "X"]);
    for (p, out) in &ens.results {
        for (j, &k) in steps.iter().enumerate() {
            probes.push(vec![(*p).into(), mix_seed(cfg.seed, *p).into(), grid.t(k).into(), grid.x(cell).into(), out.probes[j].into()]);
        }
    }
    rep.tables.push(probes);

    // σ ≡ c, b ≡ 0, X0 ≡ 0: Var X(t, x) = c² √(t/π) away from the boundary
    let oracle = match (cfg.coefficient.additive(), cfg.initial.shape) {
        (Some(c), Shape::Zero) if c != 0.0 => Some(c * c),
        _ => None,
    };
    let mut var_table = Table::new("variance", &["t", "x", "paths", "mean", "variance", "variance_se", "oracle"]);
    let mut oracle_ok = true;
    let mut worst_z: f64 = 0.0;
    for (j, &k) in steps.iter().enumerate() {
        let xs: Vec<f64> = ens.values().map(|o| o.probes[j]).collect();
        let (mean, _) = mean_se(&xs);
        let var = shelab_core::stats::variance(&xs);
        // chi-square standard error of a normal sample variance
        let se = var * (2.0 / (xs.len() as f64 - 1.0)).sqrt();
        let t = grid.t(k);
        let expect = oracle.map_or(f64::NAN, |c2| c2 * (t / PI).sqrt());
        if oracle.is_some() && t > 0.0 {
            let z = (var - expect).abs() / se;
            worst_z = worst_z.max(z);
            oracle_ok &= z <= 3.0;
        }
        var_table.push(vec![t.into(), grid.x(cell).into(), xs.len().into(), mean.into(), var.into(), se.into(), expect.into()]);
    }
    rep.tables.push(var_table);
    if oracle.is_some() {
        rep.assert(
            "stochastic-convolution-variance",
            oracle_ok,
            format!("largest |Var - c^2 sqrt(t/pi)| is {worst_z:.2} standard errors (limit 3)"),
        );
        rep.constant("variance_worst_z", worst_z);
    }

    // σ ≡ 0, b ≡ 0, X0 = p_s: X(T) = p_{s+T}
    if cfg.coefficient.additive() == Some(0.0) && cfg.initial.shape == Shape::Heat {
        let t_end = grid.final_time();
        let err = ens
            .values()
            .flat_map(|o| o.last.iter().enumerate().map(|(i, v)| (v - heat_kernel(cfg.initial.time + t_end, grid.x(i)).unwrap_or(0.0)).abs()))
            .fold(0.0, f64::max);
        rep.constant("heat_sup_error", err);
        rep.assert(
            "deterministic-heat-solution",
            err <= s.heat_tolerance,
            format!("sup error {err:.3e} against p_(s+T) (tolerance {:e})", s.heat_tolerance),
        );
    }

    if s.dump_noise {
        let field = NoiseField::sample(&grid, cfg.seed, 0);
        rep.binaries.push(("noise_path0.bin".into(), noise_io::encode(&field)));
    }
    Ok(rep)
}
