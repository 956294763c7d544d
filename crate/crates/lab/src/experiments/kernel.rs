use shelab_core::kernel::verify::{
    derivative_sup_sweep, envelope_check, identity_sweep, j_sweep, CheckRow, IncrementKind, SHARP_DERIVATIVE_CONSTANT,
};

use crate::config::KernelSettings;
use crate::report::{Report, Table};
use crate::LabError;

fn push_rows(table: &mut Table, rows: &[CheckRow]) {
    for r in rows {
        table.push(vec![r.check.into(), r.params.clone().into(), r.lhs.into(), r.rhs.into(), r.ratio.into(), r.pass.into()]);
    }
}

fn worst(rows: &[CheckRow]) -> f64 {
    rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
}

pub(super) fn run(k: &KernelSettings) -> Result<Report, LabError> {
    let mut rep = Report::default();
    let mut table = Table::new("kernel_report", &["check", "params", "lhs", "rhs", "ratio", "pass"]);

    let rows = identity_sweep(k.n_t, k.n_x, k.tolerance)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    rep.assert(
        "kernel-identities",
        failed == 0,
        format!("{} points, {failed} failed, worst relative error {:e} (tolerance {:e})", rows.len(), worst(&rows), k.tolerance),
    );
    push_rows(&mut table, &rows);

    let rows = j_sweep(k.j_draws, k.j_seed)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    rep.assert("j-bounds", failed == 0, format!("{} draws, {failed} above the bound, worst value/bound {:e}", rows.len(), worst(&rows)));
    rep.constant("j_worst_ratio", worst(&rows));
    push_rows(&mut table, &rows);

    let rows = derivative_sup_sweep(k.sup_points, k.sharp_tolerance)?;
    let sup = rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
    let failed = rows.iter().filter(|r| !r.pass).count();
    rep.assert(
        "sharp-derivative-constant",
        failed == 0,
        format!("sup ratio {sup:.10} vs 2e^(-1/2) = {SHARP_DERIVATIVE_CONSTANT:.10} at {} times", rows.len()),
    );
    rep.constant("c_deriv_ratio", sup);
    push_rows(&mut table, &rows);

    let (sa, sb) = k.envelope_seeds;
    for kind in [IncrementKind::Density, IncrementKind::Derivative] {
        let env = envelope_check(kind, k.envelope_points, sa, sb, k.stability)?;
        let id = kind.id();
        rep.assert(
            &format!("{id}-envelope"),
            env.all_pass() && env.stable(),
            format!(
                "calibrated constants {:.6} / {:.6}, spread {:.3e} (allowed {:e}), {} of {} points under the envelope",
                env.constant_a,
                env.constant_b,
                env.relative_spread(),
                env.stability,
                env.rows.iter().filter(|r| r.pass).count(),
                env.rows.len()
            ),
        );
        rep.constant(&format!("c_{id}_a"), env.constant_a);
        rep.constant(&format!("c_{id}_b"), env.constant_b);
        push_rows(&mut table, &env.rows);
    }

    rep.count("report_rows", table.rows.len() as u64);
    rep.tables.push(table);
    Ok(rep)
}
