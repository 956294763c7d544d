use shelab_core::yamada::{check_family, YWFamily};

use crate::config::Config;
use crate::report::{Report, Table};
use crate::LabError;

pub(super) fn run(cfg: &Config, points: usize) -> Result<Report, LabError> {
    let mut rep = Report::default();
    let mut table = Table::new(
        "yw_invariants",
        &[
            "n", "a_n", "a_prev", "m_n", "mass_error", "envelope_ratio", "max_phi_prime", "max_phi_below", "min_gap",
            "max_gap", "cos_pairing", "pass",
        ],
    );
    for n in 1..=cfg.n_max {
        let fam = YWFamily::new(n)?;
        let c = check_family(&fam, points)?;
        let cos = fam.half_line_pairing(f64::cos)?;
        let cos_ok = (cos - 1.0).abs() <= fam.a_prev;
        let pass = c.all_ok() && cos_ok;
        table.push(vec![
            n.into(),
            fam.a_n.into(),
            fam.a_prev.into(),
            fam.m_n.into(),
            c.mass_error.into(),
            c.envelope_ratio.into(),
            c.max_phi_prime.into(),
            c.max_phi_below.into(),
            c.min_gap.into(),
            c.max_gap.into(),
            cos.into(),
            pass.into(),
        ]);
        let failing: Vec<&str> = [
            ("mass", c.mass_ok()),
            ("envelope", c.envelope_ok()),
            ("phi'", c.phi_prime_ok()),
            ("vanishing", c.vanishing_ok()),
            ("gap", c.gap_ok(fam.a_prev)),
            ("cos-pairing", cos_ok),
        ]
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| *name)
        .collect();
        rep.assert(
            &format!("yw-family-n{n}"),
            pass,
            if pass { format!("all invariants hold; |pairing - 1| = {:.3e} <= a_(n-1)", (cos - 1.0).abs()) } else { format!("failing: {}", failing.join(", ")) },
        );
    }
    rep.tables.push(table);
    Ok(rep)
}
