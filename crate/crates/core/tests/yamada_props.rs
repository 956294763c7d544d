use proptest::prelude::*;
use shelab_core::yamada::{a_seq, Stencil, YWFamily, check_family, m_seq};

#[test]
fn family_invariants_levels_one_to_six() {
    for n in 1..=6 {
        let fam = YWFamily::new(n).unwrap();
        assert!(check_family(&fam, 4000).unwrap().all_ok());
        let v = fam.half_line_pairing(f64::cos).unwrap();
        assert!((v - 1.0).abs() <= a_seq(n - 1), "n={n} {v}");
    }
}

proptest! {
    #[test]
    fn phi_increases_to_abs(n in 1u32..6, x in -2.0f64..2.0) {
        let f = YWFamily::new(n).unwrap();
        let g = YWFamily::new(n + 1).unwrap();
        prop_assert!(g.phi(x) >= f.phi(x));
        let gap = x.abs() - f.phi(x);
        prop_assert!(gap >= -1e-15 && gap <= a_seq(n - 1) * (1.0 + 1e-12));
        prop_assert!(f.phi_prime(x).abs() <= 1.0);
        prop_assert_eq!(f.phi(x), f.phi(-x));
        prop_assert!(f.phi_second(x) >= 0.0);
    }

    #[test]
    fn mollifier_stencil_reproduces_affine(n in 1u32..4, a in -3.0f64..3.0, b in -3.0f64..3.0, i in 200usize..800) {
        let dx = 0.004;
        let st = Stencil::mollifier(m_seq(n + 1), dx).unwrap();
        let xs: Vec<f64> = (0..1000).map(|k| -2.0 + (k as f64 + 0.5) * dx).collect();
        let v: Vec<f64> = xs.iter().map(|x| a + b * x).collect();
        prop_assert!((st.apply(&v, i) - (a + b * xs[i])).abs() < 1e-11);
    }
}
