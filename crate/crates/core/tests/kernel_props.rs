use proptest::prelude::*;
use shelab_core::kernel::verify::{derivative_sup_sweep, identity_sweep, j_sweep, SHARP_DERIVATIVE_CONSTANT};
use shelab_core::kernel::{
    derivative_ratio, heat_kernel, j_integral, j_integral_quadrature, kernel_product_integral, JParams, Method,
};

#[test]
fn small_identity_sweep_passes() {
    let rows = identity_sweep(8, 8, 1e-8).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.pass), "{:?}", rows.iter().find(|r| !r.pass));
}

#[test]
fn small_j_and_sup_sweeps_pass() {
    assert!(j_sweep(300, 4).unwrap().iter().all(|r| r.pass));
    assert!(derivative_sup_sweep(6, 1e-6).unwrap().iter().all(|r| r.pass));
}

proptest! {
    #[test]
    fn kernel_is_even_and_positive(t in 1e-3f64..10.0, x in -5.0f64..5.0) {
        let a = heat_kernel(t, x).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, heat_kernel(t, -x).unwrap());
    }

    #[test]
    fn derivative_ratio_below_sharp_constant(t in 1e-4f64..100.0, z in -20.0f64..20.0) {
        prop_assert!(derivative_ratio(t, z).unwrap() <= SHARP_DERIVATIVE_CONSTANT * (1.0 + 1e-12));
    }

    #[test]
    fn product_closed_form_matches_quadrature(t in 1e-2f64..5.0, x in -3.0f64..3.0) {
        let c = kernel_product_integral(t, x, Method::ClosedForm).unwrap();
        let q = kernel_product_integral(t, x, Method::Quadrature).unwrap();
        prop_assert!((c - q).abs() <= 1e-8 * c.abs().max(q.abs()) + 1e-300);
    }

    #[test]
    fn j_closed_form_matches_quadrature(
        p in 0.1f64..1.0,
        q in -0.9f64..0.9,
        d1 in 0.01f64..0.5,
        frac in 0.01f64..1.0,
        dl in 0.0f64..0.6,
    ) {
        let params = JParams { p, q, delta1: d1, delta2: d1 * frac, delta: dl };
        let out = j_integral(params, 1.0).unwrap();
        let quad = j_integral_quadrature(params, 1.0).unwrap();
        prop_assert!((out.value - quad).abs() <= 1e-8 * out.value.abs().max(1e-12), "{} {}", out.value, quad);
        if let Some((bound, _)) = out.bound {
            prop_assert!(out.value <= bound * (1.0 + 1e-12));
        }
    }
}
