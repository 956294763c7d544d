use proptest::prelude::*;
use shelab_core::coeff::{make_power, Coefficient};
use shelab_core::grid::{Boundary, GridSpec};
use shelab_core::noise::{NoiseSource, NoiseStream};
use shelab_core::solver::{sample_profile, solve, solve_coupled, FramePolicy};

fn grid(bc: Boundary) -> GridSpec {
    GridSpec::new(0.1, 0.004, 2.0, 0.2, bc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noise_rows_replay(seed in any::<u64>(), path in 0u64..1000, k in 0usize..50) {
        let g = grid(Boundary::Periodic);
        let a = NoiseStream::new(&g, seed, path);
        let b = NoiseStream::new(&g, seed, path);
        let (mut r1, mut r2) = (vec![0.0; g.cells()], vec![0.0; g.cells()]);
        a.fill_row(k, &mut r1);
        b.fill_row(k, &mut r2);
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn deterministic_neumann_max_principle(amp in 0.1f64..3.0, freq in 0.5f64..4.0) {
        let g = grid(Boundary::Neumann);
        let x0 = sample_profile(&g, |x| amp * (freq * x).sin());
        let noise = NoiseStream::new(&g, 0, 0);
        let u = solve(&g, &Coefficient::zero(), &x0, &noise, FramePolicy { stride: 10 }).unwrap();
        let (lo, hi) = x0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for &v in u.as_slice() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn equal_data_stay_equal(gamma in 0.5f64..1.0, seed in any::<u64>()) {
        let g = grid(Boundary::Dirichlet);
        let c = make_power(gamma, 1.0).unwrap();
        let x0 = sample_profile(&g, |x| (-x * x).exp());
        let noise = NoiseStream::new(&g, seed, 0);
        let run = solve_coupled(&g, &c, &x0, &x0, &noise, FramePolicy { stride: 5 }, seed, 0).unwrap();
        prop_assert!(run.u.as_slice().iter().all(|&v| v == 0.0));
        prop_assert_eq!(run.weighted_sup.len(), g.steps() + 1);
    }
}
