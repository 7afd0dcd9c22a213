mod common;

use conetree::green::{closed_form_regular, gm_bounds, max_residual, picard, solve, solve_boundary, GreenVector};
use conetree::hyperbolic::gamma_max;
use conetree::operator::{build_adjacency, classify_regular, OperatorParams};
use conetree::spectral::density;
use conetree::{Complex64, SolverOptions};
use proptest::prelude::*;

fn spectral_point() -> impl Strategy<Value = Complex64> {
    (-6.0f64..6.0, -6.0f64..0.0).prop_map(|(e, l)| Complex64::new(e, 10f64.powf(l)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn herglotz_bounds_and_residual((_, p) in common::matrix_and_params(), z in spectral_point()) {
        let opts = SolverOptions::default();
        let g = solve(&p, z, &opts).unwrap();
        prop_assert!(g.in_upper_half_plane());
        for (j, (lo, hi)) in gm_bounds(&p, z).into_iter().enumerate() {
            let a = g[j].norm();
            prop_assert!(lo * (1.0 - 1e-9) <= a && a <= hi * (1.0 + 1e-9), "label {j}: {lo} <= {a} <= {hi}");
        }
        prop_assert!(max_residual(&p, z, &g) < 100.0 * opts.tol);
    }

    #[test]
    fn fixed_point_is_unique(
        (_, p) in common::matrix_and_params(),
        e in -4.0f64..4.0,
        eta in 0.05f64..1.0,
        start in common::half_plane_vec(3),
    ) {
        let z = Complex64::new(e, eta);
        let opts = SolverOptions::default();
        let a = solve(&p, z, &opts).unwrap();
        let init = GreenVector::new(start[..p.size()].to_vec());
        let b = picard(&p, z, init, opts.tol, 1_000_000).unwrap();
        prop_assert!(gamma_max(&a.components, &b.components).unwrap().sqrt() < 10.0 * opts.tol);
    }

    #[test]
    fn adjacency_density_is_even(m in common::matrix(), e in 0.0f64..4.0) {
        let p = build_adjacency(&m);
        let opts = SolverOptions::default();
        let rho = density(&p, 0, &[-e, e], 1e-3, &opts).unwrap();
        prop_assert!((rho[0] - rho[1]).abs() < 1e-8);
    }

    #[test]
    fn regular_operators_match_closed_form(
        rows in (1usize..=3).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0.2f64..1.0, n), n)),
        w in -1.0f64..1.0,
        x in -0.98f64..0.98,
    ) {
        let n = rows.len();
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| {
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| 2.5 * v / s).collect()
        }).collect();
        let p = OperatorParams::new(rows, vec![w; n]).unwrap();
        let class = classify_regular(&p);
        prop_assert!(class.regular);
        let k = class.k.unwrap();
        let e = w + x * 2.0 * k.sqrt();
        let got = solve_boundary(&p, e, &SolverOptions::default()).unwrap();
        let want = closed_form_regular(k, w, Complex64::new(e, 0.0)).unwrap();
        for j in 0..n {
            prop_assert!((got.gamma[j] - want).norm() < 1e-8, "{} vs {}", got.gamma[j], want);
        }
    }
}
