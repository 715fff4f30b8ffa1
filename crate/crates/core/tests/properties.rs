use std::sync::Arc;

use kernmetric::embeddings::{gram, kme_sq_norm, min_eigenvalue};
use kernmetric::io::fmt_f64;
use kernmetric::kernels::{make_metric_phi, make_quantile_monge, make_radial_hilbert, quantile_sq_distance};
use kernmetric::phi::PhiProfile;
use kernmetric::spaces::{DiscreteMeasure, MetricSpec, Point, PointSpace, QuadratureGrid};
use kernmetric::stats::{divergence, kernel_score, mmd, permutation_test};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = PhiProfile> {
    prop_oneof![
        (0.05f64..5.0).prop_map(|alpha| PhiProfile::Gaussian { alpha }),
        (0.05f64..5.0).prop_map(|c| PhiProfile::ExpSqrt { c }),
        (0.1f64..3.0, 0.2f64..5.0).prop_map(|(beta, scale)| PhiProfile::InverseRational { beta, scale }),
        prop::collection::vec((0.0f64..4.0, 0.05f64..1.0), 1..4)
            .prop_filter("needs a positive rate", |a| a.iter().any(|(r, _)| *r > 0.0))
            .prop_map(|atoms| PhiProfile::DiscreteLaplace { atoms }),
    ]
}

fn points(dim: usize, max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::collection::vec(-4.0f64..4.0, dim), 2..max)
        .prop_map(|v| v.into_iter().map(Point::Vector).collect())
}

fn line_measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 1..6).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let xs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        DiscreteMeasure::on_line(&xs, atoms.iter().map(|a| a.1 / total).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radial_kernels_are_symmetric_with_constant_diagonal(phi in profile(), pts in points(3, 8)) {
        let k = make_radial_hilbert(phi.clone(), PointSpace::Euclidean { dim: 3 }).unwrap();
        for x in &pts {
            prop_assert_eq!(k.eval(x, x).unwrap(), phi.at_zero());
            for y in &pts {
                prop_assert_eq!(k.eval(x, y).unwrap(), k.eval(y, x).unwrap());
                prop_assert!(k.eval(x, y).unwrap() <= phi.at_zero());
            }
        }
    }

    #[test]
    fn gram_matrices_are_psd(phi in profile(), pts in points(2, 20)) {
        let k = make_radial_hilbert(phi, PointSpace::Euclidean { dim: 2 }).unwrap();
        let g = gram(&k, &pts).unwrap();
        let tol = 1e-8 * g.trace().max(1.0);
        prop_assert!(min_eigenvalue(&g).unwrap() >= -tol);
    }

    #[test]
    fn laplace_type_kernels_are_psd(phi in profile(), pts in points(2, 20)) {
        let k = make_metric_phi(phi, MetricSpec::Euclidean { dim: 2 }).unwrap();
        let g = gram(&k, &pts).unwrap();
        prop_assert!(min_eigenvalue(&g).unwrap() >= -1e-8 * g.trace().max(1.0));
    }

    #[test]
    fn mmd_is_a_pseudometric(phi in profile(), p in line_measure(), q in line_measure(), s in line_measure()) {
        let k = make_radial_hilbert(phi, PointSpace::Euclidean { dim: 1 }).unwrap();
        let pq = mmd(&k, &p, &q).unwrap();
        prop_assert_eq!(mmd(&k, &p, &p).unwrap(), 0.0);
        prop_assert!((pq - mmd(&k, &q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!(pq <= mmd(&k, &p, &s).unwrap() + mmd(&k, &s, &q).unwrap() + 1e-9);
        prop_assert!((divergence(&k, &p, &q).unwrap() - 0.5 * pq * pq).abs() <= 1e-12);
    }

    #[test]
    fn kernel_score_of_a_dirac_matches_closed_form(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let k = make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, PointSpace::Euclidean { dim: 1 }).unwrap();
        let dirac = DiscreteMeasure::on_line(&[x], vec![1.0]).unwrap();
        prop_assert_eq!(kernel_score(&k, &dirac, &Point::scalar(x)).unwrap(), 0.0);
        let s = kernel_score(&k, &dirac, &Point::scalar(y)).unwrap();
        prop_assert!((s - (1.0 - (-(x - y).powi(2) / 2.0).exp())).abs() <= 1e-15);
    }

    #[test]
    fn quantile_distance_is_a_metric(p in line_measure(), q in line_measure(), s in line_measure()) {
        let d = |a: &DiscreteMeasure, b: &DiscreteMeasure| quantile_sq_distance(a, b).sqrt();
        prop_assert_eq!(d(&p, &p), 0.0);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-12);
        prop_assert!(d(&p, &q) <= d(&p, &s) + d(&s, &q) + 1e-12);
    }

    #[test]
    fn quantile_kernel_is_psd(ms in prop::collection::vec(line_measure(), 2..10)) {
        let grid = Arc::new(QuadratureGrid::unit_trapezoid(11).unwrap());
        let k = make_quantile_monge(PhiProfile::Gaussian { alpha: 1.0 }, grid).unwrap();
        let pts: Vec<Point> = ms.into_iter().map(Point::Measure).collect();
        let g = gram(&k, &pts).unwrap();
        prop_assert!(min_eigenvalue(&g).unwrap() >= -1e-8 * g.trace().max(1.0));
    }

    #[test]
    fn squared_norm_is_homogeneous(p in line_measure(), a in -5.0f64..5.0) {
        let k = make_radial_hilbert(PhiProfile::Gaussian { alpha: 1.0 }, PointSpace::Euclidean { dim: 1 }).unwrap();
        let lhs = kme_sq_norm(&k, &p.scaled(a)).unwrap();
        let rhs = a * a * kme_sq_norm(&k, &p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn permutation_p_values_are_valid_and_reproducible(
        xs in prop::collection::vec(-3.0f64..3.0, 2..8),
        ys in prop::collection::vec(-3.0f64..3.0, 2..8),
        seed in any::<u64>(),
    ) {
        let k = make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, PointSpace::Euclidean { dim: 1 }).unwrap();
        let xs: Vec<Point> = xs.into_iter().map(Point::scalar).collect();
        let ys: Vec<Point> = ys.into_iter().map(Point::scalar).collect();
        let a = permutation_test(&k, &xs, &ys, 49, seed).unwrap();
        prop_assert!(a.p_value >= 1.0 / 50.0 && a.p_value <= 1.0);
        prop_assert_eq!(a, permutation_test(&k, &xs, &ys, 49, seed).unwrap());
    }

    #[test]
    fn shipped_profiles_pass_the_monotonicity_check(phi in profile()) {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        prop_assert!(phi.complete_monotonicity_check(&grid, 4).unwrap());
    }

    #[test]
    fn float_format_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}
