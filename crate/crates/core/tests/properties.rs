use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use deformlab_core::expr::Expr;
use deformlab_core::fit::loglog_slope;
use deformlab_core::geodesic::{connect, shoot, ConnectOptions};
use deformlab_core::jet::{deformation_jet, sorted_multi_indices};
use deformlab_core::taylor::{matrix_inverse, MonomialBasis, TaylorPoly};
use deformlab_core::transport::ode_transport;
use deformlab_core::MetricModel;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn quadratic_form(g: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    (DVector::from_column_slice(a).transpose() * g * DVector::from_column_slice(b))[(0, 0)]
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn christoffel_is_torsion_free(theta in 0.3f64..2.8, phi in -3.0f64..3.0, u in -2.0f64..2.0, y in 0.2f64..3.0) {
        for (m, x) in [
            (MetricModel::sphere2(1.5).unwrap(), vec![theta, phi]),
            (MetricModel::halfplane(), vec![u, y]),
            (MetricModel::polar_flat(), vec![y, phi]),
        ] {
            let c = m.christoffel(&m.point(x).unwrap(), 2).unwrap();
            for mu in 0..2 {
                for s in 0..2 {
                    for nu in 0..2 {
                        prop_assert_eq!(c.gamma(mu, s, nu), c.gamma(mu, nu, s));
                        for k in 0..2 {
                            prop_assert_eq!(
                                c.derivative(mu, s, nu, &[k]),
                                c.derivative(mu, nu, s, &[k])
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_identities_and_sectional_values(theta in 0.3f64..2.8, phi in -3.0f64..3.0, u in -2.0f64..2.0, y in 0.2f64..3.0) {
        let r = 2.0;
        for (m, x, k) in [
            (MetricModel::sphere2(r).unwrap(), vec![theta, phi], 1.0 / (r * r)),
            (MetricModel::halfplane(), vec![u, y], -1.0),
            (MetricModel::polar_flat(), vec![y, phi], 0.0),
        ] {
            let p = m.point(x.clone()).unwrap();
            let riemann = m.riemann(&p).unwrap();
            prop_assert_eq!(riemann.antisymmetry_residual(), 0.0);
            prop_assert!(riemann.cyclic_residual() < 1e-8);
            let (g, _) = m.metric_at(&x).unwrap();
            prop_assert!((riemann.sectional(&g, 0, 1) - k).abs() < 1e-10);
        }
    }

    #[test]
    fn connect_inverts_shoot(u in -1.0f64..1.0, y in 0.5f64..2.0, a in -0.15f64..0.15, b in -0.15f64..0.15) {
        let m = MetricModel::halfplane();
        let x = m.point(vec![u, y]).unwrap();
        let tau = [a * y, b * y];
        let end = shoot(&m, &x, &tau, 1.0, 400).unwrap().end_point();
        let found = connect(&m, &x, &end, &ConnectOptions::with_steps(400)).unwrap();
        for (p, q) in found.components.iter().zip(tau) {
            prop_assert!((p - q).abs() < 1e-10 * y, "{} vs {}", p, q);
        }
    }

    #[test]
    fn ode_transport_is_an_isometry(theta in 0.5f64..2.6, phi in -1.0f64..1.0, a in -0.2f64..0.2, b in -0.2f64..0.2, v in prop::array::uniform4(-1.0f64..1.0)) {
        let m = MetricModel::sphere2(1.0).unwrap();
        let x = m.point(vec![theta, phi]).unwrap();
        let path = shoot(&m, &x, &[a, b], 1.0, 400).unwrap();
        let transport = ode_transport(&m, &path).unwrap();
        let (gx, _) = m.metric_at(&x).unwrap();
        let (gxp, _) = m.metric_at(&path.end().x).unwrap();
        let (p, q) = (&v[..2], &v[2..]);
        let before = quadratic_form(&gxp, p, q);
        let after = quadratic_form(&gx, &transport.apply(p), &transport.apply(q));
        prop_assert!((before - after).abs() < 1e-10, "{} vs {}", before, after);
    }

    #[test]
    fn flat_deformation_is_the_identity(n in 1usize..5, seed in prop::collection::vec(-5.0f64..5.0, 8)) {
        let m = MetricModel::flat(n).unwrap();
        let x = m.point(seed[..n].to_vec()).unwrap();
        let jet = deformation_jet(&m, &x, 6).unwrap();
        let t = &seed[4..4 + n.min(4)];
        let lambda = jet.lambda_matrix(t).unwrap();
        prop_assert_eq!(lambda, DMatrix::identity(n, n));
        prop_assert_eq!(jet.eval_h(t).unwrap(), t.to_vec());
    }

    #[test]
    fn radial_vectors_transport_to_the_initial_tangent(theta in 0.6f64..2.5, phi in -1.0f64..1.0, a in -0.04f64..0.04, b in -0.04f64..0.04) {
        let m = MetricModel::sphere2(1.0).unwrap();
        let x = m.point(vec![theta, phi]).unwrap();
        let path = shoot(&m, &x, &[a, b], 1.0, 400).unwrap();
        let end = path.end();
        let t: Vec<f64> = end.x.iter().zip(x.iter()).map(|(p, q)| p - q).collect();
        let jet = deformation_jet(&m, &x, 12).unwrap();
        let back = jet.eval_lambda(&t).unwrap().apply(&end.tau);
        prop_assert!((back[0] - a).abs() < 1e-9 && (back[1] - b).abs() < 1e-9, "{:?}", back);
    }

    #[test]
    fn taylor_matrix_inverse(coeffs in prop::collection::vec(-0.5f64..0.5, 60)) {
        let basis = MonomialBasis::new(2, 4);
        let len = basis.len();
        let entry = |k: usize| {
            let mut c = coeffs[k * len..(k + 1) * len].to_vec();
            c[0] += if k == 0 || k == 3 { 2.0 } else { 0.0 };
            TaylorPoly::from_coeffs(&basis, c)
        };
        let m: Vec<TaylorPoly> = (0..4).map(entry).collect();
        let inv = matrix_inverse(&m, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = TaylorPoly::zero(&basis);
                for k in 0..2 {
                    acc.add_assign(&m[i * 2 + k].mul(&inv[k * 2 + j]));
                }
                let expected = TaylorPoly::constant(&basis, if i == j { 1.0 } else { 0.0 });
                prop_assert!(acc.sub(&expected).max_abs() < 1e-11);
            }
        }
    }

    #[test]
    fn parsed_polynomials_evaluate(a in -3.0f64..3.0, b in -3.0f64..3.0, x0 in -2.0f64..2.0, x1 in 0.1f64..2.0) {
        let e = Expr::parse(&format!("({a})*x0^2 - ({b})*x0*x1 + x1^-1"), 2).unwrap();
        let expected = a * x0 * x0 - b * x0 * x1 + 1.0 / x1;
        prop_assert!((e.value(&[x0, x1]) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn power_laws_fit_exactly(c in 0.01f64..100.0, p in 0.5f64..8.0) {
        let pts: Vec<(f64, f64)> = [0.05f64, 0.1, 0.2, 0.4].iter().map(|&s| (s, c * s.powf(p))).collect();
        prop_assert!((loglog_slope(&pts, 4).unwrap() - p).abs() < 1e-10);
    }
}

#[test]
fn multi_index_counts() {
    for n in 1..5 {
        for k in 0..7 {
            let all = sorted_multi_indices(n, k);
            assert_eq!(all.len(), binomial(n + k - 1, k));
            assert!(all.iter().all(|nu| nu.windows(2).all(|w| w[0] <= w[1])));
        }
    }
}

#[test]
fn basis_is_shared() {
    let basis = MonomialBasis::new(3, 5);
    let p = TaylorPoly::variable(&basis, 1, 0.5);
    assert!(Arc::ptr_eq(p.basis(), &basis));
    assert_eq!(basis.len(), binomial(8, 5));
}
