use std::sync::Arc;

use fldisc::ad::{AffineField, FieldRef};
use fldisc::geometry::{lift_map, make_builtin_map, Diffeo, MapKind};
use fldisc::integrator::DiscreteScheme;
use fldisc::linearizability::lie_bracket;
use fldisc::presets::{unicycle_preset, UnicycleDrift};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vec_in(len: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, len)
}

fn kind() -> impl Strategy<Value = MapKind> {
    prop::sample::select(MapKind::BUILTIN.to_vec())
}

/// `x ↦ (I + E)x + c` with a small perturbation `E`.
fn affine_diffeo(entries: &[f64], offset: &[f64]) -> Diffeo {
    let n = offset.len();
    let m = DMatrix::identity(n, n) + DMatrix::from_column_slice(n, n, entries) * 0.3;
    let inv = m.clone().try_inverse().expect("near identity");
    let back = -(&inv * DVector::from_column_slice(offset));
    Diffeo::new(
        Arc::new(AffineField::new(m, offset.to_vec())),
        Arc::new(AffineField::new(inv, back.as_slice().to_vec())),
    )
    .unwrap()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn map_inverse_undoes_map(k in kind(), x in vec_in(3, 2.0), v in vec_in(3, 0.5)) {
        let map = make_builtin_map(k, 3).unwrap();
        let (x0, x1) = map.apply(&x, &v).unwrap();
        let (base, w) = map.invert(&x0, &x1).unwrap();
        prop_assert!(max_gap(&base, &x) < 1e-12);
        prop_assert!(max_gap(&w, &v) < 1e-12);
    }

    #[test]
    fn lifting_by_identity_changes_nothing(k in kind(), x in vec_in(3, 2.0), v in vec_in(3, 0.5)) {
        let map = make_builtin_map(k, 3).unwrap();
        let lifted = lift_map(map.clone(), Diffeo::identity(3)).unwrap();
        let (a, b) = map.apply(&x, &v).unwrap();
        let (c, d) = lifted.apply(&x, &v).unwrap();
        prop_assert!(max_gap(&a, &c) <= 1e-14);
        prop_assert!(max_gap(&b, &d) <= 1e-14);
    }

    #[test]
    fn lifting_composes(
        k in kind(),
        e1 in vec_in(9, 1.0), c1 in vec_in(3, 1.0),
        e2 in vec_in(9, 1.0), c2 in vec_in(3, 1.0),
        y in vec_in(3, 1.0), w in vec_in(3, 0.5),
    ) {
        let (phi, psi) = (affine_diffeo(&e1, &c1), affine_diffeo(&e2, &c2));
        let base = make_builtin_map(k, 3).unwrap();
        let twice = lift_map(lift_map(base.clone(), phi.clone()).unwrap(), psi.clone()).unwrap();
        let once = lift_map(base, phi.then(&psi).unwrap()).unwrap();
        let (a, b) = twice.apply(&y, &w).unwrap();
        let (c, d) = once.apply(&y, &w).unwrap();
        prop_assert!(max_gap(&a, &c) < 1e-10);
        prop_assert!(max_gap(&b, &d) < 1e-10);
    }

    #[test]
    fn lifted_map_keeps_the_zero_section(k in kind(), e in vec_in(9, 1.0), c in vec_in(3, 1.0), y in vec_in(3, 1.0)) {
        let lifted = lift_map(make_builtin_map(k, 3).unwrap(), affine_diffeo(&e, &c)).unwrap();
        let (a, b) = lifted.apply(&y, &[0.0; 3]).unwrap();
        prop_assert!(max_gap(&a, &y) < 1e-12);
        prop_assert!(max_gap(&b, &y) < 1e-12);
    }

    #[test]
    fn bracket_is_antisymmetric(p in vec_in(4, 1.0), j in 0usize..2) {
        let sys = unicycle_preset().system;
        let f: FieldRef = Arc::new(UnicycleDrift);
        let g = sys.input_field(j);
        let fg = lie_bracket(&f, &g, &p).unwrap();
        let gf = lie_bracket(&g, &f, &p).unwrap();
        prop_assert!(fg.iter().zip(&gf).all(|(a, b)| (a + b).abs() < 1e-12));
        let ff = lie_bracket(&f, &f, &p).unwrap();
        prop_assert!(ff.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn feedback_is_affine_in_v(xi in vec_in(5, 0.4), v1 in vec_in(2, 3.0), v2 in vec_in(2, 3.0)) {
        let lin = unicycle_preset().lin;
        let at = |v: &[f64]| lin.feedback(&xi, v).unwrap();
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let (a, b, c, o) = (at(&sum), at(&v1), at(&v2), at(&[0.0, 0.0]));
        for i in 0..2 {
            prop_assert!((a[i] - b[i] - c[i] + o[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn phi_round_trips_on_the_chart(xi in vec_in(5, 0.4)) {
        let lin = unicycle_preset().lin;
        let back = lin.diffeo().invert(&lin.transform(&xi)).unwrap();
        prop_assert!(max_gap(&back, &xi) < 1e-12);
    }

    #[test]
    fn lifted_step_is_linear_in_z(xi in vec_in(5, 0.4), v in vec_in(2, 2.0)) {
        let p = unicycle_preset();
        let h = 0.01;
        let scheme = DiscreteScheme::lifted(
            make_builtin_map(MapKind::ExplicitEuler, 5).unwrap(),
            p.extended.clone(),
            p.lin.clone(),
            h,
        )
        .unwrap();
        let mu = p.lin.feedback(&xi, &v).unwrap();
        let next = p.lin.transform(&scheme.step(&xi, &mu).unwrap());
        let z = p.lin.transform(&xi);
        let expected = [z[0] + h * z[1], z[1] + h * z[2], z[2] + h * v[0], z[3] + h * z[4], z[4] + h * v[1]];
        prop_assert!(max_gap(&next, &expected) < 1e-12);
    }
}

#[test]
fn local_error_is_second_order() {
    let p = unicycle_preset();
    let mu = [0.3, -0.2];
    let mut ratios = Vec::new();
    for k in [MapKind::ExplicitEuler, MapKind::ImplicitEuler, MapKind::Midpoint] {
        for lifted in [false, true] {
            let gap = |h: f64| {
                let map = make_builtin_map(k, 5).unwrap();
                let scheme = if lifted {
                    DiscreteScheme::lifted(map, p.extended.clone(), p.lin.clone(), h)
                } else {
                    DiscreteScheme::implicit(map, p.extended.clone(), h)
                }
                .unwrap();
                let next = scheme.step(&p.xi0, &mu).unwrap();
                let vel = p.extended.velocity(&p.xi0, &mu);
                let euler: Vec<f64> = p.xi0.iter().zip(&vel).map(|(x, v)| x + h * v).collect();
                max_gap(&next, &euler)
            };
            for h in [0.02, 0.01, 0.005] {
                ratios.push(gap(h) / (h * h));
            }
        }
    }
    assert!(ratios.iter().all(|r| *r < 10.0), "{ratios:?}");
}
