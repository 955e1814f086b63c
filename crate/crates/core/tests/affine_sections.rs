use nalgebra::DVector;
use proptest::prelude::*;
use semiflat_core::intmat::{self, IntMatrix};
use semiflat_core::section::{self, act_transition, subspace_gap, SectionError};
use semiflat_core::verify::load_config;
use semiflat_core::RationalAffineSubspace;

mod common;

fn int(rows: &[&[i64]]) -> IntMatrix {
    let n = rows[0].len();
    IntMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

fn col(c: &[i64]) -> IntMatrix {
    IntMatrix::from_column_slice(c.len(), 1, c)
}

fn v(s: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(s)
}

fn subspace(xi: IntMatrix, zeta: IntMatrix, a: &[f64]) -> RationalAffineSubspace {
    RationalAffineSubspace::new(xi, zeta, v(a)).unwrap()
}

#[test]
fn validate_examples() {
    let std = subspace(col(&[1, 0]), col(&[0, 1]), &[0.0, 0.5]);
    let c = std.validate().unwrap();
    assert!(c.valid);
    assert_eq!(c.det, 1);

    let dep = subspace(col(&[1, 0]), col(&[2, 0]), &[0.0, 0.0]);
    let c = dep.validate().unwrap();
    assert!(!c.valid);
    assert_eq!(c.det, 0);
    assert!(matches!(dep.dual_basis(), Err(SectionError::NotUnimodular(0))));

    let skew = subspace(col(&[2, 1]), col(&[1, 1]), &[0.0, 0.0]);
    assert_eq!(skew.validate().unwrap().det, 1);
}

#[test]
fn shape_mismatch_is_an_error() {
    let r = RationalAffineSubspace::new(col(&[1, 0, 0]), col(&[0, 1]), v(&[0.0, 0.0]));
    assert!(matches!(r, Err(SectionError::Shape(_))));
    let r = RationalAffineSubspace::new(col(&[1, 0]), int(&[&[0, 1], &[1, 0]]), v(&[0.0, 0.0]));
    assert!(matches!(r, Err(SectionError::Shape(_))));
}

#[test]
fn dual_basis_examples() {
    let std = subspace(col(&[1, 0]), col(&[0, 1]), &[0.0, 0.0]);
    let d = std.dual_basis().unwrap();
    assert_eq!(d.stacked(), IntMatrix::identity(2, 2));

    let skew = subspace(col(&[2, 1]), col(&[1, 1]), &[0.0, 0.0]);
    let d = skew.dual_basis().unwrap();
    assert_eq!(d.xi_dual, int(&[&[1, -1]]));
    assert_eq!(d.zeta_dual, int(&[&[-1, 2]]));
    assert_eq!(d.stacked() * skew.frame(), IntMatrix::identity(2, 2));
}

#[test]
fn three_dimensional_shear_frame_pairings() {
    let xi = int(&[&[1, 0], &[1, 1], &[0, 2]]);
    let zeta = col(&[0, 1, 3]);
    let s = subspace(xi, zeta, &[0.1, 0.2, 0.3]);
    assert_eq!(s.validate().unwrap().det.abs(), 1);
    let d = s.dual_basis().unwrap();
    assert_eq!(&d.xi_dual * &s.xi, IntMatrix::identity(2, 2));
    assert_eq!(&d.zeta_dual * &s.zeta, IntMatrix::identity(1, 1));
    assert_eq!(&d.xi_dual * &s.zeta, IntMatrix::zeros(2, 1));
    assert_eq!(&d.zeta_dual * &s.xi, IntMatrix::zeros(1, 2));
    assert_eq!(s.frame() * d.stacked(), IntMatrix::identity(3, 3));
}

#[test]
fn act_examples() {
    let s = subspace(col(&[1, 0]), col(&[0, 1]), &[0.0, 0.5]);
    let id = IntMatrix::identity(2, 2);
    assert_eq!(act_transition(&id, &v(&[0.0, 0.0]), &s).unwrap(), s);
    let moved = act_transition(&id, &v(&[1.0, 0.0]), &s).unwrap();
    assert_eq!(moved.offset.as_slice(), &[1.0, 0.5]);
    assert_eq!(moved.xi, s.xi);
    assert_eq!(moved.zeta, s.zeta);
    assert!(subspace_gap(&moved, &s).unwrap().equal(1e-12));
    assert!(matches!(
        s.act(&int(&[&[2, 0], &[0, 1]]), &v(&[0.0, 0.0])),
        Err(SectionError::TransitionNotUnimodular(2))
    ));
}

#[test]
fn section_on_two_chart_fixture() {
    let cfg = load_config(common::fixture_path("two_chart_glue")).unwrap();
    let rep = section::validate_constant_section(&cfg.atlas, &cfg.section).unwrap();
    assert!(rep.passed(section::OFFSET_TOL));
    assert_eq!(rep.transitions.len(), 1);
    assert!(rep.transitions[0].gap.offset_residual <= 1e-15);
}

#[test]
fn offset_mismatch_residual_is_distance_from_span() {
    let cfg = load_config(common::fixture_path("two_chart_broken")).unwrap();
    let rep = section::validate_constant_section(&cfg.atlas, &cfg.section).unwrap();
    assert!(!rep.passed(section::OFFSET_TOL));
    // a_V is off by (0, 0.1) and the span is the x̃1 axis
    assert!((rep.transitions[0].gap.offset_residual - 0.1).abs() < 1e-12);

    let line = subspace(col(&[1, 1]), col(&[0, 1]), &[0.0, 0.0]);
    let off = subspace(col(&[1, 1]), col(&[0, 1]), &[0.3, -0.1]);
    let gap = subspace_gap(&line, &off).unwrap();
    assert!(gap.same_linear_part);
    // distance of (0.3, −0.1) from ℝ(1,1) is |0.3 + 0.1| / √2
    assert!((gap.offset_residual - 0.4 / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn single_chart_section_is_vacuously_valid() {
    let cfg = load_config(common::fixture_path("lyz_semiflat")).unwrap();
    let rep = section::validate_constant_section(&cfg.atlas, &cfg.section).unwrap();
    assert!(rep.transitions.is_empty());
    assert!(rep.passed(section::OFFSET_TOL));
}

fn elementary(m: usize, i: usize, j: usize, s: i64) -> IntMatrix {
    let mut e = IntMatrix::identity(m, m);
    e[(i, j)] = s;
    e
}

fn unimodular3() -> impl Strategy<Value = IntMatrix> {
    prop::collection::vec((0usize..3, 0usize..3, -2i64..=2), 1..5).prop_map(|ops| {
        ops.into_iter()
            .filter(|(i, j, _)| i != j)
            .fold(IntMatrix::identity(3, 3), |acc, (i, j, s)| acc * elementary(3, i, j, s))
    })
}

fn valid_subspace() -> impl Strategy<Value = RationalAffineSubspace> {
    (unimodular3(), 0usize..=3, prop::array::uniform3(-1.0f64..1.0)).prop_map(|(f, k, a)| {
        RationalAffineSubspace::new(f.columns(0, k).into_owned(), f.columns(k, 3 - k).into_owned(), v(&a)).unwrap()
    })
}

proptest! {
    #[test]
    fn group_law(
        g1 in unimodular3(), g2 in unimodular3(),
        b1 in prop::array::uniform3(-1.0f64..1.0), b2 in prop::array::uniform3(-1.0f64..1.0),
        s in valid_subspace(),
    ) {
        let (b1, b2) = (v(&b1), v(&b2));
        let lhs = act_transition(&g1, &b1, &act_transition(&g2, &b2, &s).unwrap()).unwrap();
        // (g1, b1)(g2, b2) = (g1 g2, g1 b2 + b1)
        let rhs = act_transition(&(&g1 * &g2), &(intmat::mul_vec(&g1, &b2) + &b1), &s).unwrap();
        prop_assert_eq!(&lhs.xi, &rhs.xi);
        prop_assert_eq!(&lhs.zeta, &rhs.zeta);
        prop_assert!(subspace_gap(&lhs, &rhs).unwrap().equal(1e-12));
    }

    #[test]
    fn action_preserves_validity(g in unimodular3(), b in prop::array::uniform3(-1.0f64..1.0), s in valid_subspace()) {
        let moved = act_transition(&g, &v(&b), &s).unwrap();
        prop_assert!(moved.validate().unwrap().valid);
        prop_assert_eq!(moved.k(), s.k());
    }

    #[test]
    fn dual_of_dual_recovers_frame(s in valid_subspace()) {
        let d = s.dual_basis().unwrap();
        let back = intmat::inverse_unimodular(&d.stacked()).unwrap();
        prop_assert_eq!(back, s.frame());
        prop_assert_eq!(&d.xi_dual * &s.xi, IntMatrix::identity(s.k(), s.k()));
    }
}
