use filament_core::continuation::{build_continuation, literal_rule_defect, reflect_coupling};
use filament_core::geometry::{Grid1D, Vec3};
use filament_core::nls::gaussian;
use filament_core::selfsimilar::{build_profile, default_half_width, origin_trajectory};
use filament_core::trace_series::{coupling_from_fplus, datum_from_coupling, fplus_from_nls_state, CornerData};
use proptest::prelude::*;

fn corner(a: f64) -> CornerData {
    CornerData::from_profile(&build_profile(a, default_half_width(a), 0.005).unwrap())
}

#[test]
fn reflection_identities_hold_across_a() {
    for a in [0.1, 0.3, 0.5, 0.8, 1.2] {
        let cd = corner(a);
        let fr = build_continuation(&cd).unwrap();
        let id = fr.identities(&cd);
        assert!(id.involution < 1e-12 && id.factorization < 1e-12, "a = {a}: {id:?}");
        assert!(id.a_swap < 1e-8 && id.b_phase < 1e-8, "a = {a}: {id:?}");
        assert!(id.b_orthogonality.iter().all(|d| d.abs() < 1e-8), "a = {a}: {id:?}");
        assert!((fr.phase.norm() - 1.0).abs() < 1e-12);
        assert!((fr.rho.rotation.determinant() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rho_swaps_the_rays_and_is_an_involution_on_corners() {
    let cd = corner(0.5);
    let fr = build_continuation(&cd).unwrap();
    let r = fr.reflected_corner(&cd);
    assert!((r.a_plus + cd.a_minus).norm() < 1e-8);
    let back = fr.reflected_corner(&r);
    assert!((back.a_plus - cd.a_plus).norm() < 1e-12 && (back.b_minus - cd.b_minus).norm() < 1e-12);
}

#[test]
fn a_straight_line_has_no_continuation_frame() {
    let mut cd = corner(0.5);
    cd.a_minus = -cd.a_plus;
    assert!(build_continuation(&cd).is_err());
}

#[test]
fn reflected_coupling_generates_the_reversed_datum() {
    let a = 0.5;
    let cd = corner(a);
    let fr = build_continuation(&cd).unwrap();
    let grid = Grid1D::symmetric(10.0, 0.01).unwrap();
    let small = Grid1D::periodic(-256.0, 512.0, 1024).unwrap();
    let fp = fplus_from_nls_state(&gaussian(&small, 0.01, 2.0).unwrap()).unwrap();
    let c = coupling_from_fplus(fp, &cd, &grid);
    let star = reflect_coupling(&c, &fr).unwrap();
    let (_, frame) = datum_from_coupling(&grid, |x| c.g_at(x), &cd).unwrap();
    // Drive the reflected frame with g*(x) = conj(c) conj(g(-x)) exactly.
    let cb = fr.phase.conj();
    let gs = |x: f64| cb * c.g_at(-x).conj();
    assert!(grid.xs().iter().zip(&star.g).all(|(x, g)| (gs(*x) - g).norm() < 1e-14));
    let (_, fstar) = datum_from_coupling(&grid, gs, &star.corner).unwrap();
    let n = grid.len();
    let worst = (0..n).map(|i| (fstar.t[i] + frame.t[n - 1 - i]).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "T*(x) + T(-x) = {worst:.3e}");
    // Reflecting twice restores g.
    let twice = reflect_coupling(&star, &fr).unwrap();
    assert!(twice.g.iter().zip(&c.g).all(|(p, q)| (p - q).norm() < 1e-14));
    // The branch-wise rotation rule does not keep N* normal to T*.
    assert!(literal_rule_defect(&frame, &fr) > 1e-4);
}

#[test]
fn negative_times_mirror_the_origin() {
    let a = 0.5;
    let fr = build_continuation(&corner(a)).unwrap();
    let rho = fr.rho.rotation;
    for t in [0.25, 1.0] {
        let plus = origin_trajectory(a, t, None).unwrap();
        let minus = origin_trajectory(a, -t, Some(&rho)).unwrap();
        assert!((minus - rho * plus).norm() < 1e-14);
    }
    assert!((origin_trajectory(a, 1.0, None).unwrap() - Vec3::z()).norm() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identities_hold_for_any_a(a in 0.05..1.5f64) {
        let cd = CornerData::from_profile(&build_profile(a, default_half_width(a), 0.01).unwrap());
        let id = build_continuation(&cd).unwrap().identities(&cd);
        prop_assert!(id.involution < 1e-12 && id.a_swap < 1e-8 && id.b_phase < 1e-8);
    }
}
