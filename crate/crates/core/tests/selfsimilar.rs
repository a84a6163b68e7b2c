use filament_core::geometry::{differentiate, Vec3};
use filament_core::hasimoto::curvature_torsion;
use filament_core::selfsimilar::{
    build_profile, default_half_width, evaluate_selfsimilar, min_half_width, origin_trajectory, predicted_half_angle_sine,
    remainders,
};
use proptest::prelude::*;

#[test]
fn corner_angle_matches_closed_form() {
    for a in [0.1, 0.25, 0.5, 1.0, 1.5] {
        let p = build_profile(a, default_half_width(a), 0.005).unwrap();
        let e = (-std::f64::consts::PI * a * a / 2.0).exp();
        assert!(((p.corner_angle / 2.0).sin() - e).abs() < 1e-5, "a = {a}");
        assert!((p.a_plus[0] - e).abs() < 1e-5 && (p.a_minus[0] - e).abs() < 1e-5);
    }
}

#[test]
fn limits_are_mirror_images() {
    let p = build_profile(0.5, 40.0, 0.005).unwrap();
    let m = Vec3::new(p.a_plus.x, -p.a_plus.y, -p.a_plus.z);
    assert!((p.a_minus - m).norm() < 1e-6);
    assert!((p.a_plus.norm() - 1.0).abs() < 1e-9);
    for b in [&p.b_plus, &p.b_minus] {
        let (re, im) = (b.map(|z| z.re), b.map(|z| z.im));
        assert!((re.norm() - 1.0).abs() < 1e-12 && (im.norm() - 1.0).abs() < 1e-12 && re.dot(&im).abs() < 1e-12);
    }
}

// chi = sqrt(t) G(x / sqrt t) solves chi_t = chi_x ^ chi_xx exactly when
// (G - s G')/2 = G' ^ G''.
#[test]
fn profile_solves_the_profile_equation() {
    let a = 0.5;
    let p = build_profile(a, 40.0, 0.005).unwrap();
    let g = &p.profile.grid;
    let d1 = differentiate(g, &p.profile.points);
    let d2 = differentiate(g, &d1);
    let mut worst: f64 = 0.0;
    for (i, s) in g.xs().iter().enumerate() {
        if s.abs() > 10.0 {
            continue;
        }
        let lhs = (p.profile.points[i] - d1[i] * *s) * 0.5;
        worst = worst.max((lhs - d1[i].cross(&d2[i])).norm());
    }
    assert!(worst < 1e-6, "profile equation residual {worst:.3e}");
}

#[test]
fn curvature_is_a_and_torsion_is_half_s() {
    let a = 0.7;
    let p = build_profile(a, default_half_width(a), 0.005).unwrap();
    let (c, tau) = curvature_torsion(&p.profile).unwrap();
    for (i, s) in p.profile.grid.xs().iter().enumerate() {
        if s.abs() < 8.0 {
            assert!((c[i] - a).abs() < 1e-6, "curvature at s = {s}: {}", c[i]);
            assert!((tau[i] - s / 2.0).abs() < 1e-5, "torsion at s = {s}: {}", tau[i]);
        }
    }
}

#[test]
fn origin_moves_along_e3() {
    let a = 0.5;
    let p = build_profile(a, 40.0, 0.005).unwrap();
    for t in [0.25, 1.0, 4.0] {
        let chi0 = evaluate_selfsimilar(&p, t, 0.0).unwrap();
        let exact = origin_trajectory(a, t, None).unwrap();
        assert!((exact - Vec3::z() * (2.0 * a * t.sqrt())).norm() < 1e-15);
        // evaluate_selfsimilar interpolates linearly between the nodes at +-h/2.
        assert!((chi0 - exact).norm() < 2e-6 * t.sqrt(), "t = {t}: {chi0:?}");
    }
    assert!(origin_trajectory(a, -1.0, None).is_err());
    let rho = nalgebra::Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
    let neg = origin_trajectory(a, -4.0, Some(&rho)).unwrap();
    assert!((neg + Vec3::z() * 2.0).norm() < 1e-15);
}

#[test]
fn trace_at_zero_is_two_rays() {
    let p = build_profile(0.5, 60.0, 0.005).unwrap();
    assert_eq!(evaluate_selfsimilar(&p, 0.0, 2.0).unwrap(), p.a_plus * 2.0);
    assert_eq!(evaluate_selfsimilar(&p, 0.0, -3.0).unwrap(), p.a_minus * -3.0);
    // Approaching t = 0 at fixed x the curve tends to the rays at rate sqrt t.
    let d1 = (evaluate_selfsimilar(&p, 1e-2, 0.5).unwrap() - p.a_plus * 0.5).norm();
    let d2 = (evaluate_selfsimilar(&p, 1e-4, 0.5).unwrap() - p.a_plus * 0.5).norm();
    assert!((d1 / d2).log10() > 0.9, "{d1:.3e} {d2:.3e}");
    assert!(evaluate_selfsimilar(&p, 1e-4, 100.0).is_err());
}

#[test]
fn remainders_stay_bounded() {
    for a in [0.25, 0.5, 1.0] {
        let r = remainders(&build_profile(a, 40.0, 0.005).unwrap());
        assert!(r.bounded(), "a = {a}: {r:?}");
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(build_profile(0.0, 40.0, 0.005).is_err());
    assert!(build_profile(-0.5, 40.0, 0.005).is_err());
    assert!(build_profile(0.5, min_half_width(0.5) - 1.0, 0.005).is_err());
    assert!(build_profile(0.5, 40.0, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn half_angle_law_holds_across_a(a in 0.05..1.6f64) {
        let p = build_profile(a, default_half_width(a), 0.01).unwrap();
        prop_assert!(((p.corner_angle / 2.0).sin() - predicted_half_angle_sine(a)).abs() < 1e-3);
        prop_assert!(p.frame.max_defect() < 1e-9);
    }

    #[test]
    fn selfsimilar_scaling(t in 0.05..4.0f64, x in -3.0..3.0f64) {
        let p = build_profile(0.5, 40.0, 0.005).unwrap();
        let lhs = evaluate_selfsimilar(&p, t, x).unwrap();
        let rhs = evaluate_selfsimilar(&p, 1.0, x / t.sqrt()).unwrap() * t.sqrt();
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }
}
