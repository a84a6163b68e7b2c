use filament_core::geometry::Grid1D;
use filament_core::linear_weighted::{
    asymptotic_check, commutator_check, diagonalize, evolve_linear, evolve_linear_with, hdot_norm, l2_on_grid,
    phase_data, phase_data_closed, psi_tail_closed, psi_tail_quadrature, second_order_residual, symmetric_log_grid,
    undiagonalize, zero_mode_obstruction, GaussianState, ModeState, ObstructionOptions, DEFAULT_RESOLUTION,
};
use filament_core::nls::SpectralField;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use std::f64::consts::PI;

fn what(x: f64) -> C {
    C::new(1.0, 0.5 * x) * (-x * x).exp()
}

fn dwhat(x: f64) -> C {
    (C::new(0.0, 0.5) - C::new(1.0, 0.5 * x) * (2.0 * x)) * (-x * x).exp()
}

#[test]
fn free_evolution_at_a_zero() {
    let g = Grid1D::periodic(-32.0, 64.0, 512).unwrap();
    let w0 = SpectralField::from_fn(g, 1.0, |x| C::new((-x * x).exp(), 0.0)).unwrap();
    let w = evolve_linear(&w0, 0.0, 1.0, 1.5).unwrap();
    let d = C::new(1.0, 2.0);
    for (z, x) in w.values.iter().zip(g.xs()) {
        assert!((z - (-x * x / d).exp() / d.sqrt()).norm() < 1e-12, "x = {x}");
    }
    // The mode march reproduces the exact phases as a -> 0.
    let marched = evolve_linear_with(&w0, 1e-9, 1.0, 1.5, 0.005).unwrap();
    let err = marched.values.iter().zip(&w.values).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(err < 1e-7, "{err:.3e}");
    assert!(evolve_linear(&w0, 0.5, 0.0, 1.0).is_err());
}

#[test]
fn phase_tail_closed_form_matches_quadrature() {
    for a in [0.1, 0.5, 1.0] {
        for tau in [4.0 * a * a, 1.0, 10.0, 1e3] {
            if tau <= a * a {
                continue;
            }
            let (c, q) = (psi_tail_closed(tau, a), psi_tail_quadrature(tau, a));
            assert!((c - q).abs() < 1e-9, "a = {a}, tau = {tau}: {c} vs {q}");
        }
    }
    let (p, c) = (phase_data(3.0, 0.5).unwrap(), phase_data_closed(3.0, 0.5).unwrap());
    assert!((p.psi - c.psi).abs() < 1e-9 && p.alpha == c.alpha);
    assert!(phase_data(0.2, 0.5).is_err());
}

#[test]
fn commutator_identity_holds_mode_by_mode() {
    let times: Vec<f64> = (0..=12).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    for xi in [1e-3, 0.05, 0.7, 3.0] {
        let s = ModeState::from_datum(xi, 1.0, what, dwhat);
        let r = commutator_check(&s, 0.5, &times, DEFAULT_RESOLUTION).max_residual();
        assert!(r < 1e-6, "xi = {xi}: {r:.3e}");
    }
}

#[test]
fn mode_solutions_satisfy_the_second_order_equation() {
    for xi in [0.3, 1.0, 2.0] {
        let s = ModeState::from_datum(xi, 1.0, what, dwhat);
        let r = second_order_residual(&s, 0.5, 2.0, 0.005);
        assert!(r < 1e-5, "xi = {xi}: {r:.3e}");
    }
}

#[test]
fn solutions_approach_their_asymptotic_profile_at_rate_one() {
    // The fitted exponent is pre-asymptotic and drifts with xi around 1.
    for xi in [0.1, 0.7, 2.6] {
        let r = asymptotic_check(what, 0.5, xi, 12, DEFAULT_RESOLUTION).unwrap();
        assert!((0.8..1.3).contains(&r.rate), "xi = {xi}: rate {}", r.rate);
        assert!(r.z_plus_error < 1e-5, "xi = {xi}: {:.3e}", r.z_plus_error);
        assert!(r.defect.last() < r.defect.first());
    }
    assert!(asymptotic_check(what, 0.5, 0.0, 12, DEFAULT_RESOLUTION).is_err());
}

#[test]
fn log_grid_quadrature() {
    let xi = symmetric_log_grid(1e-4, 10.0, 200);
    assert_eq!(xi.len() % 2, 0);
    // (1/2pi) int e^{-xi^2} = 1 / (2 sqrt(pi)).
    let f: Vec<C> = xi.iter().map(|x| C::new((-x * x / 2.0).exp(), 0.0)).collect();
    let l2 = l2_on_grid(&xi, &f);
    assert!((l2 * l2 - 0.5 / PI.sqrt()).abs() < 1e-4, "{l2}");
}

#[test]
fn zero_mode_separates_the_two_states() {
    let opts = ObstructionOptions { per_decade: 40, n_times: 7, ..Default::default() };
    let (nz, z) = (GaussianState { width: 1.0, odd: false }, GaussianState { width: 1.0, odd: true });
    let r = zero_mode_obstruction(&nz, &z, 0.5, 100.0, &opts).unwrap();
    assert!(r.ratio_zero <= 10.0, "{r:?}");
    assert!(r.ratio_nonzero > r.ratio_zero);
    // Lowering the cutoff grows the norm only when u+(0) != 0.
    assert!(r.cutoff_growth_nonzero > 2.0 && r.cutoff_growth_zero < 1.1, "{r:?}");
    assert!(r.fitted_c.is_finite() && r.hdot_sum_zero > 0.0);
    assert!(zero_mode_obstruction(&z, &nz, 0.5, 100.0, &opts).is_err());
    // The odd state has finite homogeneous H^-1 norm down to 0.
    let h1 = hdot_norm(&z, -1.0, 1e-6, 8.0);
    assert!((h1 - hdot_norm(&z, -1.0, 1e-4, 8.0)).abs() < 1e-3 * h1);
}

proptest! {
    #[test]
    fn diagonalization_round_trip(pr in -1.0..1.0f64, pi in -1.0..1.0f64, qr in -1.0..1.0f64, qi in -1.0..1.0f64,
                                  a in 0.05..1.0f64, f in 4.0..1e4f64) {
        let tau = f * a * a;
        let ph = phase_data_closed(tau, a).unwrap();
        let (p, q) = (C::new(pr, pi), C::new(qr, qi));
        let (y, z) = diagonalize(p, q, &ph, a).unwrap();
        let (p2, q2) = undiagonalize(y, z, &ph);
        prop_assert!((p2 - p).norm() < 1e-12 && (q2 - q).norm() < 1e-12);
        let low = phase_data_closed(2.0 * a * a, a).unwrap();
        prop_assert!(diagonalize(p, q, &low, a).is_err());
    }
}
