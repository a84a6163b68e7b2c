use filament_core::geometry::Grid1D;
use filament_core::nls::{gaussian, SpectralField};
use filament_core::selfsimilar::{build_profile, default_half_width};
use filament_core::trace_series::{
    compare_routes, coupling_from_fplus, datum_from_coupling, fourier_at, fplus_from_nls_state, g_from_datum, h1_norm,
    htilde, nls_state_from_fplus, CornerData,
};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use std::f64::consts::PI;

fn small() -> Grid1D {
    Grid1D::periodic(-256.0, 512.0, 1024).unwrap()
}

fn corner(a: f64) -> CornerData {
    CornerData::from_profile(&build_profile(a, default_half_width(a), 0.005).unwrap())
}

#[test]
fn fourier_at_matches_the_fft_and_the_closed_form() {
    let sigma = 2.0;
    let f = gaussian(&small(), 0.3, sigma).unwrap();
    for (z, k) in f.transform().iter().zip(f.xi()).step_by(37) {
        assert!((fourier_at(&f, k) - z).norm() < 1e-12);
    }
    for xi in [0.0, 0.013, 0.31, -0.77, 1.9] {
        let exact = 0.3 * sigma * (2.0 * PI).sqrt() * (-sigma * sigma * xi * xi / 2.0).exp();
        assert!((fourier_at(&f, xi) - exact).norm() < 1e-12, "xi = {xi}");
    }
    let nyquist = PI / f.grid.h();
    assert_eq!(fourier_at(&f, 1.01 * nyquist), C::new(0.0, 0.0));
}

#[test]
fn htilde_reads_the_transform_at_half_x() {
    let f = gaussian(&small(), 0.1, 2.0).unwrap();
    let a = 0.5;
    assert!((htilde(0.0, &f, a) - C::new(0.0, 1.0) * fourier_at(&f, 0.0)).norm() < 1e-15);
    let x = 3.0f64;
    let want = C::new(0.0, 1.0) * fourier_at(&f, 1.5) * C::from_polar(1.0, -a * a * x.ln());
    assert!((htilde(x, &f, a) - want).norm() < 1e-15);
    assert!((htilde(-x, &f, a) - htilde(x, &f, a)).norm() < 1e-15);
}

#[test]
fn coupling_survives_the_datum_round_trip() {
    let a = 0.5;
    let cd = corner(a);
    let grid = Grid1D::symmetric(20.0, 0.01).unwrap();
    let fp = fplus_from_nls_state(&gaussian(&small(), 0.01, 2.0).unwrap()).unwrap();
    let c = coupling_from_fplus(fp.clone(), &cd, &grid);
    let (_, frame) = datum_from_coupling(&grid, |x| c.g_at(x), &cd).unwrap();
    let back = g_from_datum(&grid, &frame.t, &cd, &small()).unwrap();
    // Differencing loses accuracy next to 0, where g carries e^{-i a^2 log|x|}.
    let err = |far: bool| {
        back.g.iter().zip(&c.g).zip(grid.xs()).filter(|(_, x)| (x.abs() >= 0.1) == far).map(|((p, q), _)| (p - q).norm()).fold(0.0, f64::max)
    };
    assert!(err(true) < 1e-6, "g error {:.3e}", err(true));
    assert!(err(false) < 1e-3, "g error near 0 {:.3e}", err(false));
    // The rebuilt state reproduces f+ on the nonzero modes it can see.
    let (got, want) = (back.f_plus.transform(), fp.transform());
    for (k, xi) in fp.xi().iter().enumerate() {
        if (0.05..=5.0).contains(&xi.abs()) {
            assert!((got[k] - want[k]).norm() < 1e-5, "xi = {xi}: {} vs {}", got[k], want[k]);
        }
    }
}

#[test]
fn datum_with_the_wrong_corner_is_rejected() {
    let grid = Grid1D::symmetric(10.0, 0.01).unwrap();
    let fp = fplus_from_nls_state(&gaussian(&small(), 0.01, 2.0).unwrap()).unwrap();
    let c = coupling_from_fplus(fp, &corner(0.5), &grid);
    let (_, frame) = datum_from_coupling(&grid, |x| c.g_at(x), &corner(0.5)).unwrap();
    assert!(g_from_datum(&grid, &frame.t, &corner(0.8), &small()).is_err());
}

#[test]
fn three_routes_agree() {
    let a = 0.5;
    let fp = fplus_from_nls_state(&gaussian(&small(), 0.01, 2.0).unwrap()).unwrap();
    let cmp = compare_routes(&fp, &corner(a), &Grid1D::symmetric(20.0, 0.01).unwrap(), 8).unwrap();
    let ag = &cmp.agreement;
    assert!(ag.ode_vs_integral < 1e-5, "{ag:?}");
    assert!(ag.ode_vs_series < 1e-5 && ag.series_vs_integral < 1e-5, "{ag:?}");
    assert!(ag.corner_integral < 1e-3 && ag.orthonormality < 1e-8, "{ag:?}");
}

#[test]
fn h1_norm_of_a_gaussian() {
    // ||e^{-x^2/8}||^2 = 2 sqrt(pi), ||d/dx||^2 = sqrt(pi) / 4.
    let f = gaussian(&small(), 1.0, 2.0).unwrap();
    let exact = (2.0 * PI.sqrt() + PI.sqrt() / 4.0).sqrt();
    assert!((h1_norm(&f) - exact).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn state_to_fplus_round_trip(re in prop::collection::vec(-1.0..1.0f64, 4), s in 1.0..4.0f64) {
        let phi = SpectralField::from_fn(small(), 1.0, |x| {
            C::new(re[0] + re[1] * x, re[2] + re[3] * x * x) * (-x * x / (2.0 * s * s)).exp()
        }).unwrap();
        let back = nls_state_from_fplus(&fplus_from_nls_state(&phi).unwrap()).unwrap();
        let err = back.values.iter().zip(&phi.values).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        // The multiplier has modulus 1 / sqrt(4 pi).
        let f = fplus_from_nls_state(&phi).unwrap();
        prop_assert!((f.l2() * (4.0 * PI).sqrt() - phi.l2()).abs() < 1e-10 * phi.l2().max(1e-300));
    }
}
