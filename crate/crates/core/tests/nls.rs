use filament_core::geometry::Grid1D;
use filament_core::nls::{
    energy, energy_rate, gaussian, gaussian_with_norm, ladder, step, wave_operator_approx, xgamma_norm, SpectralField,
    Stepper, WaveOperatorOptions,
};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use std::f64::consts::PI;

fn box64() -> Grid1D {
    Grid1D::periodic(-32.0, 64.0, 1024).unwrap()
}

#[test]
fn transform_of_a_gaussian() {
    let sigma = 1.5;
    let f = gaussian(&box64(), 1.0, sigma).unwrap();
    for (z, k) in f.transform().iter().zip(f.xi()) {
        let exact = sigma * (2.0 * PI).sqrt() * (-sigma * sigma * k * k / 2.0).exp();
        assert!((z - exact).norm() < 1e-12, "xi = {k}");
    }
    let back = SpectralField::from_transform(f.grid, &f.transform(), 1.0).unwrap();
    assert!(back.values.iter().zip(&f.values).all(|(a, b)| (a - b).norm() < 1e-13));
}

// e^{i t d_xx} e^{-x^2} = (1 + 4it)^{-1/2} exp(-x^2 / (1 + 4it)).
#[test]
fn free_propagation_matches_the_gaussian_solution() {
    let g = box64();
    let mut s = Stepper::new(&g).unwrap();
    let mut v: Vec<C> = g.xs().iter().map(|x| C::new((-x * x).exp(), 0.0)).collect();
    let t = 0.75;
    s.linear(&mut v, t);
    let d = C::new(1.0, 4.0 * t);
    for (z, x) in v.iter().zip(g.xs()) {
        let exact = (-x * x / d).exp() / d.sqrt();
        assert!((z - exact).norm() < 1e-12, "x = {x}");
    }
}

#[test]
fn constant_a_is_a_fixed_point() {
    let g = box64();
    let a = 0.7;
    let mut v = SpectralField::from_fn(g, 1.0, |_| C::new(a, 0.0)).unwrap();
    let mut t = 1.0;
    for _ in 0..20 {
        v = step(&v, t, 0.05, a).unwrap();
        t += 0.05;
    }
    assert!(v.values.iter().all(|z| (z - a).norm() < 1e-13));
    assert!(energy(&v, t, a).unwrap().abs() < 1e-20);
}

// dE/dt = int (|v|^2 - a^2)^2 / 4t^2 along solutions.
#[test]
fn energy_grows_at_the_predicted_rate() {
    let g = box64();
    let a = 0.5;
    let v0 = SpectralField::from_fn(g, 1.0, |x| C::new(a + 0.3 * (-x * x / 4.0).exp(), 0.1 * x * (-x * x / 4.0).exp()))
        .unwrap();
    let dt = 1e-4;
    let mut vals = v0.values.clone();
    let mut s = Stepper::new(&g).unwrap();
    let mut t = 1.0;
    let mut traj = vec![v0];
    for _ in 0..200 {
        s.step(&mut vals, t, dt, a).unwrap();
        t += dt;
        traj.push(SpectralField::new(g, vals.clone(), t).unwrap());
    }
    let (e0, e1) = (energy(&traj[0], 1.0, a).unwrap(), energy(&traj[200], t, a).unwrap());
    // Trapezoid in time over the rate.
    let integral: f64 = traj.windows(2).map(|w| 0.5 * dt * (energy_rate(&w[0], w[0].time, a) + energy_rate(&w[1], w[1].time, a))).sum();
    assert!(integral > 0.0);
    assert!(((e1 - e0) - integral).abs() < 1e-3 * integral, "{:.6e} vs {integral:.6e}", e1 - e0);
}

#[test]
fn ladder_lands_on_target() {
    let (n, r) = ladder(1024.0, 1.0, 2f64.powf(-1.0 / 8.0));
    assert_eq!(n, 80);
    assert!((1024.0 * r.powi(n as i32) - 1.0).abs() < 1e-10);
    let (n, r) = ladder(1000.0, 3.0, 0.95);
    assert!(r >= 0.95 && (1000.0 * r.powi(n as i32) - 3.0).abs() < 1e-9);
}

#[test]
fn gaussian_hits_its_norm() {
    let g = Grid1D::periodic(-128.0, 256.0, 1024).unwrap();
    let f = gaussian_with_norm(&g, 0.005, 2.0, 0.2).unwrap();
    assert!((xgamma_norm(&f, 0.2, 1.0).unwrap() - 0.005).abs() < 1e-15);
    assert!(xgamma_norm(&f, 0.3, 1.0).is_err());
}

#[test]
fn wave_operator_validates_its_inputs() {
    let g = Grid1D::periodic(-128.0, 256.0, 512).unwrap();
    let a = 0.5;
    let opts = WaveOperatorOptions::default();
    let phi = gaussian_with_norm(&g, 0.01 * a, 2.0, 0.2).unwrap();
    assert!(wave_operator_approx(&phi, a, 50.0, 1.0, &opts).is_err());
    let bad = WaveOperatorOptions { dt_ratio: 0.8, ..opts.clone() };
    assert!(wave_operator_approx(&phi, a, 128.0, 1.0, &bad).is_err());
    let big = gaussian_with_norm(&g, a, 2.0, 0.2).unwrap();
    assert!(wave_operator_approx(&big, a, 128.0, 1.0, &opts).is_err());
    let run = wave_operator_approx(&phi, a, 128.0, 1.0, &opts).unwrap();
    assert_eq!(run.u.time, 1.0);
    assert_eq!(run.input_norms.len(), 5);
    assert!(!run.flagged, "defect {:.3e}", run.defect);
}

#[test]
fn steps_must_keep_t_positive_and_small() {
    let v = gaussian(&box64(), 0.1, 1.0).unwrap();
    assert!(step(&v, 1.0, 0.2, 0.5).is_err());
    assert!(step(&v, 1.0, -1.5, 0.5).is_err());
    assert!(step(&v, 2.0, 0.1, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval_holds(c in prop::collection::vec(-1.0..1.0f64, 8), s in 0.5..3.0f64) {
        let f = SpectralField::from_fn(box64(), 1.0, |x| {
            let e = (-x * x / (s * s)).exp();
            C::new(c[0] + c[1] * x + c[2] * x * x, c[3] + c[4] * (c[5] * x).sin()) * e + C::new(c[6], c[7]) * (-x * x).exp()
        }).unwrap();
        prop_assert!(f.parseval_defect() < 1e-12);
    }

    #[test]
    fn splitting_conserves_mass(a in 0.1..1.0f64, eps in 0.0..0.5f64, t in 0.5..4.0f64, frac in -0.1..0.1f64) {
        let g = box64();
        let v = SpectralField::from_fn(g, t, |x| C::new(a + eps * (-x * x).exp(), eps * x * (-x * x).exp())).unwrap();
        let w = step(&v, t, frac * t, a).unwrap();
        let dev = |f: &SpectralField| {
            g.h() * f.values.iter().map(|z| (z - a).norm_sqr() + 2.0 * a * (z.re - a)).sum::<f64>()
        };
        // |v|^2 - a^2 = |v - a|^2 + 2a Re(v - a) is conserved in integral.
        prop_assert!((dev(&w) - dev(&v)).abs() < 1e-10);
    }
}
