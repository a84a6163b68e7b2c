use filament_core::geometry::{Frame, Grid1D, Layout, Vec3};
use filament_core::hasimoto::{
    curvature_torsion, filament_function, inverse_pseudo_conformal, nls_residual, parallel_filament, pseudo_conformal,
    reconstruct_curve, tangent_of, FieldKind, FilamentField,
};
use num_complex::Complex64 as C;
use proptest::prelude::*;

#[test]
fn helix_filament_function_is_a_plane_wave() {
    let g = Grid1D::symmetric(5.0, 0.01).unwrap();
    let n = g.len();
    let psi = filament_function(&g, &vec![0.6; n], &vec![0.4; n], 1.0).unwrap();
    for (i, x) in g.xs().iter().enumerate() {
        assert!((psi.values[i] - C::from_polar(0.6, 0.4 * x)).norm() < 1e-13);
    }
    assert!(filament_function(&g, &vec![-0.1; n], &vec![0.4; n], 1.0).is_err());
}

// psi = c e^{i(kx - wt)} solves i psi_t + psi_xx + psi (|psi|^2 - A)/2 = 0
// when w = k^2 - (c^2 - A)/2.
#[test]
fn residual_vanishes_on_a_plane_wave_and_sees_a_wrong_frequency() {
    let (c, k, big_a) = (0.8, 1.3, 0.2);
    let g = Grid1D::new(-3.0, 3.0, 6001, Layout::Nodal).unwrap();
    let dt = 1e-3;
    let slices = |w: f64| -> Vec<FilamentField> {
        (0..3)
            .map(|j| {
                let t = 1.0 + j as f64 * dt;
                FilamentField::from_fn(g, t, FieldKind::Psi, |x| C::from_polar(c, k * x - w * t))
            })
            .collect()
    };
    let w = k * k - 0.5 * (c * c - big_a);
    let sup = |s: &[FilamentField]| nls_residual(s, |_| big_a).unwrap()[0].max_abs();
    assert!(sup(&slices(w)) < 1e-5, "{:.3e}", sup(&slices(w)));
    let off = sup(&slices(w + 0.1));
    assert!((off - 0.1 * c).abs() < 1e-4, "{off:.3e}");
}

#[test]
fn selfsimilar_filament_solves_the_singular_equation() {
    let a = 0.5;
    let g = Grid1D::new(-2.0, 2.0, 4001, Layout::Nodal).unwrap();
    let h = 1e-3;
    let slices: Vec<FilamentField> = [1.0 - h, 1.0, 1.0 + h]
        .iter()
        .map(|&t: &f64| {
            let c = vec![a / t.sqrt(); g.len()];
            let tau: Vec<f64> = g.xs().iter().map(|x| x / (2.0 * t)).collect();
            filament_function(&g, &c, &tau, t).unwrap()
        })
        .collect();
    let r = nls_residual(&slices, |t| a * a / t).unwrap();
    assert!(r[0].max_abs() < 1e-4);
    // Without the a^2/t term the residual is (a^2/2t) psi.
    let r0 = nls_residual(&slices, |_| 0.0).unwrap();
    assert!((r0[0].max_abs() - a * a * a / 2.0).abs() < 1e-4);
}

#[test]
fn residual_checks_its_inputs() {
    let g = Grid1D::symmetric(1.0, 0.1).unwrap();
    let f = |t: f64| FilamentField::from_fn(g, t, FieldKind::Psi, |_| C::new(1.0, 0.0));
    assert!(nls_residual(&[f(1.0), f(1.1)], |_| 0.0).is_err());
    assert!(nls_residual(&[f(1.0), f(1.1), f(1.3)], |_| 0.0).is_err());
    assert!(nls_residual(&[f(1.0), f(1.0), f(1.0)], |_| 0.0).is_err());
}

#[test]
fn pseudo_conformal_round_trip() {
    let y = Grid1D::new(-8.0, 8.0, 1601, Layout::Nodal).unwrap();
    let v = FilamentField::from_fn(y, 2.0, FieldKind::V, |y| C::new((-y * y).exp(), 0.3 * y * (-y * y).exp()));
    let t = 0.5;
    let x = Grid1D::new(-3.0, 3.0, 601, Layout::Nodal).unwrap();
    let psi = pseudo_conformal(&v, t, &x).unwrap();
    let back = inverse_pseudo_conformal(&psi, &Grid1D::new(-5.0, 5.0, 101, Layout::Nodal).unwrap()).unwrap();
    assert_eq!(back.time, 2.0);
    for (i, yy) in back.grid.xs().iter().enumerate() {
        assert!((back.values[i] - v.at(*yy)).norm() < 1e-6, "y = {yy}");
    }
    assert!(pseudo_conformal(&v, 1.0, &x).is_err());
    assert!(pseudo_conformal(&v, 0.5, &Grid1D::new(-5.0, 5.0, 11, Layout::Nodal).unwrap()).is_err());
}

#[test]
fn reconstruction_recovers_helix_geometry() {
    let (c, tau) = (0.5, 0.25);
    let g = Grid1D::symmetric(12.0, 0.01).unwrap();
    let n = g.len();
    let psi = filament_function(&g, &vec![c; n], &vec![tau; n], 1.0).unwrap();
    let (curve, frame) = reconstruct_curve(&psi, &Frame::canonical(), Vec3::zeros(), 0.0).unwrap();
    assert!(frame.max_defect() < 1e-10);
    let (k, t) = curvature_torsion(&curve).unwrap();
    for (i, x) in g.xs().iter().enumerate() {
        if x.abs() < 10.0 {
            assert!((k[i] - c).abs() < 1e-7 && (t[i] - tau).abs() < 1e-5, "x = {x}: {} {}", k[i], t[i]);
        }
    }
    // Back to the filament function through the parallel frame.
    let tt = tangent_of(&curve);
    let (psi2, _) = parallel_filament(&g, &tt, (Vec3::y(), Vec3::z()), 0.0).unwrap();
    for (i, x) in g.xs().iter().enumerate() {
        if x.abs() < 10.0 {
            assert!((psi2[i] - psi.values[i]).norm() < 1e-6, "x = {x}");
        }
    }
}

#[test]
fn csv_round_trip() {
    let g = Grid1D::symmetric(1.0, 0.1).unwrap();
    let f = FilamentField::from_fn(g, 1.0, FieldKind::U, |x| C::new(x.sin(), x.cos() / 3.0));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    f.write_csv(&p).unwrap();
    assert_eq!(FilamentField::read_csv(&p, g, 1.0, FieldKind::U).unwrap(), f);
}

proptest! {
    #[test]
    fn pseudo_conformal_scales_the_modulus(t in 0.2..3.0f64, x in -2.0..2.0f64) {
        let y = Grid1D::new(-12.0, 12.0, 2401, Layout::Nodal).unwrap();
        let v = FilamentField::from_fn(y, 1.0 / t, FieldKind::V, |y| C::new(1.0 + 0.5 * (y / 3.0).sin(), 0.2 * y.cos()));
        let xg = Grid1D::new(-2.0, 2.0, 401, Layout::Nodal).unwrap();
        let psi = pseudo_conformal(&v, t, &xg).unwrap();
        prop_assert!((psi.at(x).norm() - v.at(x / t).norm() / t.sqrt()).abs() < 1e-6);
    }
}
