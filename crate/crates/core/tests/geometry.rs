use filament_core::geometry::{
    align_points, axis_rotation, cumulative, curve_from_tangent, differentiate, frenet_integrate, interp, parallel_integrate,
    read_curve_csv, write_curve_csv, Frame, Grid1D, Layout, RigidMotion, Vec3,
};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn layouts_place_nodes_where_documented() {
    let g = Grid1D::new(-1.0, 1.0, 5, Layout::Nodal).unwrap();
    assert_eq!(g.xs(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    let g = Grid1D::new(-1.0, 1.0, 4, Layout::Staggered).unwrap();
    assert_eq!(g.xs(), vec![-0.75, -0.25, 0.25, 0.75]);
    assert_eq!(g.split(), Some(2));
    let g = Grid1D::periodic(-2.0, 4.0, 4).unwrap();
    assert_eq!(g.xs(), vec![-2.0, -1.0, 0.0, 1.0]);
    assert_eq!(g.h(), 1.0);
}

#[test]
fn symmetric_grid_straddles_zero() {
    let g = Grid1D::symmetric(3.0, 0.1).unwrap();
    assert_eq!(g.len(), 60);
    let k = g.split().unwrap();
    assert!(g.x(k - 1) < 0.0 && g.x(k) > 0.0);
    assert!((g.x(k) + g.x(k - 1)).abs() < 1e-14);
}

#[test]
fn from_nodes_rejects_uneven_spacing() {
    assert!(Grid1D::from_nodes(&[0.0, 1.0, 2.5, 3.0], Layout::Nodal).is_err());
    assert!(Grid1D::from_nodes(&[0.0, 1.0], Layout::Nodal).is_err());
}

#[test]
fn cumulative_integrates_cubics_exactly() {
    let g = Grid1D::symmetric(2.0, 0.05).unwrap();
    let f: Vec<f64> = g.xs().iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
    let c = cumulative(&g, &f, 0.0, 0.0);
    for (i, x) in g.xs().iter().enumerate() {
        let exact = x.powi(4) / 4.0 - x * x + x;
        assert!((c[i] - exact).abs() < 1e-12, "x = {x}: {} vs {exact}", c[i]);
    }
}

#[test]
fn differences_are_fourth_order() {
    let err = |h: f64| {
        let g = Grid1D::new(0.0, 3.0, (3.0 / h) as usize + 1, Layout::Nodal).unwrap();
        let f: Vec<f64> = g.xs().iter().map(|x| x.sin()).collect();
        let d = differentiate(&g, &f);
        g.xs().iter().zip(&d).map(|(x, d)| (d - x.cos()).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(0.02), err(0.01));
    let order = (e1 / e2).log2();
    assert!(order > 3.5, "observed order {order:.2} ({e1:.2e}, {e2:.2e})");
}

// Constant curvature and torsion: the Frenet frame rotates rigidly about the
// Darboux vector tau T + c b, so T(x) = Rot(w, |w| x) e1 from the canonical frame.
#[test]
fn frenet_helix_matches_darboux_rotation() {
    let (c, tau) = (0.8, 0.3);
    let g = Grid1D::symmetric(10.0, 0.01).unwrap();
    let n = g.len();
    let ff = frenet_integrate(&g, &vec![c; n], &vec![tau; n], &Frame::canonical(), 0.0).unwrap();
    let w = Vec3::new(tau, 0.0, c);
    let mut worst: f64 = 0.0;
    for (i, x) in g.xs().iter().enumerate() {
        let exact = axis_rotation(&w, w.norm() * x) * Vec3::x();
        worst = worst.max((ff.t[i] - exact).norm());
    }
    assert!(worst < 1e-8, "tangent error {worst:.3e}");
    assert!(ff.max_defect() < 1e-10);
}

#[test]
fn parallel_frame_of_helix_filament_reproduces_frenet_tangent() {
    let (c, tau) = (0.8, 0.3);
    let g = Grid1D::symmetric(10.0, 0.01).unwrap();
    let n = g.len();
    let psi: Vec<Complex64> = g.xs().iter().map(|x| Complex64::from_polar(c, tau * x)).collect();
    let par = parallel_integrate(&g, &psi, &Frame::canonical(), 0.0).unwrap();
    let fr = frenet_integrate(&g, &vec![c; n], &vec![tau; n], &Frame::canonical(), 0.0).unwrap();
    let d = par.t.iter().zip(&fr.t).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(d < 1e-8, "{d:.3e}");
}

#[test]
fn straight_tangent_gives_a_line_through_the_basepoint() {
    let g = Grid1D::symmetric(1.0, 0.1).unwrap();
    let t = vec![Vec3::y(); g.len()];
    let c = curve_from_tangent(&g, &t, Vec3::new(1.0, 2.0, 3.0), 0.0).unwrap();
    for (i, x) in g.xs().iter().enumerate() {
        assert!((c.points[i] - Vec3::new(1.0, 2.0 + x, 3.0)).norm() < 1e-14);
    }
    assert!(c.max_chord_defect() < 1e-12);
    assert!(curve_from_tangent(&g, &vec![Vec3::y() * 2.0; g.len()], Vec3::zeros(), 0.0).is_err());
}

#[test]
fn curve_csv_round_trip_is_lossless() {
    let g = Grid1D::symmetric(2.0, 0.25).unwrap();
    let n = g.len();
    let ff = frenet_integrate(&g, &vec![0.7; n], &vec![0.2; n], &Frame::canonical(), 0.0).unwrap();
    let curve = curve_from_tangent(&g, &ff.t, Vec3::zeros(), 0.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    write_curve_csv(&p, &curve, &ff).unwrap();
    let (c2, f2) = read_curve_csv(&p, g).unwrap();
    assert_eq!(c2, curve);
    assert_eq!(f2, ff);
    assert!(read_curve_csv(&p, Grid1D::symmetric(2.0, 0.5).unwrap()).is_err());
}

fn unit(v: [f64; 3]) -> Option<Vec3> {
    let v = Vec3::new(v[0], v[1], v[2]);
    (v.norm() > 0.1).then(|| v.normalize())
}

proptest! {
    #[test]
    fn from_nodes_recovers_the_grid(x0 in -50.0..50.0f64, w in 0.5..100.0f64, n in 3usize..400, k in 0usize..3) {
        let layout = [Layout::Nodal, Layout::Staggered, Layout::Periodic][k];
        let g = Grid1D::new(x0, x0 + w, n, layout).unwrap();
        let back = Grid1D::from_nodes(&g.xs(), layout).unwrap();
        prop_assert!(back.same_as(&g));
    }

    #[test]
    fn interpolation_is_exact_on_cubics(c in prop::array::uniform4(-3.0..3.0f64), x in -1.9..1.9f64) {
        let g = Grid1D::symmetric(2.0, 0.1).unwrap();
        let p = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let f: Vec<f64> = g.xs().iter().map(|x| p(*x)).collect();
        prop_assert!((interp(&g, &f, x, x > 0.0) - p(x)).abs() < 1e-11);
    }

    #[test]
    fn kabsch_recovers_a_rigid_motion(axis in prop::array::uniform3(-1.0..1.0f64), angle in -3.0..3.0f64,
                                     shift in prop::array::uniform3(-5.0..5.0f64)) {
        let Some(k) = unit(axis) else { return Ok(()) };
        let m = RigidMotion { rotation: axis_rotation(&k, angle), translation: Vec3::new(shift[0], shift[1], shift[2]) };
        let a: Vec<Vec3> = (0..20).map(|i| {
            let s = i as f64 * 0.3;
            Vec3::new(s.cos(), s.sin() * 2.0, 0.1 * s * s)
        }).collect();
        let b: Vec<Vec3> = a.iter().map(|p| m.apply(p)).collect();
        let al = align_points(&a, &b).unwrap();
        prop_assert!(al.max < 1e-10);
        prop_assert!((al.motion.rotation - m.rotation).abs().max() < 1e-10);
        prop_assert!(!al.degenerate);
    }

    #[test]
    fn rotations_are_proper(axis in prop::array::uniform3(-1.0..1.0f64), angle in -10.0..10.0f64) {
        let Some(k) = unit(axis) else { return Ok(()) };
        let m = RigidMotion::rotation(axis_rotation(&k, angle));
        prop_assert!(m.validate().is_ok());
        let back = m.compose(&m.inverse());
        prop_assert!((back.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn gram_schmidt_yields_an_orthonormal_frame(t in prop::array::uniform3(-1.0..1.0f64), r in prop::array::uniform3(-1.0..1.0f64),
                                               phi in -4.0..4.0f64) {
        let (Some(t), Some(r)) = (unit(t), unit(r)) else { return Ok(()) };
        if t.cross(&r).norm() < 0.1 { return Ok(()) }
        let f = Frame { t, n_re: r, n_im: t.cross(&r) }.gram_schmidt();
        prop_assert!(f.defect() < 1e-12);
        prop_assert!(f.is_right_handed());
        let g = f.rotate_normal(phi);
        prop_assert!(g.defect() < 1e-12 && g.is_right_handed());
    }
}
