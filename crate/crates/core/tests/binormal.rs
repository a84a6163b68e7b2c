use filament_core::binormal::{evolve_geometric, weak_residual, BumpTest, FlowTrajectory, SynthesisConfig, ZeroTest};
use filament_core::geometry::{axis_rotation, Grid1D, SampledCurve, Vec3};
use filament_core::selfsimilar::{build_profile, evaluate_selfsimilar};

fn selfsimilar_datum(a: f64, l: f64, h: f64) -> (SampledCurve, filament_core::selfsimilar::SelfSimilarProfile) {
    let prof = build_profile(a, 60.0, 0.005).unwrap();
    let g = Grid1D::symmetric(l, h).unwrap();
    let pts = g.xs().iter().map(|&x| evaluate_selfsimilar(&prof, 1.0, x).unwrap()).collect();
    (SampledCurve { grid: g, points: pts }, prof)
}

#[test]
fn geometric_flow_follows_the_selfsimilar_solution() {
    let (c0, prof) = selfsimilar_datum(0.25, 20.0, 0.05);
    let run = evolve_geometric(&c0, 1.0, 0.25, 0.05 * 0.05 / 4.0, &[0.5]).unwrap();
    assert_eq!(run.trajectory.times(), vec![1.0, 0.5, 0.25]);
    run.trajectory.validate().unwrap();
    let mut worst: f64 = 0.0;
    for s in &run.trajectory.slices {
        for (i, x) in c0.grid.xs().iter().enumerate() {
            if x.abs() <= 5.0 {
                worst = worst.max((s.curve.points[i] - evaluate_selfsimilar(&prof, s.t, *x).unwrap()).norm());
            }
        }
    }
    assert!(worst < 1e-2, "self-similar error {worst:.3e}");
}

// A helix of radius r and pitch p (curvature k^2 r, torsion k^2 p) rotates
// rigidly about its axis at rate p k^3 and translates along it at speed r^2 k^3.
#[test]
fn geometric_flow_moves_a_helix_rigidly() {
    let (r, p) = (1.0, 0.5);
    let k = 1.0 / (r * r + p * p as f64).sqrt();
    let helix = |x: f64| Vec3::new(r * (k * x).cos(), r * (k * x).sin(), p * k * x);
    let g = Grid1D::symmetric(30.0, 0.05).unwrap();
    let c0 = SampledCurve { grid: g, points: g.xs().iter().map(|&x| helix(x)).collect() };
    let run = evolve_geometric(&c0, 0.0, 1.0, 6e-4, &[]).unwrap();
    let s = run.trajectory.slices.last().unwrap();
    let rot = axis_rotation(&Vec3::z(), -p * k * k * k);
    let mut worst: f64 = 0.0;
    for (i, x) in g.xs().iter().enumerate() {
        if x.abs() <= 15.0 {
            let exact = rot * helix(*x) + Vec3::z() * (r * r * k * k * k);
            worst = worst.max((s.curve.points[i] - exact).norm());
        }
    }
    assert!(worst < 1e-3, "helix error {worst:.3e}");
}

#[test]
fn geometric_flow_rejects_unstable_steps() {
    let (c0, _) = selfsimilar_datum(0.25, 5.0, 0.05);
    assert!(evolve_geometric(&c0, 1.0, 0.5, 0.05 * 0.05, &[]).is_err());
    assert!(evolve_geometric(&c0, 1.0, 0.5, 0.0, &[]).is_err());
}

fn log_ladder(c0: &SampledCurve) -> FlowTrajectory {
    let times: Vec<f64> = (1..12).map(|k| 0.9 * 0.85f64.powi(k)).collect();
    let h = c0.grid.h();
    evolve_geometric(c0, 0.9, *times.last().unwrap(), h * h / 4.0, &times).unwrap().trajectory
}

#[test]
fn weak_forms_vanish_on_the_flow_and_see_a_wrong_clock() {
    let prof = build_profile(0.25, 60.0, 0.005).unwrap();
    let g = Grid1D::symmetric(8.0, 0.05).unwrap();
    let c0 = SampledCurve { grid: g, points: g.xs().iter().map(|&x| evaluate_selfsimilar(&prof, 0.9, x).unwrap()).collect() };
    let traj = log_ladder(&c0);
    let bump = BumpTest { t_c: 0.5, t_w: 0.25, x_c: 0.3, x_w: 2.0, slope: 0.4 };
    let good = weak_residual(&[&traj], &bump).unwrap();
    assert!(good.relative() < 1e-4, "{good:?}");
    // Relabel the times: the curves are unchanged but no longer solve the flow.
    let mut fast = traj.clone();
    fast.slices.iter_mut().for_each(|s| s.t *= 0.9);
    let bad = weak_residual(&[&fast], &bump).unwrap();
    assert!(bad.relative() > 100.0 * good.relative(), "{bad:?} vs {good:?}");

    let zero = weak_residual(&[&traj], &ZeroTest).unwrap();
    assert_eq!((zero.binormal, zero.tangent, zero.relative()), (0.0, 0.0, 0.0));
    let wide = BumpTest { x_w: 20.0, ..bump };
    assert!(weak_residual(&[&traj], &wide).is_err());
    let negative = BumpTest { t_c: -0.5, ..bump };
    assert!(weak_residual(&[&traj], &negative).is_err());
}

#[test]
fn synthesis_config_is_validated() {
    let base = SynthesisConfig::default();
    assert_eq!(base.rungs(), 56);
    assert!((base.rung_time(base.rungs()) - base.t_min).abs() < 1e-15);
    assert_eq!(base.slice_half_width(1.0), base.x_far);
    let phi = filament_core::nls::gaussian(&Grid1D::periodic(-256.0, 512.0, 1024).unwrap(), 1e-3, 2.0).unwrap();
    for bad in [
        SynthesisConfig { t_far: 65000.0, ..base.clone() },
        SynthesisConfig { t_min: 0.5, ..base.clone() },
        SynthesisConfig { h_far: 0.024, ..base.clone() },
        SynthesisConfig { a: 0.0, ..base.clone() },
    ] {
        assert!(filament_core::binormal::evolve_synthesis(&phi, &bad).is_err());
    }
}
