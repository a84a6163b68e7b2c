use std::path::{Path, PathBuf};

use filament_core::binormal::{
    evolve_geometric, evolve_synthesis, far_field_check, rate_report, trace_at_zero, weak_residual, BumpTest, FlowTrajectory,
    Slice, SynthesisConfig, SynthesisRun, TraceAtZero,
};
use filament_core::continuation::{build_continuation, extend_negative, literal_rule_defect, reflect_coupling};
use filament_core::geometry::{
    curve_from_tangent, read_curve_csv, write_curve_csv, FrameField, Grid1D, Layout, SampledCurve, Vec3, CURVE_COLUMNS,
};
use filament_core::io::{emit_plot_data, read_csv, read_json, write_csv, write_json, RunConfig};
use filament_core::linear_weighted::{
    asymptotic_check, commutator_check, zero_mode_obstruction, AsymptoticState, GaussianState, ModeState, ObstructionOptions,
    DEFAULT_RESOLUTION,
};
use filament_core::nls::{energy, gaussian_with_norm, norm_bundle, wave_operator_approx_with, SpectralField, WaveOperatorOptions};
use filament_core::selfsimilar::{build_profile, default_half_width, evaluate_selfsimilar, predicted_half_angle_sine, remainders};
use filament_core::trace_series::{
    compare_routes, coupling_from_fplus, datum_from_coupling, fplus_from_nls_state, g_from_datum, h1_norm, nls_state_from_fplus,
    remainder_audit, CornerData,
};
use filament_core::verify::{all_ids, default_perturbation, run_suite, Check, CRITERIA};
use filament_core::{Error, Result};
use num_complex::Complex64;
use serde_json::{json, Value};

type C = Complex64;

pub struct Outcome {
    pub summary: Value,
    /// A verified claim did not hold.
    pub failed: bool,
}

fn ok(summary: Value) -> Result<Outcome> {
    Ok(Outcome { summary, failed: false })
}

const STATE_COLUMNS: [&str; 3] = ["x", "Re", "Im"];

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let allowed: &[&str] = match cfg.command.as_str() {
        "selfsimilar" => &[],
        "evolve" => &["route", "perturbation", "t_end", "nodes"],
        "trace" => &["datum", "n_max", "method"],
        "continue" => &["positive_run"],
        "nls" => &["t_far", "t_target", "dt_ratio", "fplus", "nodes"],
        "linear-j" => &["uplus", "xi_min", "xi_max", "t_max"],
        _ => &["suite", "only"],
    };
    if let Some(k) = cfg.extra.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Invalid(format!("unknown option {k:?} for {}", cfg.command)));
    }
    std::fs::create_dir_all(&cfg.out)?;
    match cfg.command.as_str() {
        "selfsimilar" => selfsimilar(cfg),
        "evolve" => evolve(cfg),
        "trace" => trace(cfg),
        "continue" => continue_run(cfg),
        "nls" => nls(cfg),
        "linear-j" => linear_j(cfg),
        _ => verify(cfg),
    }
}

fn cvec(v: &filament_core::geometry::CVec3) -> Value {
    json!(v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
}

fn vec3(v: &Vec3) -> Value {
    json!([v.x, v.y, v.z])
}

fn checks_json(checks: &[Check]) -> Value {
    json!(checks)
}

fn read_state(path: &Path) -> Result<SpectralField> {
    let rows = read_csv(path, &STATE_COLUMNS)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let grid = Grid1D::from_nodes(&xs, Layout::Periodic)?;
    SpectralField::new(grid, rows.iter().map(|r| C::new(r[1], r[2])).collect(), 1.0)
}

fn write_state(path: &Path, f: &SpectralField) -> Result<()> {
    let xs = f.grid.xs();
    write_csv(path, &STATE_COLUMNS, xs.iter().zip(&f.values).map(|(x, z)| vec![*x, z.re, z.im]))
}

/// Periodic grid of `nodes` nodes at spacing h, centred on 0.
fn centred(nodes: usize, h: f64) -> Result<Grid1D> {
    Grid1D::periodic(-(nodes as f64) * h / 2.0, nodes as f64 * h, nodes)
}

fn write_slice(path: &Path, s: &Slice) -> Result<()> {
    write_curve_csv(path, &s.curve, &s.frame)
}

/// Slices at t = +-2^-k, written as `{prefix}_{k:02}.csv`; returns (k, t, file).
fn write_octaves(dir: &Path, prefix: &str, traj: &FlowTrajectory) -> Result<Vec<(i32, f64, String)>> {
    let mut index = Vec::new();
    for s in &traj.slices {
        let l = s.t.abs().log2();
        if (l - l.round()).abs() > 1e-9 {
            continue;
        }
        let k = -l.round() as i32;
        let name = format!("{prefix}_{k:02}.csv");
        write_slice(&dir.join(&name), s)?;
        index.push((k, s.t, name));
    }
    Ok(index)
}

fn write_trace(path: &Path, tr: &TraceAtZero) -> Result<()> {
    write_curve_csv(path, &tr.curve, &tr.frame)
}

fn write_frame(path: &Path, frame: &FrameField) -> Result<()> {
    let anchor = if frame.grid.split().is_some() { 0.0 } else { frame.grid.first() };
    let curve = curve_from_tangent(&frame.grid, &frame.t, Vec3::zeros(), anchor)?;
    write_curve_csv(path, &curve, frame)
}

// ---------------------------------------------------------------------------

fn selfsimilar(cfg: &RunConfig) -> Result<Outcome> {
    let a = cfg.a;
    let p = build_profile(a, cfg.half_width, cfg.h)?;
    let out = &cfg.out;
    write_curve_csv(&out.join("profile.csv"), &p.profile, &p.frame)?;

    let sine = (p.corner_angle / 2.0).sin();
    let e = predicted_half_angle_sine(a);
    let (bp, bm) = (p.b_plus_raw.raw, p.b_minus_raw.raw);
    let pattern = (bp[0] + bm[0]).norm().max((bp[1] - bm[1]).norm()).max((bp[2] - bm[2]).norm());
    let r = remainders(&p);
    let mut checks = vec![
        Check::at_most("|sin(theta/2) - exp(-pi a^2/2)|", (sine - e).abs(), 1e-3),
        Check::at_most("|A+_1 - exp(-pi a^2/2)|", (p.a_plus[0] - e).abs(), 1e-3),
        Check::at_most("|A-_1 - exp(-pi a^2/2)|", (p.a_minus[0] - e).abs(), 1e-3),
        Check::at_most("B sign pattern defect", pattern, 1e-2),
    ];
    for (name, (inner, outer)) in [("tangent", r.tangent), ("position", r.position), ("normal", r.normal)] {
        checks.push(Check::at_most(format!("{name} remainder outer / inner"), outer / inner, 1.5));
    }
    let constants = json!({
        "a": a,
        "half_width": p.profile.grid.last(),
        "h": p.profile.grid.h(),
        "a_plus": vec3(&p.a_plus),
        "a_minus": vec3(&p.a_minus),
        "b_plus": cvec(&p.b_plus),
        "b_minus": cvec(&p.b_minus),
        "b_plus_raw": cvec(&p.b_plus_raw.raw),
        "b_minus_raw": cvec(&p.b_minus_raw.raw),
        "b_spread": [p.b_plus_raw.spread, p.b_minus_raw.spread],
        "corner_angle": p.corner_angle,
        "half_angle_sine": sine,
        "predicted_half_angle_sine": e,
        "residuals": {
            "tangent": r.tangent,
            "position": r.position,
            "normal": r.normal,
            "bounded": r.bounded(),
        },
        "checks": checks_json(&checks),
    });
    write_json(&out.join("constants.json"), &constants)?;

    let xs = p.profile.grid.xs();
    let curve: Vec<Vec<f64>> = xs.iter().zip(&p.profile.points).map(|(x, q)| vec![*x, q.x, q.y, q.z]).collect();
    let head = format!("self-similar profile G(s) = chi(1, s), a = {a}");
    emit_plot_data(&out.join("plot/curve.dat"), &[&head], &["s", "x", "y", "z"], &curve)?;
    let tangent: Vec<Vec<f64>> = xs.iter().zip(&p.frame.t).map(|(x, t)| vec![*x, t.x, t.y, t.z]).collect();
    emit_plot_data(&out.join("plot/tangent.dat"), &[&head], &["s", "T1", "T2", "T3"], &tangent)?;
    let mut sweep = Vec::new();
    for k in 1..=20 {
        let b = 0.1 * k as f64;
        let q = build_profile(b, default_half_width(b), 0.01)?;
        let pred = 2.0 * predicted_half_angle_sine(b).asin();
        sweep.push(vec![b, q.corner_angle, pred, (q.corner_angle - pred).abs()]);
    }
    emit_plot_data(
        &out.join("plot/angle_sweep.dat"),
        &["corner angle against a, h = 0.01", "predicted: 2 asin(exp(-pi a^2/2))"],
        &["a", "theta", "theta_predicted", "abs_error"],
        &sweep,
    )?;
    ok(json!({ "corner_angle": p.corner_angle, "half_angle_sine": sine, "predicted": e, "checks_passed": checks.iter().all(|c| c.passed) }))
}

// ---------------------------------------------------------------------------

fn nls(cfg: &RunConfig) -> Result<Outcome> {
    let a = cfg.a;
    let t_far = cfg.extra_f64("t_far", 1024.0)?;
    let t_target = cfg.extra_f64("t_target", 1.0)?;
    let dt_ratio = cfg.extra_f64("dt_ratio", 2f64.powf(-1.0 / 8.0))?;
    let nodes = cfg.extra_usize("nodes", 65536)?;
    let phi = match cfg.extra.get("fplus") {
        Some(p) => {
            let f = read_state(Path::new(p))?;
            if nodes > f.grid.len() {
                f.embed_into(&centred(nodes, f.grid.h())?)?
            } else {
                f
            }
        }
        None => gaussian_with_norm(&centred(nodes, 0.5)?, 0.01 * a, 2.0, cfg.gamma)?,
    };
    let opts = WaveOperatorOptions { dt_ratio, gamma: cfg.gamma, smallness: cfg.smallness, ..Default::default() };
    let grid = phi.grid;
    let window: Vec<usize> = (0..grid.len()).filter(|&i| grid.x(i).abs() <= 64.0).collect();
    let mut snapshots: Vec<SpectralField> = Vec::new();
    let mut energies: Vec<(f64, f64)> = Vec::new();
    let mut failure: Option<Error> = None;
    let mut calls = 0usize;
    let (n_steps, _) = filament_core::nls::ladder(t_far, t_target, dt_ratio);
    let run = wave_operator_approx_with(&phi, a, t_far, t_target, &opts, |t, u| {
        let v: Vec<C> = u.iter().map(|z| z + a).collect();
        match SpectralField::new(grid, v, t).and_then(|f| energy(&f, t, a)) {
            Ok(e) => energies.push((t, e)),
            Err(e) => failure = Some(e),
        }
        if calls % 8 == 0 || calls == n_steps {
            match SpectralField::new(grid, u.to_vec(), t) {
                Ok(f) => snapshots.push(f),
                Err(e) => failure = Some(e),
            }
        }
        calls += 1;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let rows = snapshots.iter().flat_map(|s| window.iter().map(move |&i| vec![s.time, grid.x(i), s.values[i].re, s.values[i].im]));
    write_csv(&cfg.out.join("snapshots.csv"), &["t", "y", "Re_u", "Im_u"], rows)?;
    write_state(&cfg.out.join("u_target.csv"), &run.u)?;
    let bundle = norm_bundle(&snapshots, cfg.gamma, t_target, a)?;
    let budget = cfg.smallness * a;
    let checks = vec![Check::at_most("weighted defect against the free profile", run.defect, budget)];
    let norms = json!({
        "a": a,
        "gamma": cfg.gamma,
        "t_far": t_far,
        "t_target": t_target,
        "steps": run.steps,
        "input_xgamma_norms": run.input_norms,
        "defect": run.defect,
        "defect_series": run.defect_series,
        "flagged": run.flagged,
        "energy": energies,
        "norms_at_target": bundle,
        "checks": checks_json(&checks),
    });
    write_json(&cfg.out.join("norms.json"), &norms)?;
    ok(json!({ "steps": run.steps, "defect": run.defect, "flagged": run.flagged }))
}

// ---------------------------------------------------------------------------

/// Big NLS box used by the synthesis: spacing 1/2.
fn synthesis_grid(nodes: usize) -> Result<Grid1D> {
    centred(nodes, 0.5)
}

fn positive_bumps() -> [BumpTest; 2] {
    [
        BumpTest { t_c: 0.5, t_w: 0.4, x_c: 0.0, x_w: 1.2, slope: 0.3 },
        BumpTest { t_c: 0.3, t_w: 0.25, x_c: 0.4, x_w: 0.8, slope: 0.0 },
    ]
}

fn two_sided_bumps() -> [BumpTest; 3] {
    [
        BumpTest { t_c: 0.0, t_w: 0.9, x_c: 0.0, x_w: 1.2, slope: 0.3 },
        BumpTest { t_c: 0.1, t_w: 0.5, x_c: 0.4, x_w: 0.8, slope: 0.0 },
        BumpTest { t_c: -0.2, t_w: 0.7, x_c: -0.3, x_w: 1.0, slope: -0.5 },
    ]
}

fn weak_checks(sides: &[&FlowTrajectory], tests: &[BumpTest], checks: &mut Vec<Check>) -> Result<Vec<Value>> {
    let mut out = Vec::new();
    for (k, phi) in tests.iter().enumerate() {
        let w = weak_residual(sides, phi)?;
        checks.push(Check::at_most(format!("binormal form / |phi|, test {}", k + 1), w.binormal / w.norm, 1e-2));
        checks.push(Check::at_most(format!("tangent form / |phi|, test {}", k + 1), w.tangent / w.norm, 1e-2));
        out.push(json!({ "test": phi, "residual": w }));
    }
    Ok(out)
}

fn synthesize(a: f64, phi: &SpectralField, nodes: usize, t_min: f64, audit: bool) -> Result<SynthesisRun> {
    let mut cfg = SynthesisConfig { a, t_min, ..Default::default() };
    if !audit {
        cfg.audit_times.clear();
    }
    evolve_synthesis(&phi.embed_into(&synthesis_grid(nodes)?)?, &cfg)
}

fn evolve(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.extra_str("route", "synthesis") {
        "synthesis" => evolve_synthesis_route(cfg),
        "geometric" => evolve_geometric_route(cfg),
        r => Err(Error::Invalid(format!("route {r:?} is neither geometric nor synthesis"))),
    }
}

fn evolve_synthesis_route(cfg: &RunConfig) -> Result<Outcome> {
    let a = cfg.a;
    if cfg.t0 != 1.0 {
        return Err(Error::Invalid("the synthesis ladder starts at t0 = 1".into()));
    }
    let nodes = cfg.extra_usize("nodes", 1 << 21)?;
    let phi = match cfg.extra.get("perturbation") {
        Some(p) => read_state(Path::new(p))?,
        None => default_perturbation(a)?,
    };
    let run = synthesize(a, &phi, nodes, cfg.t_min, true)?;
    let out = &cfg.out;
    write_state(&out.join("perturbation.csv"), &phi)?;
    write_json(&out.join("state.json"), &json!({ "a": a, "t_min": cfg.t_min, "nodes": nodes, "perturbation": "perturbation.csv" }))?;
    let near = write_octaves(&out.join("slices"), "near", &run.near)?;
    let far = write_octaves(&out.join("slices"), "far", &run.far)?;
    let trace = trace_at_zero(&run.near)?;
    write_trace(&out.join("trace.csv"), &trace)?;
    let xs = trace.curve.grid.xs();
    write_csv(
        &out.join("trace_fit.csv"),
        &["x", "exponent", "spread"],
        xs.iter().enumerate().map(|(i, x)| vec![*x, trace.exponent[i], trace.spread[i]]),
    )?;

    let rate = rate_report(&run.near, &trace, 1.0, 1.0 / 16.0)?;
    let mut checks = vec![
        Check::at_most("C spread over last three rungs", rate.c_spread, 0.2),
        Check::at_least("tangent rate exponent at x = 1", rate.exponent, 1.0 / 6.0 - 0.05),
    ];
    let far_field = far_field_check(&run.far, 1.0 / 16.0, 0.25).ok();
    let weak = weak_checks(&[&run.near], &positive_bumps(), &mut checks)?;

    // Trace at t = 0 on the far grid, expressed in the orientation of the flow.
    let f_plus = fplus_from_nls_state(&phi)?;
    let corner = CornerData::from_profile(&build_profile(a, default_half_width(a), 0.005)?);
    let tg = trace.curve.grid;
    let cn = coupling_from_fplus(f_plus.clone(), &corner, &tg);
    let (datum_near, _) = datum_from_coupling(&tg, |x| cn.g_at(x), &corner)?;
    let al = filament_core::geometry::align_points(&trace.curve.points, &datum_near.points)?;
    let fg = run.config.far_grid()?;
    let cf = coupling_from_fplus(f_plus.clone(), &corner, &fg);
    let (_, datum_far) = datum_from_coupling(&fg, |x| cf.g_at(x), &corner)?;
    let t_zero = datum_far.rotated(&al.motion.rotation.transpose());
    let audit = remainder_audit(&run.audit_slices(), &f_plus, &t_zero, &[0.5, 1.0, 2.0, 4.0], 8.0, h1_norm(&phi))?;

    let report = json!({
        "a": a,
        "t_min": cfg.t_min,
        "nodes": nodes,
        "rungs": run.near.slices.len(),
        "wave_defect": run.wave_defect,
        "wave_flagged": run.wave_flagged,
        "input_norms": run.input_norms,
        "trajectory_check": run.near.check(),
        "rate": rate,
        "far_field": far_field,
        "weak_residuals": weak,
        "trace_alignment_residual": al.max,
        "remainder_audit": audit,
        "slices": { "near": near, "far": far },
        "checks": checks_json(&checks),
    });
    write_json(&out.join("report.json"), &report)?;
    ok(json!({ "c": rate.c.last().map(|c| c.1), "exponent": rate.exponent, "checks_passed": checks.iter().all(|c| c.passed) }))
}

/// Curve CSV whose x column is equispaced; staggered when it straddles 0
/// symmetrically without a node there.
fn read_curve_any(path: &Path) -> Result<(SampledCurve, FrameField)> {
    let rows = read_csv(path, &CURVE_COLUMNS)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let n = xs.len();
    let symmetric = n >= 2 && (xs[0] + xs[n - 1]).abs() <= 1e-9 * (1.0 + xs[n - 1].abs());
    let layout = if symmetric && n % 2 == 0 { Layout::Staggered } else { Layout::Nodal };
    read_curve_csv(path, Grid1D::from_nodes(&xs, layout)?)
}

fn evolve_geometric_route(cfg: &RunConfig) -> Result<Outcome> {
    let a = cfg.a;
    let t0 = cfg.t0;
    let t1 = cfg.extra_f64("t_end", t0 / 4.0)?;
    if t1 == t0 || !t1.is_finite() {
        return Err(Error::Invalid(format!("t_end = {t1} must differ from t0 = {t0}")));
    }
    let (chi0, profile) = match cfg.extra.get("perturbation") {
        Some(p) => (read_curve_any(Path::new(p))?.0, None),
        None => {
            let t_lo = t0.min(t1);
            if !(t_lo > 0.0) {
                return Err(Error::Invalid("the self-similar datum needs positive times".into()));
            }
            let hw = default_half_width(a).max(1.05 * cfg.half_width / t_lo.sqrt());
            let p = build_profile(a, hw, 0.005)?;
            let grid = Grid1D::symmetric(cfg.half_width, cfg.h)?;
            let pts = grid.xs().iter().map(|&x| evaluate_selfsimilar(&p, t0, x)).collect::<Result<Vec<_>>>()?;
            (SampledCurve { grid, points: pts }, Some(p))
        }
    };
    let h = chi0.grid.h();
    let n_rec = ((t1 / t0).abs().ln() / cfg.ratio.ln()).abs().floor() as i32;
    let record: Vec<f64> = if t0 > 0.0 && t1 > 0.0 { (1..=n_rec).map(|k| t0 * cfg.ratio.powi(k)).collect() } else { vec![] };
    let run = evolve_geometric(&chi0, t0, t1, h * h / 4.0, &record)?;
    let dir = cfg.out.join("slices");
    let mut files = Vec::new();
    for (k, s) in run.trajectory.slices.iter().enumerate() {
        let name = format!("slice_{k:03}.csv");
        write_slice(&dir.join(&name), s)?;
        files.push(json!({ "t": s.t, "file": name }));
    }
    let oracle = match &profile {
        Some(p) => {
            let w = cfg.half_width / 4.0;
            let mut worst: f64 = 0.0;
            for s in &run.trajectory.slices {
                for (i, x) in s.grid().xs().iter().enumerate() {
                    if x.abs() <= w {
                        worst = worst.max((s.curve.points[i] - evaluate_selfsimilar(p, s.t, *x)?).norm());
                    }
                }
            }
            Some(json!({ "window": w, "max_error": worst }))
        }
        None => None,
    };
    let report = json!({
        "route": "geometric",
        "a": a,
        "t0": t0,
        "t_end": t1,
        "h": h,
        "steps": run.steps,
        "max_step_defect": run.max_step_defect,
        "trajectory_check": run.trajectory.check(),
        "selfsimilar_oracle": oracle,
        "slices": files,
    });
    write_json(&cfg.out.join("report.json"), &report)?;
    ok(json!({ "steps": run.steps, "selfsimilar_oracle": oracle }))
}

// ---------------------------------------------------------------------------

fn small_grid() -> Result<Grid1D> {
    Grid1D::periodic(-256.0, 512.0, 1024)
}

fn trace(cfg: &RunConfig) -> Result<Outcome> {
    let a = cfg.a;
    let n_max = cfg.extra_usize("n_max", 8)?;
    let method = cfg.extra_str("method", "all");
    if !["series", "integral", "ode", "all"].contains(&method) {
        return Err(Error::Invalid(format!("method {method:?} is not series, integral, ode or all")));
    }
    if n_max == 0 {
        return Err(Error::Invalid("n_max must be positive".into()));
    }
    let corner = CornerData::from_profile(&build_profile(a, default_half_width(a), 0.005)?);
    let (datum, datum_frame) = match cfg.extra.get("datum") {
        Some(p) => read_curve_any(Path::new(p))?,
        None => {
            let grid = Grid1D::symmetric(cfg.half_width, cfg.h)?;
            let c = coupling_from_fplus(fplus_from_nls_state(&default_perturbation(a)?)?, &corner, &grid);
            let (curve, frame) = datum_from_coupling(&grid, |x| c.g_at(x), &corner)?;
            write_curve_csv(&cfg.out.join("datum.csv"), &curve, &frame)?;
            (curve, frame)
        }
    };
    let grid = datum.grid;
    let coupling = g_from_datum(&grid, &datum_frame.t, &corner, &small_grid()?)?;
    let cmp = compare_routes(&coupling.f_plus, &corner, &grid, n_max)?;
    let out = &cfg.out;
    if matches!(method, "ode" | "all") {
        write_frame(&out.join("trace_ode.csv"), &cmp.ode)?;
    }
    if matches!(method, "integral" | "all") {
        write_frame(&out.join("trace_integral.csv"), &cmp.integral.frame)?;
    }
    if matches!(method, "series" | "all") {
        write_frame(&out.join("trace_series.csv"), &cmp.series.frame(2 * n_max)?)?;
        let sups: Vec<Vec<f64>> = (1..=cmp.series.terms.len()).map(|j| vec![j as f64, cmp.series.sup(j)]).collect();
        emit_plot_data(&out.join("plot/series_terms.dat"), &["sup |a_j| of the series terms"], &["j", "sup"], &sups)?;
    }
    let ag = &cmp.agreement;
    let checks = vec![
        Check::at_most("ODE vs integral", ag.ode_vs_integral, 1e-5),
        Check::at_most("ODE vs series", ag.ode_vs_series, 1e-5),
        Check::at_most("series vs integral", ag.series_vs_integral, 1e-5),
        Check::at_most("integral route T(0, 0+-) - A+-", ag.corner_integral, 1e-3),
    ];
    let datum_gap = datum_frame.t.iter().zip(&cmp.ode.t).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let report = json!({
        "a": a,
        "n_max": n_max,
        "method": method,
        "grid": { "first": grid.first(), "last": grid.last(), "h": grid.h(), "nodes": grid.len() },
        "agreement": ag,
        "datum_vs_ode": datum_gap,
        "series_tail_bounds": cmp.series.tail_bounds,
        "checks": checks_json(&checks),
    });
    write_json(&out.join("agreement.json"), &report)?;
    ok(json!({ "agreement": ag, "checks_passed": checks.iter().all(|c| c.passed) }))
}

// ---------------------------------------------------------------------------

fn continue_run(cfg: &RunConfig) -> Result<Outcome> {
    let dir = PathBuf::from(
        cfg.extra
            .get("positive_run")
            .ok_or_else(|| Error::Invalid("continue needs --positive-run <dir>".into()))?,
    );
    let state: Value = read_json(&dir.join("state.json"))?;
    let field = |k: &str| state.get(k).and_then(Value::as_f64).ok_or_else(|| Error::Invalid(format!("state.json lacks {k}")));
    let (a, t_min, nodes) = (field("a")?, field("t_min")?, field("nodes")? as usize);
    let phi = read_state(&dir.join("perturbation.csv"))?;

    let corner = CornerData::from_profile(&build_profile(a, default_half_width(a), 0.005)?);
    let pos = synthesize(a, &phi, nodes, t_min, false)?;
    let trace = trace_at_zero(&pos.near)?;
    let frame = build_continuation(&corner)?;
    let cgrid = Grid1D::symmetric(40.0, 0.01)?;
    let coupling = coupling_from_fplus(fplus_from_nls_state(&phi)?, &corner, &cgrid);
    let star = reflect_coupling(&coupling, &frame)?;
    let phi_star = nls_state_from_fplus(&star.f_plus)?;
    let neg = synthesize(a, &phi_star, nodes, t_min, false)?;
    let star_trace = trace_at_zero(&neg.near)?;
    let ext = extend_negative(&neg.near, Some(&neg.far), &star_trace, &trace)?;

    let out = &cfg.out;
    let sdir = out.join("slices");
    let plus = write_octaves(&sdir, "plus", &pos.near)?;
    let minus = write_octaves(&sdir, "minus", &ext.trajectory)?;
    write_trace(&out.join("trace_plus.csv"), &trace)?;
    write_trace(&out.join("trace_minus.csv"), &ext.trace)?;

    let id = frame.identities(&corner);
    let mut checks = vec![
        Check::at_most("rho^2 - I", id.involution, 1e-8),
        Check::at_most("rho - reflection product", id.factorization, 1e-8),
        Check::at_most("rho A+- + A-+", id.a_swap, 1e-8),
        Check::at_most("rho B+- - R-+ conj B-+", id.b_swap, 1e-8),
        Check::at_most("rho B+- - c conj B-+", id.b_phase, 1e-8),
        Check::at_most("glue mismatch at t = 0", ext.mismatch, 1e-2),
    ];
    let rp = rate_report(&pos.near, &trace, 1.0, 1.0 / 16.0)?;
    let rn = rate_report(&ext.trajectory, &ext.trace, 1.0, 1.0 / 16.0)?;
    checks.push(Check::at_most("negative-time C spread", rn.c_spread, 0.2));
    checks.push(Check::at_least("negative-time rate exponent", rn.exponent, 1.0 / 6.0 - 0.05));
    let (cp, cn) = (rp.c.last().map(|c| c.1).unwrap_or(0.0), rn.c.last().map(|c| c.1).unwrap_or(0.0));
    checks.push(Check::at_most("|C- / C+ - 1|", (cn / cp - 1.0).abs(), 0.2));
    let weak = weak_checks(&[&pos.near, &ext.trajectory], &two_sided_bumps(), &mut checks)?;
    let (_, datum) = datum_from_coupling(&cgrid, |x| coupling.g_at(x), &corner)?;

    let report = json!({
        "a": a,
        "positive_run": dir.display().to_string(),
        "rho": frame.rho,
        "identities": id,
        "motion": ext.motion,
        "mismatch": ext.mismatch,
        "literal_rule_defect": literal_rule_defect(&datum, &frame),
        "rate_plus": rp,
        "rate_minus": rn,
        "weak_residuals": weak,
        "slices": { "plus": plus, "minus": minus },
        "checks": checks_json(&checks),
    });
    write_json(&out.join("report.json"), &report)?;
    ok(json!({ "mismatch": ext.mismatch, "checks_passed": checks.iter().all(|c| c.passed) }))
}

// ---------------------------------------------------------------------------

/// Linear interpolation of samples (xi, u), zero outside their range.
struct Sampled {
    xi: Vec<f64>,
    u: Vec<C>,
}

impl AsymptoticState for Sampled {
    fn uhat(&self, xi: f64) -> C {
        let n = self.xi.len();
        if n == 0 || xi < self.xi[0] || xi > self.xi[n - 1] {
            return C::new(0.0, 0.0);
        }
        let j = self.xi.partition_point(|&v| v <= xi).clamp(1, n - 1);
        let (x0, x1) = (self.xi[j - 1], self.xi[j]);
        let w = if x1 > x0 { (xi - x0) / (x1 - x0) } else { 0.0 };
        self.u[j - 1] * (1.0 - w) + self.u[j] * w
    }
}

/// u (1 - e^{-xi^2 / delta^2}): the same state with its zero mode removed.
struct ZeroModeRemoved<'a> {
    inner: &'a dyn AsymptoticState,
    delta: f64,
}

impl AsymptoticState for ZeroModeRemoved<'_> {
    fn uhat(&self, xi: f64) -> C {
        self.inner.uhat(xi) * (1.0 - (-xi * xi / (self.delta * self.delta)).exp())
    }
}

fn linear_j(cfg: &RunConfig) -> Result<Outcome> {
    let a = cfg.a;
    let opts = ObstructionOptions {
        xi_min: cfg.extra_f64("xi_min", 1e-3)?,
        xi_max: cfg.extra_f64("xi_max", 8.0)?,
        ..Default::default()
    };
    let t_max = cfg.extra_f64("t_max", 1e3)?;
    if !(opts.xi_min > 0.0 && opts.xi_max > opts.xi_min) {
        return Err(Error::Invalid("need 0 < xi_min < xi_max".into()));
    }

    let what = |x: f64| C::new(1.0, 0.5 * x) * (-x * x).exp();
    let dwhat = |x: f64| (C::new(0.0, 0.5) - C::new(1.0, 0.5 * x) * (2.0 * x)) * (-x * x).exp();
    let n_times = ((t_max.log10() * 4.0).round() as usize).max(1);
    let times: Vec<f64> = (0..=n_times).map(|k| t_max.powf(k as f64 / n_times as f64)).collect();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..=8 {
        let xi = opts.xi_min * (opts.xi_max / opts.xi_min).powf(k as f64 / 8.0);
        let state = ModeState::from_datum(xi, 1.0, what, dwhat);
        let r = commutator_check(&state, a, &times, DEFAULT_RESOLUTION).max_residual();
        worst = worst.max(r);
        let asy = asymptotic_check(what, a, xi, 12, DEFAULT_RESOLUTION)?;
        rows.push(vec![xi, r, asy.rate, asy.z_plus_error]);
        fits.push(json!({ "xi": xi, "rate": asy.rate, "z_plus_error": asy.z_plus_error, "times": asy.times, "defect": asy.defect }));
    }
    write_csv(&cfg.out.join("modes.csv"), &["xi", "commutator_residual", "decay_rate", "z_plus_error"], rows)?;

    let (sampled, gauss) = (
        match cfg.extra.get("uplus") {
            Some(p) => {
                let rows = read_csv(Path::new(p), &["xi", "Re", "Im"])?;
                Some(Sampled { xi: rows.iter().map(|r| r[0]).collect(), u: rows.iter().map(|r| C::new(r[1], r[2])).collect() })
            }
            None => None,
        },
        (GaussianState { width: 1.0, odd: false }, GaussianState { width: 1.0, odd: true }),
    );
    if let Some(s) = &sampled {
        if s.xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("uplus xi column must increase".into()));
        }
    }
    let removed;
    let (nonzero, zero): (&dyn AsymptoticState, &dyn AsymptoticState) = match &sampled {
        Some(s) => {
            removed = ZeroModeRemoved { inner: s, delta: 0.1 };
            (s, &removed)
        }
        None => (&gauss.0, &gauss.1),
    };
    let ob = zero_mode_obstruction(nonzero, zero, a, t_max, &opts)?;
    let orows: Vec<Vec<f64>> = ob.times.iter().enumerate().map(|(j, t)| vec![*t, ob.norm_nonzero[j], ob.norm_zero[j]]).collect();
    write_csv(&cfg.out.join("obstruction.csv"), &["t", "norm_nonzero", "norm_zero"], orows.clone())?;
    emit_plot_data(
        &cfg.out.join("plot/obstruction.dat"),
        &["|J(t) w(t)| for asymptotic states with and without a zero mode"],
        &["t", "norm_nonzero", "norm_zero"],
        &orows,
    )?;
    let checks = vec![
        Check::at_most("commutator identity, max relative residual", worst, 1e-6),
        Check::at_most("max/min |J w|, vanishing zero mode", ob.ratio_zero, 10.0),
        Check::above("max/min |J w|, nonvanishing zero mode", ob.ratio_nonzero, 10.0),
    ];
    let verdict = json!({
        "a": a,
        "commutator_max_residual": worst,
        "decay_fits": fits,
        "obstruction_growth_ratios": {
            "nonzero": ob.ratio_nonzero,
            "zero": ob.ratio_zero,
            "cutoff_growth_nonzero": ob.cutoff_growth_nonzero,
            "cutoff_growth_zero": ob.cutoff_growth_zero,
        },
        "fitted_c": ob.fitted_c,
        "hdot_sum_zero": ob.hdot_sum_zero,
        "checks": checks_json(&checks),
    });
    write_json(&cfg.out.join("verdict.json"), &verdict)?;
    ok(json!({
        "commutator_max_residual": worst,
        "ratio_nonzero": ob.ratio_nonzero,
        "ratio_zero": ob.ratio_zero,
        "checks_passed": checks.iter().all(|c| c.passed),
    }))
}

// ---------------------------------------------------------------------------

fn verify(cfg: &RunConfig) -> Result<Outcome> {
    let suite = cfg.extra_str("suite", "paper");
    if suite != "paper" {
        return Err(Error::Invalid(format!("unknown suite {suite:?}; the only suite is \"paper\"")));
    }
    let ids: Vec<usize> = match cfg.extra.get("only") {
        None => all_ids(),
        Some(s) => s
            .split(',')
            .map(|p| {
                let id: usize = p.trim().parse().map_err(|_| Error::Invalid(format!("criterion {p:?} is not a number")))?;
                if CRITERIA.iter().any(|c| c.0 == id) {
                    Ok(id)
                } else {
                    Err(Error::Invalid(format!("no criterion {id}")))
                }
            })
            .collect::<Result<_>>()?,
    };
    let report = run_suite(cfg.a, &ids, |c| eprintln!("{}", c.line()));
    write_json(&cfg.out.join("summary.json"), &report)?;
    let verdicts: Vec<Value> = report.criteria.iter().map(|c| json!({ "id": c.id, "title": c.title, "passed": c.passed })).collect();
    Ok(Outcome {
        summary: json!({ "passed": report.passed, "failed": report.failed, "criteria": verdicts }),
        failed: report.failed > 0,
    })
}
