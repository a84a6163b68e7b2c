//! Binormal flow chi_t = chi_x ^ chi_xx by two routes: explicit time
//! stepping of the Schrodinger map, and synthesis of chi from an NLS run
//! through the pseudo-conformal transform.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Result};
use crate::fit;
use crate::geometry::{
    cumulative, curve_from_tangent, differentiate, parallel_integrate_fn, CVec3, Frame, FrameField, Grid1D, Layout,
    SampledCurve, Vec3,
};
use crate::hasimoto::parallel_filament;
use crate::nls::{wave_operator_approx_with, SpectralField, WaveOperatorOptions};
use crate::trace_series::{AuditSlice, KernelSlice};

type C = Complex64;
const I: C = C { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Geometric,
    NlsSynthesis,
}

/// One time of a flow. `kb` is T ^ T_x (curvature times binormal) and
/// `kb_cum` its integral from x = 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Slice {
    pub t: f64,
    pub curve: SampledCurve,
    pub frame: FrameField,
    pub kb: Vec<Vec3>,
    pub kb_cum: Vec<Vec3>,
}

impl Slice {
    /// Slice from a unit tangent field and the curve it integrates to; the
    /// normal is parallel-transported from an arbitrary completion at x = 0.
    pub fn from_tangent(t: f64, tangent: &[Vec3], curve: SampledCurve) -> Result<Self> {
        let grid = curve.grid;
        let anchor = if grid.first() < 0.0 && grid.last() > 0.0 { 0.0 } else { grid.first() };
        let t0 = crate::geometry::interp(&grid, tangent, anchor, anchor > 0.0).normalize();
        let (_, frame) = parallel_filament(&grid, tangent, complete(&t0), anchor)?;
        let tx = differentiate(&grid, tangent);
        let kb: Vec<Vec3> = tangent.iter().zip(&tx).map(|(a, b)| a.cross(b)).collect();
        let kb_cum = cumulative(&grid, &kb, Vec3::zeros(), anchor);
        Ok(Self { t, curve, frame, kb, kb_cum })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.curve.grid
    }

    /// Unit binormal where the curvature is visible, zero elsewhere.
    pub fn binormal(&self, i: usize) -> Vec3 {
        let k = self.kb[i].norm();
        if k > 1e-14 {
            self.kb[i] / k
        } else {
            Vec3::zeros()
        }
    }
}

/// Unit vectors completing `t` to a right-handed frame.
fn complete(t: &Vec3) -> (Vec3, Vec3) {
    let e = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let r = (e - t * t.dot(&e)).normalize();
    (r, t.cross(&r))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub route: Route,
    pub a: f64,
    /// Ordered by decreasing |t|.
    pub slices: Vec<Slice>,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct TrajectoryCheck {
    pub chord_defect: f64,
    pub frame_defect: f64,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.t).collect()
    }

    pub fn check(&self) -> TrajectoryCheck {
        self.slices.iter().fold(TrajectoryCheck::default(), |c, s| TrajectoryCheck {
            chord_defect: c.chord_defect.max(s.curve.max_chord_defect()),
            frame_defect: c.frame_defect.max(s.frame.max_defect()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.check();
        if c.chord_defect > 1e-3 {
            return numerical(format!("chord lengths drift from h by {:.3e}", c.chord_defect));
        }
        if c.frame_defect > 1e-6 {
            return numerical(format!("frames lose orthonormality ({:.3e})", c.frame_defect));
        }
        Ok(())
    }

    pub fn slice_at(&self, t: f64) -> Option<&Slice> {
        self.slices.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1e-300))
    }
}

// ---------------------------------------------------------------------------
// Geometric route

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometricRun {
    pub trajectory: FlowTrajectory,
    pub steps: usize,
    /// Largest ||T| - 1| seen before renormalization.
    pub max_step_defect: f64,
}

fn second_difference_rhs(t: &[Vec3], inv_h2: f64, out: &mut [Vec3]) {
    let n = t.len();
    out[0] = Vec3::zeros();
    out[n - 1] = Vec3::zeros();
    let body = |(i, o): (usize, &mut Vec3)| {
        let i = i + 1;
        *o = t[i].cross(&((t[i + 1] - t[i] * 2.0 + t[i - 1]) * inv_h2));
    };
    if n > 8192 {
        out[1..n - 1].par_iter_mut().enumerate().for_each(body);
    } else {
        out[1..n - 1].iter_mut().enumerate().for_each(body);
    }
}

/// T_t = T ^ T_xx with centered second differences and frozen end nodes,
/// RK4 in time. The node nearest x = 0 carries chi through chi_t = T ^ T_x;
/// chi is rebuilt from T at every recorded time. `t1 < t0` runs backward.
pub fn evolve_geometric(chi0: &SampledCurve, t0: f64, t1: f64, dt: f64, record: &[f64]) -> Result<GeometricRun> {
    let grid = chi0.grid;
    let h = grid.h();
    if !(dt > 0.0) || !t0.is_finite() || !t1.is_finite() {
        return invalid("time step must be positive and times finite");
    }
    if dt > h * h / 4.0 {
        return invalid(format!("dt = {dt:.3e} exceeds h^2/4 = {:.3e}", h * h / 4.0));
    }
    if grid.len() < 5 {
        return invalid("geometric route needs at least 5 nodes");
    }
    let dir = (t1 - t0).signum();
    let mut stops: Vec<f64> = record.iter().cloned().filter(|&s| (s - t0) * dir > 0.0 && (t1 - s) * dir > 0.0).collect();
    stops.push(t1);
    stops.sort_by(|a, b| ((a - t0) * dir).total_cmp(&((b - t0) * dir)));
    stops.dedup();

    let mut tan: Vec<Vec3> = differentiate(&grid, &chi0.points).into_iter().map(|v| v.normalize()).collect();
    let ia = (0..grid.len()).min_by(|&i, &j| grid.x(i).abs().total_cmp(&grid.x(j).abs())).unwrap_or(0);
    let ia = ia.clamp(1, grid.len() - 2);
    let xa = grid.x(ia);
    let mut p = chi0.points[ia];
    let inv_h2 = 1.0 / (h * h);
    let n = grid.len();
    let mut slices = vec![Slice::from_tangent(t0, &tan, curve_from_tangent(&grid, &tan, p, xa)?)?];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![Vec3::zeros(); n], vec![Vec3::zeros(); n], vec![Vec3::zeros(); n], vec![Vec3::zeros(); n]);
    let mut tmp = vec![Vec3::zeros(); n];
    let vel = |t: &[Vec3]| t[ia].cross(&((t[ia + 1] - t[ia - 1]) / (2.0 * h)));
    let mut steps = 0;
    let mut max_def: f64 = 0.0;
    let mut t = t0;
    for &stop in &stops {
        let m = (((stop - t) / dt).abs() - 1e-9).ceil().max(1.0) as usize;
        let step = (stop - t) / m as f64;
        for _ in 0..m {
            second_difference_rhs(&tan, inv_h2, &mut k1);
            let p1 = vel(&tan);
            axpy(&tan, &k1, 0.5 * step, &mut tmp);
            second_difference_rhs(&tmp, inv_h2, &mut k2);
            let p2 = vel(&tmp);
            axpy(&tan, &k2, 0.5 * step, &mut tmp);
            second_difference_rhs(&tmp, inv_h2, &mut k3);
            let p3 = vel(&tmp);
            axpy(&tan, &k3, step, &mut tmp);
            second_difference_rhs(&tmp, inv_h2, &mut k4);
            let p4 = vel(&tmp);
            let mut def: f64 = 0.0;
            for i in 0..n {
                let v = tan[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (step / 6.0);
                let nv = v.norm();
                def = def.max((nv - 1.0).abs());
                tan[i] = v / nv;
            }
            p += (p1 + (p2 + p3) * 2.0 + p4) * (step / 6.0);
            max_def = max_def.max(def);
            steps += 1;
            if !(def <= 1e-2) {
                return numerical(format!(
                    "tangent left the sphere by {def:.3e} at t = {:.6}; the step or the grid does not resolve the flow",
                    t + step
                ));
            }
            t += step;
        }
        t = stop;
        let curve = curve_from_tangent(&grid, &tan, p, xa)?;
        slices.push(Slice::from_tangent(stop, &tan, curve)?);
    }
    Ok(GeometricRun {
        trajectory: FlowTrajectory { route: Route::Geometric, a: f64::NAN, slices },
        steps,
        max_step_defect: max_def,
    })
}

fn axpy(x: &[Vec3], d: &[Vec3], s: f64, out: &mut [Vec3]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(d) {
        *o = a + b * s;
    }
}

// ---------------------------------------------------------------------------
// Synthesis route

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub a: f64,
    /// NLS time where the free profile is imposed.
    pub t_far: f64,
    /// Ladder t_k = 2^{-k / rungs_per_octave}, k = 0..K.
    pub rungs_per_octave: usize,
    pub t_min: f64,
    /// Near-field sampling grid: staggered, spacing h_near, half width x_near.
    pub x_near: f64,
    pub h_near: f64,
    /// Far-field grid, kept only on rungs whose slice reaches x_far.
    pub x_far: f64,
    pub h_far: f64,
    /// Node budget per slice; bounds the slice half width at small t.
    pub max_nodes: usize,
    pub wave: WaveOperatorOptions,
    /// Rungs whose full slice and kernel are kept for the remainder audit.
    pub audit_times: Vec<f64>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            t_far: 65536.0,
            rungs_per_octave: 4,
            t_min: 1.0 / 16384.0,
            x_near: 1.5,
            h_near: 1e-3,
            x_far: 40.0,
            h_far: 0.025,
            max_nodes: 1 << 17,
            wave: WaveOperatorOptions { defect_every: 8, ..Default::default() },
            audit_times: vec![1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0],
        }
    }
}

impl SynthesisConfig {
    pub fn rungs(&self) -> usize {
        (self.rungs_per_octave as f64 * (1.0 / self.t_min).log2()).round() as usize
    }

    pub fn rung_time(&self, k: usize) -> f64 {
        2f64.powf(-(k as f64) / self.rungs_per_octave as f64)
    }

    /// Half width of the slice computed at time t.
    pub fn slice_half_width(&self, t: f64) -> f64 {
        self.x_far.min((0.4 * self.max_nodes as f64 * t).sqrt())
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return invalid("synthesis needs a > 0");
        }
        if self.rungs_per_octave == 0 {
            return invalid("need at least one rung per octave");
        }
        let k = self.rungs();
        if k < 12 || (self.rung_time(k) / self.t_min - 1.0).abs() > 1e-9 {
            return invalid(format!("t_min = {} is not on the ladder or too close to 1", self.t_min));
        }
        let q = (self.h_far / self.h_near).round();
        if (q * self.h_near - self.h_far).abs() > 1e-9 * self.h_far || q as usize % 2 == 0 {
            return invalid("h_far must be an odd multiple of h_near");
        }
        if self.slice_half_width(self.t_min) < self.x_near + 10.0 * self.h_near {
            return invalid(format!(
                "slice half width {:.3} at t_min does not cover the near grid",
                self.slice_half_width(self.t_min)
            ));
        }
        let oct = self.t_far.log2() * 2.0 * self.rungs_per_octave as f64;
        if (oct - oct.round()).abs() > 1e-9 {
            return invalid("t_far must be a power of two so that the NLS ladder lands on every rung");
        }
        Ok(())
    }

    pub fn near_grid(&self) -> Result<Grid1D> {
        Grid1D::symmetric_exact(self.h_near, (self.x_near / self.h_near).round() as usize)
    }

    pub fn far_grid(&self) -> Result<Grid1D> {
        Grid1D::symmetric_exact(self.h_far, (self.x_far / self.h_far).round() as usize)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AnchorSample {
    pub t: f64,
    /// Frame at x = 0 (between the two central nodes).
    pub frame: Frame,
    pub origin: Vec3,
}

/// Full slice and kernel kept for the remainder audit.
#[derive(Clone, Debug)]
pub struct AuditData {
    pub kernel: KernelSlice,
    pub frame: FrameField,
    pub x_edge: f64,
}

#[derive(Clone, Debug)]
pub struct SynthesisRun {
    pub config: SynthesisConfig,
    pub near: FlowTrajectory,
    pub far: FlowTrajectory,
    pub anchors: Vec<AnchorSample>,
    pub audit: Vec<AuditData>,
    pub wave_defect: f64,
    pub wave_flagged: bool,
    pub input_norms: Vec<f64>,
}

impl SynthesisRun {
    pub fn audit_slices(&self) -> Vec<AuditSlice<'_>> {
        self.audit.iter().map(|d| AuditSlice { kernel: &d.kernel, frame: &d.frame, x_edge: d.x_edge }).collect()
    }
}

struct Window {
    y_lo: f64,
    dy: f64,
    vals: Vec<C>,
}

impl Window {
    fn at(&self, y: f64) -> C {
        lagrange8(&self.vals, (y - self.y_lo) / self.dy)
    }
}

/// Eight-point Lagrange interpolation on unit-spaced samples at fractional
/// index r.
fn lagrange8(v: &[C], r: f64) -> C {
    let j = (r.floor() as isize).clamp(3, v.len() as isize - 5);
    let mut acc = C::new(0.0, 0.0);
    for k in -3..=4isize {
        let mut w = 1.0;
        for m in -3..=4isize {
            if m != k {
                w *= (r - (j + m) as f64) / (k - m) as f64;
            }
        }
        acc += v[(j + k) as usize] * w;
    }
    acc
}

const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// Run the NLS from the asymptotic state `phi` (NLS time t_far down to 1)
/// and assemble chi(t, .) on the ladder t_k = 1/tau_k. The frame at x = 0
/// starts canonical at t = 1 and follows the time law there; chi(t, 0) is
/// the integral of T ^ T_x at x = 0 from 0, so chi(0, 0) = 0.
pub fn evolve_synthesis(phi: &SpectralField, cfg: &SynthesisConfig) -> Result<SynthesisRun> {
    cfg.validate()?;
    let grid = phi.grid;
    if grid.layout != Layout::Periodic {
        return invalid("the asymptotic state must live on a periodic grid");
    }
    let dy = grid.h();
    let c0 = grid.coord(0.0);
    if (c0 - c0.round()).abs() > 1e-9 {
        return invalid("y = 0 must be a node of the NLS grid");
    }
    let j0 = c0.round() as usize;
    let a = cfg.a;
    let kmax = cfg.rungs();
    let rpo = cfg.rungs_per_octave as f64;
    let half: Vec<usize> = (0..=kmax)
        .map(|k| {
            let t = cfg.rung_time(k);
            (cfg.slice_half_width(t) / t / dy).ceil() as usize + 8
        })
        .collect();
    if let Some(k) = (0..=kmax).find(|&k| half[k] > j0 || j0 + half[k] >= grid.len()) {
        return invalid(format!("NLS grid is too short for the slice at t = {:.3e}", cfg.rung_time(k)));
    }
    let audit_k: Vec<usize> = cfg
        .audit_times
        .iter()
        .map(|&t| {
            let kf = -rpo * t.log2();
            if (kf - kf.round()).abs() > 1e-9 || kf.round() < 0.0 || kf.round() as usize > kmax {
                invalid(format!("audit time {t} is not a rung"))
            } else {
                Ok(kf.round() as usize)
            }
        })
        .collect::<Result<_>>()?;

    let mut samples: Vec<(f64, C, C)> = Vec::new();
    let mut windows: Vec<Option<Window>> = (0..=kmax).map(|_| None).collect();
    let mut kernels: Vec<(usize, Result<KernelSlice>)> = Vec::new();
    let mut wopts = cfg.wave.clone();
    wopts.dt_ratio = 2f64.powf(-0.5 / rpo);
    let run = wave_operator_approx_with(phi, a, cfg.t_far, 1.0, &wopts, |tau, u| {
        let vy = FD8.iter().enumerate().map(|(m, c)| (u[j0 + m + 1] - u[j0 - m - 1]) * *c).sum::<C>() / dy;
        samples.push((tau, u[j0] + a, vy));
        let kf = rpo * tau.log2();
        if (kf - kf.round()).abs() < 1e-6 && kf.round() >= 0.0 && kf.round() as usize <= kmax {
            let k = kf.round() as usize;
            let w = half[k];
            windows[k] = Some(Window { y_lo: -(w as f64) * dy, dy, vals: u[j0 - w..=j0 + w].to_vec() });
            if audit_k.contains(&k) {
                let ks = SpectralField::new(grid, u.to_vec(), tau).and_then(|f| KernelSlice::from_u(&f, a));
                kernels.push((k, ks));
            }
        }
    })?;

    let march = anchor_march(&samples, a)?;
    let near_grid = cfg.near_grid()?;
    let far_grid = cfg.far_grid()?;
    let mut jobs = Vec::new();
    for (k, w) in windows.into_iter().enumerate() {
        let w = match w {
            Some(w) => w,
            None => return numerical(format!("the NLS run never reached rung t = {:.3e}", cfg.rung_time(k))),
        };
        let t = cfg.rung_time(k);
        let anchor = march
            .iter()
            .find(|s| (s.t / t - 1.0).abs() < 1e-9)
            .copied()
            .ok_or_else(|| crate::Error::Numerical(format!("no anchor sample at t = {t}")))?;
        jobs.push((k, t, w, anchor));
    }
    let built: Vec<SliceSet> = jobs
        .par_iter()
        .map(|(k, t, w, anchor)| synth_slice(*t, a, w, anchor, cfg, &near_grid, &far_grid, audit_k.contains(k)))
        .collect::<Result<_>>()?;

    let mut audit = Vec::new();
    for (k, ks) in kernels {
        let idx = built.iter().position(|b| (b.near.t / cfg.rung_time(k) - 1.0).abs() < 1e-12).unwrap_or(0);
        if let Some((frame, x_edge)) = &built[idx].full {
            audit.push(AuditData { kernel: ks?, frame: frame.clone(), x_edge: *x_edge });
        }
    }
    let mut near = Vec::new();
    let mut far = Vec::new();
    for b in built {
        near.push(b.near);
        if let Some(f) = b.far {
            far.push(f);
        }
    }
    let anchors = march.into_iter().filter(|s| s.t >= cfg.t_min * (1.0 - 1e-12) && s.t <= 1.0 + 1e-12).collect();
    Ok(SynthesisRun {
        config: cfg.clone(),
        near: FlowTrajectory { route: Route::NlsSynthesis, a, slices: near },
        far: FlowTrajectory { route: Route::NlsSynthesis, a, slices: far },
        anchors,
        audit,
        wave_defect: run.defect,
        wave_flagged: run.flagged,
        input_norms: run.input_norms,
    })
}

/// Frame and origin at x = 0 from the NLS samples (tau, v(tau, 0),
/// v_y(tau, 0)), integrated in sigma = ln t = -ln tau from the canonical
/// frame at t = 1:
///   dT/dsigma = t^{-1/2} Im(v_y N)
///   dN/dsigma = -i t^{-1/2} conj(v_y) T + (i/2)(|v|^2 - a^2) N
///   dchi/dsigma = t^{1/2} Im(v N)
/// The origin below the first sample is closed with 2 sqrt(t) Im(v N).
fn anchor_march(samples: &[(f64, C, C)], a: f64) -> Result<Vec<AnchorSample>> {
    let m = samples.len();
    if m < 4 {
        return invalid("too few NLS samples for the anchor march");
    }
    let s0 = -samples[0].0.ln();
    let ds = -samples[1].0.ln() - s0;
    if samples.iter().enumerate().any(|(j, s)| (-s.0.ln() - s0 - j as f64 * ds).abs() > 1e-9) {
        return invalid("NLS samples are not uniform in log time");
    }
    if (-samples[m - 1].0.ln()).abs() > 1e-9 {
        return invalid("the NLS run must end at tau = 1");
    }
    let at = |sig: f64| -> (C, C) {
        let r = (sig - s0) / ds;
        let j = (r.floor() as isize).clamp(1, m as isize - 3);
        let mut v = C::new(0.0, 0.0);
        let mut vy = C::new(0.0, 0.0);
        for k in -1..=2isize {
            let mut w = 1.0;
            for q in -1..=2isize {
                if q != k {
                    w *= (r - (j + q) as f64) / (k - q) as f64;
                }
            }
            let s = samples[(j + k) as usize];
            v += s.1 * w;
            vy += s.2 * w;
        }
        (v, vy)
    };
    type St = (Vec3, CVec3, Vec3);
    let f = |sig: f64, s: &St| -> St {
        let (v, vy) = at(sig);
        let rt = (0.5 * sig).exp();
        let (t, n, _) = s;
        let tc = t.map(|c| C::new(c, 0.0));
        let dt = (n * vy).map(|z| z.im) / rt;
        let dn = tc * (-I * vy.conj() / rt) + n * (I * 0.5 * (v.norm_sqr() - a * a));
        let dp = (n * v).map(|z| z.im) * rt;
        (dt, dn, dp)
    };
    let add = |s: &St, d: &St, h: f64| -> St { (s.0 + d.0 * h, s.1 + d.1 * C::new(h, 0.0), s.2 + d.2 * h) };
    let canon = Frame::canonical();
    let mut st: St = (canon.t, canon.n(), Vec3::zeros());
    let mut out = vec![(Frame::canonical(), Vec3::zeros()); m];
    out[m - 1] = (canon, st.2);
    let sub = 4;
    for j in (0..m - 1).rev() {
        let sig_hi = s0 + (j + 1) as f64 * ds;
        let h = -ds / sub as f64;
        for q in 0..sub {
            let sg = sig_hi + q as f64 * h;
            let k1 = f(sg, &st);
            let k2 = f(sg + 0.5 * h, &add(&st, &k1, 0.5 * h));
            let k3 = f(sg + 0.5 * h, &add(&st, &k2, 0.5 * h));
            let k4 = f(sg + h, &add(&st, &k3, h));
            st = (
                st.0 + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0),
                st.1 + (k1.1 + (k2.1 + k3.1) * C::new(2.0, 0.0) + k4.1) * C::new(h / 6.0, 0.0),
                st.2 + (k1.2 + (k2.2 + k3.2) * 2.0 + k4.2) * (h / 6.0),
            );
        }
        let fr = Frame::from_complex(st.0, &st.1).gram_schmidt();
        st.0 = fr.t;
        st.1 = fr.n();
        out[j] = (fr, st.2);
    }
    let t_end = 1.0 / samples[0].0;
    let tail = (out[0].0.n() * samples[0].1).map(|z| z.im) * (2.0 * t_end.sqrt());
    let shift = tail - out[0].1;
    Ok(samples
        .iter()
        .zip(out)
        .map(|(s, (frame, p))| AnchorSample { t: 1.0 / s.0, frame, origin: p + shift })
        .collect())
}

struct SliceSet {
    near: Slice,
    far: Option<Slice>,
    full: Option<(FrameField, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn synth_slice(
    t: f64,
    a: f64,
    w: &Window,
    anchor: &AnchorSample,
    cfg: &SynthesisConfig,
    near_grid: &Grid1D,
    far_grid: &Grid1D,
    keep: bool,
) -> Result<SliceSet> {
    let xs = cfg.slice_half_width(t);
    let h_target = (0.5 * t).min(0.8 * t / xs);
    let mut m = (cfg.h_near / h_target).ceil().max(1.0) as usize;
    if m % 2 == 0 {
        m += 1;
    }
    let hs = cfg.h_near / m as f64;
    let half_s = (xs / hs).floor() as usize;
    let grid = Grid1D::symmetric_exact(hs, half_s)?;
    let rt = t.sqrt();
    let psi = |x: f64| C::from_polar(1.0 / rt, x * x / (4.0 * t)) * (w.at(x / t) + a).conj();
    let frame = parallel_integrate_fn(&grid, psi, &anchor.frame, 0.0)?;
    let curve = curve_from_tangent(&grid, &frame.t, anchor.origin, 0.0)?;
    let kb: Vec<Vec3> = (0..grid.len())
        .map(|i| {
            let z = psi(grid.x(i)).conj();
            (frame.n(i) * z).map(|c| c.im)
        })
        .collect();
    let kb_cum = cumulative(&grid, &kb, Vec3::zeros(), 0.0);
    let sample = |g: &Grid1D| -> Result<Slice> {
        let q = (g.h() / cfg.h_near).round() as usize * m;
        let hg = g.n_nodes / 2;
        let idx: Vec<usize> = (0..g.len())
            .map(|j| half_s as isize + (j as isize - hg as isize) * q as isize + (q as isize - 1) / 2)
            .map(|i| {
                if i < 0 || i as usize >= grid.len() {
                    invalid(format!("slice at t = {t:.3e} does not cover the sampling grid"))
                } else {
                    Ok(i as usize)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Slice {
            t,
            curve: SampledCurve { grid: *g, points: idx.iter().map(|&i| curve.points[i]).collect() },
            frame: FrameField {
                grid: *g,
                t: idx.iter().map(|&i| frame.t[i]).collect(),
                n_re: idx.iter().map(|&i| frame.n_re[i]).collect(),
                n_im: idx.iter().map(|&i| frame.n_im[i]).collect(),
            },
            kb: idx.iter().map(|&i| kb[i]).collect(),
            kb_cum: idx.iter().map(|&i| kb_cum[i]).collect(),
        })
    };
    let near = sample(near_grid)?;
    let far = if xs >= cfg.x_far * (1.0 - 1e-12) { Some(sample(far_grid)?) } else { None };
    let full = if keep { Some((frame, xs - 1.0)) } else { None };
    Ok(SliceSet { near, far, full })
}

// ---------------------------------------------------------------------------
// Trace at t = 0

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceAtZero {
    pub curve: SampledCurve,
    /// (T(0), N~(0)) with N~ = N e^{i Phi}, Phi = -a^2 log sqrt t + a^2 log|x|.
    pub frame: FrameField,
    /// Fitted convergence exponent per node.
    pub exponent: Vec<f64>,
    /// Per node, the largest change of the extrapolated T(0, x) when the
    /// three rungs used are shifted down the ladder by one or two rungs
    /// (zero inside |x| < x_valid).
    pub spread: Vec<f64>,
    /// Inside |x| < x_valid the limit is continued linearly from each side.
    pub x_valid: f64,
    pub t_last: f64,
}

/// T(t, x) with the terms of its expansion in r = sqrt t / x removed:
/// integrating T_x = kappa n by parts against b_x = -tau n gives
/// T = T(0) - 2a r b + 2a^2 r^2 T(0) - 4a r^3 n + ... for curvature
/// a / sqrt t and torsion x / 2t.
pub fn corrected_tangent(sl: &Slice, i: usize, a: f64) -> Vec3 {
    let x = sl.grid().x(i);
    let r = sl.t.abs().sqrt() / x;
    let t = sl.frame.t[i];
    let b = sl.binormal(i);
    let n = b.cross(&t);
    t * (1.0 - 2.0 * a * a * r * r) + b * (2.0 * a * r) + n * (4.0 * a * r * r * r)
}

/// Limit of T(t, x) as t -> 0 from the last three ladder rungs a factor 2
/// apart. The corrected tangent removes the leading oscillatory terms; the
/// remainder is extrapolated in t^p with p fitted per node and clamped to
/// [1/6 - 0.01, 1/2].
pub fn trace_at_zero(traj: &FlowTrajectory) -> Result<TraceAtZero> {
    let s = &traj.slices;
    if s.iter().any(|x| !(x.t > 0.0)) {
        return invalid("the trace is taken from positive times");
    }
    let t_last = s.last().map(|x| x.t).unwrap_or(1.0);
    if t_last > 1e-4 {
        return invalid(format!("ladder stops at t = {t_last:.3e} > 1e-4"));
    }
    let grid = *s[0].grid();
    if s.iter().any(|x| !x.grid().same_as(&grid)) {
        return invalid("slices do not share a grid");
    }
    let kk = s.len() - 1;
    let oct = s.iter().position(|x| (x.t / (2.0 * t_last) - 1.0).abs() < 1e-9);
    let step = match oct {
        Some(j) if kk >= 2 * (kk - j) + 2 => kk - j,
        _ => return invalid("ladder needs rungs at t_min, 2 t_min and 4 t_min plus two more"),
    };
    let a = traj.a;
    let xv = 20.0 * t_last.sqrt();
    let q = |sl: &Slice, i: usize| corrected_tangent(sl, i, a);
    let phase = |sl: &Slice, i: usize| -> CVec3 {
        let x = grid.x(i);
        sl.frame.n(i) * C::from_polar(1.0, -a * a * sl.t.sqrt().ln() + a * a * x.abs().ln())
    };
    let extrap = |last: usize, i: usize| -> (Vec3, CVec3, f64, f64, f64) {
        let (s0, s1, s2) = (&s[last - 2 * step], &s[last - step], &s[last]);
        let (q0, q1, q2) = (q(s0, i), q(s1, i), q(s2, i));
        let (d1, d2) = ((q0 - q1).norm(), (q1 - q2).norm());
        let p = if d2 < 1e-14 || d1 < 1e-14 { 0.5 } else { (d1 / d2).log2().clamp(1.0 / 6.0 - 0.01, 0.5) };
        let f = 1.0 / (2f64.powf(p) - 1.0);
        let tz = q2 - (q1 - q2) * f;
        let (n1, n2) = (phase(s1, i), phase(s2, i));
        let nz = n2 - (n1 - n2) * C::new(f, 0.0);
        (tz, nz, p, d1, d2)
    };
    let n = grid.len();
    let res: Vec<(Vec3, CVec3, f64, f64, f64)> = (0..n).into_par_iter().map(|i| extrap(kk, i)).collect();
    let mut bad = Vec::new();
    let mut spread = vec![0.0; n];
    for (i, r) in res.iter().enumerate() {
        let x = grid.x(i);
        if x.abs() < xv {
            continue;
        }
        if r.4 > 1e-5 && r.4 > 1.2 * r.3 {
            bad.push(format!("x = {x:.4}: |dQ| grew from {:.3e} to {:.3e}", r.3, r.4));
        }
        for sh in 1..=2 {
            if kk >= 2 * step + sh {
                spread[i] = f64::max(spread[i], (extrap(kk - sh, i).0 - r.0).norm());
            }
        }
    }
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(5).cloned().collect();
        return numerical(format!("T(t, x) is not Cauchy at {} nodes; {}", bad.len(), shown.join("; ")));
    }
    let mut tz: Vec<Vec3> = res.iter().map(|r| r.0).collect();
    let mut nz: Vec<CVec3> = res.iter().map(|r| r.1).collect();
    // continue linearly into |x| < x_valid from [x_valid, 2 x_valid]
    for positive in [true, false] {
        let fitn: Vec<usize> = (0..n).filter(|&i| {
            let x = if positive { grid.x(i) } else { -grid.x(i) };
            x >= xv && x <= 3.0 * xv
        }).collect();
        if fitn.len() < 2 {
            return invalid("near grid is too coarse for the continuation to x = 0");
        }
        let xs: Vec<f64> = fitn.iter().map(|&i| grid.x(i)).collect();
        let lines_t: Vec<(f64, f64)> = (0..3).map(|c| fit::line(&xs, &fitn.iter().map(|&i| tz[i][c]).collect::<Vec<_>>())).collect();
        let lines_n: Vec<((f64, f64), (f64, f64))> = (0..3)
            .map(|c| {
                (
                    fit::line(&xs, &fitn.iter().map(|&i| nz[i][c].re).collect::<Vec<_>>()),
                    fit::line(&xs, &fitn.iter().map(|&i| nz[i][c].im).collect::<Vec<_>>()),
                )
            })
            .collect();
        for i in 0..n {
            let x = grid.x(i);
            if (x > 0.0) == positive && x.abs() < xv {
                tz[i] = Vec3::from_fn(|c, _| lines_t[c].0 + lines_t[c].1 * x);
                nz[i] = CVec3::from_fn(|c, _| C::new(lines_n[c].0 .0 + lines_n[c].0 .1 * x, lines_n[c].1 .0 + lines_n[c].1 .1 * x));
            }
        }
    }
    let frames: Vec<Frame> = tz.iter().zip(&nz).map(|(t, n)| Frame::from_complex(*t, n).gram_schmidt()).collect();
    let frame = FrameField::from_frames(grid, &frames);
    let curve = curve_from_tangent(&grid, &frame.t, Vec3::zeros(), 0.0)?;
    Ok(TraceAtZero { curve, frame, exponent: res.iter().map(|r| r.2).collect(), spread, x_valid: xv, t_last })
}

impl TraceAtZero {
    pub fn max_spread(&self) -> f64 {
        self.spread.iter().cloned().fold(0.0, f64::max)
    }

    pub fn spread_at(&self, x: f64) -> f64 {
        let g = self.curve.grid;
        let i = (g.coord(x).round().max(0.0) as usize).min(g.len() - 1);
        self.spread[i]
    }
}

// ---------------------------------------------------------------------------
// Rates

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateReport {
    /// (|t|, sup_x |chi(t, x) - chi(0, x)| / sqrt|t|) on every rung.
    pub c: Vec<(f64, f64)>,
    /// Largest relative deviation of C from its mean over the last three rungs.
    pub c_spread: f64,
    pub x_fixed: f64,
    /// Exponent p of |T(t, x_fixed) - T(0, x_fixed)| ~ |t|^p.
    pub exponent: f64,
}

/// `t_fit_max` bounds the rungs used for the exponent fit.
pub fn rate_report(traj: &FlowTrajectory, trace: &TraceAtZero, x_fixed: f64, t_fit_max: f64) -> Result<RateReport> {
    let grid = trace.curve.grid;
    if traj.slices.len() < 3 {
        return invalid("need at least three slices");
    }
    let ix = (0..grid.len()).min_by(|&i, &j| (grid.x(i) - x_fixed).abs().total_cmp(&(grid.x(j) - x_fixed).abs())).unwrap_or(0);
    let mut c = Vec::new();
    let mut fx = Vec::new();
    let mut fy = Vec::new();
    for s in &traj.slices {
        if !s.grid().same_as(&grid) {
            return invalid("trajectory and trace use different grids");
        }
        let at = s.t.abs();
        let sup = s.curve.points.iter().zip(&trace.curve.points).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        c.push((at, sup / at.sqrt()));
        if at <= t_fit_max {
            fx.push(at);
            fy.push((s.frame.t[ix] - trace.frame.t[ix]).norm());
        }
    }
    let last: Vec<f64> = c[c.len() - 3..].iter().map(|p| p.1).collect();
    let mean = last.iter().sum::<f64>() / 3.0;
    let c_spread = last.iter().map(|v| (v - mean).abs() / mean).fold(0.0, f64::max);
    if fx.len() < 3 {
        return invalid("fewer than three rungs below t_fit_max");
    }
    let exponent = fit::power_law(&fx, &fy).1;
    Ok(RateReport { c, c_spread, x_fixed: grid.x(ix), exponent })
}

// ---------------------------------------------------------------------------
// Far field

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// q in |f| ~ x^{-q}, from bin maxima over the outer decade.
    pub exponent: f64,
    /// Two standard errors.
    pub half_width: f64,
    pub bins: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FarFieldReport {
    pub t1: f64,
    pub t2: f64,
    pub chi_diff: DecayFit,
    pub t_diff: DecayFit,
    /// |T(t1, x) - T^inf| with T^inf read from the corrected tangent near the edge.
    pub t_inf: DecayFit,
}

fn decay_fit(grid: &Grid1D, f: &[f64], lo: f64, hi: f64, bins: usize) -> DecayFit {
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    for b in 0..bins {
        let x0 = lo * (hi / lo).powf(b as f64 / bins as f64);
        let x1 = lo * (hi / lo).powf((b + 1) as f64 / bins as f64);
        let m = (0..grid.len()).filter(|&i| {
            let x = grid.x(i).abs();
            x >= x0 && x < x1
        }).map(|i| f[i]).fold(0.0, f64::max);
        if m > 0.0 {
            bx.push((x0 * x1).sqrt().ln());
            by.push(m.ln());
        }
    }
    let (_, s, se) = fit::line_se(&bx, &by);
    DecayFit { exponent: -s, half_width: 2.0 * se, bins: bx.len() }
}

/// Decay of chi(t1) - chi(t2), T(t1) - T(t2) and T(t1) - T^inf over
/// 4 <= |x| <= 40 (T^inf from the last 10% of each side).
pub fn far_field_check(traj: &FlowTrajectory, t1: f64, t2: f64) -> Result<FarFieldReport> {
    let s1 = traj.slice_at(t1).ok_or_else(|| crate::Error::Invalid(format!("no slice at t = {t1}")))?;
    let s2 = traj.slice_at(t2).ok_or_else(|| crate::Error::Invalid(format!("no slice at t = {t2}")))?;
    let grid = *s1.grid();
    if grid.last() < 40.0 - grid.h() || grid.first() > -40.0 + grid.h() {
        return invalid("far-field check needs a grid half width of at least 40");
    }
    let n = grid.len();
    let dchi: Vec<f64> = (0..n).map(|i| (s1.curve.points[i] - s2.curve.points[i]).norm()).collect();
    let dt: Vec<f64> = (0..n).map(|i| (s1.frame.t[i] - s2.frame.t[i]).norm()).collect();
    let a = traj.a;
    let q = |i: usize| corrected_tangent(s1, i, a);
    let edge = 0.9 * grid.last();
    let mean = |pos: bool| -> Vec3 {
        let idx: Vec<usize> = (0..n).filter(|&i| if pos { grid.x(i) >= edge } else { grid.x(i) <= -edge }).collect();
        (idx.iter().map(|&i| q(i)).sum::<Vec3>() / idx.len() as f64).normalize()
    };
    let (tp, tm) = (mean(true), mean(false));
    let dinf: Vec<f64> = (0..n).map(|i| (s1.frame.t[i] - if grid.x(i) > 0.0 { tp } else { tm }).norm()).collect();
    Ok(FarFieldReport {
        t1,
        t2,
        chi_diff: decay_fit(&grid, &dchi, 4.0, 40.0, 10),
        t_diff: decay_fit(&grid, &dt, 4.0, 40.0, 10),
        t_inf: decay_fit(&grid, &dinf, 4.0, 0.8 * grid.last(), 10),
    })
}

// ---------------------------------------------------------------------------
// Weak forms

/// Separable test function phi(t, x) = theta(t) xi(x).
pub trait TestFunction: Sync {
    /// (theta, theta').
    fn time(&self, t: f64) -> [f64; 2];
    /// (xi, xi', xi'').
    fn space(&self, x: f64) -> [f64; 3];
    /// ((t_lo, t_hi), (x_lo, x_hi)) containing the support.
    fn support(&self) -> ((f64, f64), (f64, f64));
}

/// eta((t - t_c)/t_w) eta((x - x_c)/x_w) (1 + slope x), eta(s) = exp(-1/(1 - s^2)).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BumpTest {
    pub t_c: f64,
    pub t_w: f64,
    pub x_c: f64,
    pub x_w: f64,
    pub slope: f64,
}

fn eta(s: f64) -> [f64; 3] {
    if s.abs() >= 1.0 {
        return [0.0; 3];
    }
    let q = 1.0 - s * s;
    let e = (-1.0 / q).exp();
    let g = -2.0 * s / (q * q);
    let dg = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
    [e, e * g, e * (g * g + dg)]
}

impl TestFunction for BumpTest {
    fn time(&self, t: f64) -> [f64; 2] {
        let e = eta((t - self.t_c) / self.t_w);
        [e[0], e[1] / self.t_w]
    }

    fn space(&self, x: f64) -> [f64; 3] {
        let e = eta((x - self.x_c) / self.x_w);
        let p = 1.0 + self.slope * x;
        let w = self.x_w;
        [e[0] * p, e[1] / w * p + e[0] * self.slope, e[2] / (w * w) * p + 2.0 * e[1] / w * self.slope]
    }

    fn support(&self) -> ((f64, f64), (f64, f64)) {
        ((self.t_c - self.t_w, self.t_c + self.t_w), (self.x_c - self.x_w, self.x_c + self.x_w))
    }
}

/// The zero test function.
pub struct ZeroTest;

impl TestFunction for ZeroTest {
    fn time(&self, _: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn space(&self, _: f64) -> [f64; 3] {
        [0.0; 3]
    }

    fn support(&self) -> ((f64, f64), (f64, f64)) {
        ((0.0, 0.0), (0.0, 0.0))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WeakResidual {
    /// |int chi_t phi - int (chi_x ^ chi_xx) phi|.
    pub binormal: f64,
    /// |int T phi_t - int (T ^ T_x) phi_x|.
    pub tangent: f64,
    /// int |phi| + |phi_t| + |phi_x| over the plane.
    pub norm: f64,
}

impl WeakResidual {
    pub fn relative(&self) -> f64 {
        if self.norm > 0.0 {
            self.binormal.max(self.tangent) / self.norm
        } else {
            0.0
        }
    }
}

/// Residuals of the weak forms over one or two trajectories (t > 0 and
/// t < 0), each on a ladder uniform in log|t|. chi_t is moved onto theta'
/// and the oscillatory T ^ T_x enters through its running integral K, so
/// every x-integral is of a smooth function:
///   int chi_t phi - int (T^T_x) phi     = -int theta' <chi, xi>  + int theta <K, xi'>
///   int T phi_t   - int (T^T_x) phi_x   = -int theta' <chi, xi'> + int theta <K, xi''>
/// The moments <., .> are smooth in log|t|; they are interpolated (six
/// points) between rungs and integrated against theta on a fine grid. Below
/// the last rung they are continued as alpha + beta sqrt|t|.
pub fn weak_residual(sides: &[&FlowTrajectory], phi: &dyn TestFunction) -> Result<WeakResidual> {
    let ((tl, th), (xl, xh)) = phi.support();
    if tl == th || xl == xh {
        return Ok(WeakResidual { binormal: 0.0, tangent: 0.0, norm: 0.0 });
    }
    if !(tl > -1.0 && th < 1.0) {
        return invalid("test function must be supported in -1 < t < 1");
    }
    let mut rb = Vec3::zeros();
    let mut rt = Vec3::zeros();
    for side in [1.0, -1.0] {
        let (lo, hi) = if side > 0.0 { (tl.max(0.0), th.max(0.0)) } else { (-th.min(0.0), -tl.min(0.0)) };
        if lo == hi {
            continue;
        }
        let traj = sides.iter().find(|tr| tr.slices.first().is_some_and(|s| s.t * side > 0.0)).ok_or_else(|| {
            crate::Error::Invalid(format!(
                "no trajectory covers the {} times of the support",
                if side > 0.0 { "positive" } else { "negative" }
            ))
        })?;
        let sl = &traj.slices;
        let grid = *sl[0].grid();
        if xl < grid.first() + 2.0 * grid.h() || xh > grid.last() - 2.0 * grid.h() {
            return invalid(format!("test function support [{xl}, {xh}] touches the grid boundary"));
        }
        let m = sl.len();
        let lt: Vec<f64> = sl.iter().map(|s| s.t.abs().ln()).collect();
        if m < 6 || lt.windows(2).any(|w| ((w[0] - w[1]) - (lt[0] - lt[1])).abs() > 1e-9) {
            return invalid("trajectory must be uniform in log|t| with at least six slices");
        }
        let (t_top, t_bot) = (sl[0].t.abs(), sl[m - 1].t.abs());
        if hi > t_top * (1.0 + 1e-12) {
            return invalid(format!("test function reaches |t| = {hi} beyond the trajectory"));
        }
        let xi: Vec<[f64; 3]> = (0..grid.len()).map(|i| phi.space(grid.x(i))).collect();
        let h = grid.h();
        // moments per slice: <chi, xi>, <K, xi'>, <chi, xi'>, <K, xi''>
        let mom: Vec<[Vec3; 4]> = sl
            .par_iter()
            .map(|s| {
                let mut acc = [Vec3::zeros(); 4];
                for (i, w) in xi.iter().enumerate() {
                    let (c, k) = (s.curve.points[i], s.kb_cum[i]);
                    acc[0] += c * (w[0] * h);
                    acc[1] += k * (w[1] * h);
                    acc[2] += c * (w[1] * h);
                    acc[3] += k * (w[2] * h);
                }
                acc
            })
            .collect();
        let tail_fit: Vec<[(Vec3, Vec3); 4]> = vec![std::array::from_fn(|q| {
            let ts: Vec<f64> = sl[m - 3..].iter().map(|s| s.t.abs().sqrt()).collect();
            let mut al = Vec3::zeros();
            let mut be = Vec3::zeros();
            for c in 0..3 {
                let ys: Vec<f64> = (m - 3..m).map(|j| mom[j][q][c]).collect();
                let (a0, b0) = fit::line(&ts, &ys);
                al[c] = a0;
                be[c] = b0;
            }
            (al, be)
        })];
        let moment_at = |tau: f64| -> [Vec3; 4] {
            if tau <= t_bot {
                let r = tau.sqrt();
                return std::array::from_fn(|q| tail_fit[0][q].0 + tail_fit[0][q].1 * r);
            }
            let r = (lt[0] - tau.ln()) / (lt[0] - lt[1]);
            let j = (r.floor() as isize).clamp(2, m as isize - 4);
            let mut out = [Vec3::zeros(); 4];
            for k in -2..=3isize {
                let mut w = 1.0;
                for q in -2..=3isize {
                    if q != k {
                        w *= (r - (j + q) as f64) / (k - q) as f64;
                    }
                }
                for (o, v) in out.iter_mut().zip(&mom[(j + k) as usize]) {
                    *o += v * w;
                }
            }
            out
        };
        // composite Gauss-Legendre in |t| on [lo, hi]
        let panels = 400;
        let gl = [(-0.861_136_311_594_052_6, 0.347_854_845_137_453_9), (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1), (0.861_136_311_594_052_6, 0.347_854_845_137_453_9)];
        let dp = (hi - lo) / panels as f64;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * dp;
            for (z, wq) in gl {
                let tau = mid + 0.5 * dp * z;
                let w = 0.5 * dp * wq;
                let th = phi.time(side * tau);
                let mo = moment_at(tau);
                // d/dt = side d/dtau on this side; the t-measure is |dt| = dtau
                rb += (-mo[0] * th[1] + mo[1] * th[0]) * w;
                rt += (-mo[2] * th[1] + mo[3] * th[0]) * w;
            }
        }
    }
    Ok(WeakResidual { binormal: rb.norm(), tangent: rt.norm(), norm: test_norm(phi) })
}

/// int |phi| + |phi_t| + |phi_x| by a 400 x 400 midpoint rule on the support.
pub fn test_norm(phi: &dyn TestFunction) -> f64 {
    let ((tl, th), (xl, xh)) = phi.support();
    let n = 400;
    let (ht, hx) = ((th - tl) / n as f64, (xh - xl) / n as f64);
    let ts: Vec<[f64; 2]> = (0..n).map(|i| phi.time(tl + (i as f64 + 0.5) * ht)).collect();
    let xs: Vec<[f64; 3]> = (0..n).map(|j| phi.space(xl + (j as f64 + 0.5) * hx)).collect();
    let mut acc = 0.0;
    for a in &ts {
        for b in &xs {
            acc += (a[0] * b[0]).abs() + (a[1] * b[0]).abs() + (a[0] * b[1]).abs();
        }
    }
    acc * ht * hx
}
