//! Split-step solver for i v_t + v_xx + (|v|^2 - a^2) v / 2t = 0 on a periodic
//! grid, its energy, and the X^gamma / Y^gamma norms.
//!
//! Fourier convention: f^(xi) = int f(x) e^{-i xi x} dx, inverse with 1/2pi.

use crate::error::{invalid, Result};
use crate::geometry::{Grid1D, Layout};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Pointwise loops go parallel above this many nodes.
const PAR_MIN: usize = 1 << 15;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralField {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
    pub time: f64,
    #[serde(skip)]
    coeffs: OnceLock<Vec<Complex64>>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values && self.time == other.time
    }
}

/// Angular wavenumbers in FFT order.
pub fn wavenumbers(grid: &Grid1D) -> Vec<f64> {
    let n = grid.len();
    let dk = 2.0 * PI / (grid.x_max - grid.x_min);
    (0..n)
        .map(|k| if k < n.div_ceil(2) { k as f64 * dk } else { (k as f64 - n as f64) * dk })
        .collect()
}

fn check_periodic(grid: &Grid1D) -> Result<()> {
    if grid.layout != Layout::Periodic {
        return invalid("spectral fields need a periodic grid");
    }
    Ok(())
}

impl SpectralField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>, time: f64) -> Result<Self> {
        check_periodic(&grid)?;
        if values.len() != grid.len() {
            return invalid(format!("{} values for a grid of {} nodes", values.len(), grid.len()));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return invalid("spectral field has non-finite values");
        }
        Ok(Self { grid, values, time, coeffs: OnceLock::new() })
    }

    pub fn from_fn(grid: Grid1D, time: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.xs().into_iter().map(f).collect();
        Self::new(grid, values, time)
    }

    pub fn xi(&self) -> Vec<f64> {
        wavenumbers(&self.grid)
    }

    /// Unnormalized DFT of the samples, computed once.
    pub fn coefficients(&self) -> &[Complex64] {
        self.coeffs.get_or_init(|| {
            let mut buf = self.values.clone();
            FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
            buf
        })
    }

    /// Samples of f^(xi_k) in the continuous convention, FFT order.
    pub fn transform(&self) -> Vec<Complex64> {
        let h = self.grid.h();
        let x0 = self.grid.x_min;
        self.coefficients()
            .iter()
            .zip(self.xi())
            .map(|(c, k)| c * Complex64::from_polar(h, -k * x0))
            .collect()
    }

    pub fn from_transform(grid: Grid1D, fhat: &[Complex64], time: f64) -> Result<Self> {
        check_periodic(&grid)?;
        if fhat.len() != grid.len() {
            return invalid("transform length does not match the grid");
        }
        let h = grid.h();
        let n = grid.len() as f64;
        let x0 = grid.x_min;
        let mut buf: Vec<Complex64> = fhat
            .iter()
            .zip(wavenumbers(&grid))
            .map(|(f, k)| f * Complex64::from_polar(1.0 / (h * n), k * x0))
            .collect();
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
        Self::new(grid, buf, time)
    }

    pub fn l2(&self) -> f64 {
        (self.grid.h() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// |h sum |f|^2 - (h/n) sum |F|^2| relative to the first.
    pub fn parseval_defect(&self) -> f64 {
        let h = self.grid.h();
        let n = self.grid.len() as f64;
        let direct = h * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let spec = h / n * self.coefficients().iter().map(|z| z.norm_sqr()).sum::<f64>();
        (direct - spec).abs() / direct.max(f64::MIN_POSITIVE)
    }

    /// k-th spectral derivative.
    pub fn derivative(&self, k: u32) -> SpectralField {
        let ik: Vec<Complex64> = self.xi().iter().map(|x| Complex64::new(0.0, *x).powu(k)).collect();
        let n = self.grid.len() as f64;
        let mut buf: Vec<Complex64> = self.coefficients().iter().zip(&ik).map(|(c, m)| c * m / n).collect();
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
        SpectralField { grid: self.grid, values: buf, time: self.time, coeffs: OnceLock::new() }
    }

    pub fn scaled(&self, s: Complex64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            values: self.values.iter().map(|z| z * s).collect(),
            time: self.time,
            coeffs: OnceLock::new(),
        }
    }

    /// Copy onto a larger periodic grid with the same spacing whose nodes
    /// contain these; zero elsewhere.
    pub fn embed_into(&self, grid: &Grid1D) -> Result<SpectralField> {
        check_periodic(grid)?;
        let h = self.grid.h();
        if (grid.h() / h - 1.0).abs() > 1e-12 {
            return invalid("embedding needs equal grid spacings");
        }
        let off = (self.grid.x_min - grid.x_min) / h;
        if (off - off.round()).abs() > 1e-9 || off < -0.5 || off.round() as usize + self.grid.len() > grid.len() {
            return invalid("the small grid is not a run of nodes of the large one");
        }
        let off = off.round() as usize;
        let mut v = vec![Complex64::new(0.0, 0.0); grid.len()];
        v[off..off + self.grid.len()].copy_from_slice(&self.values);
        SpectralField::new(*grid, v, self.time)
    }

    /// Value at an arbitrary node index offset (periodic wrap).
    pub fn node(&self, i: isize) -> Complex64 {
        let n = self.grid.len() as isize;
        self.values[i.rem_euclid(n) as usize]
    }
}

/// Planned transforms and the dispersion table for one grid.
pub struct Stepper {
    grid: Grid1D,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    xi2: Vec<f64>,
    window: Option<Vec<f64>>,
}

impl Stepper {
    pub fn new(grid: &Grid1D) -> Result<Self> {
        check_periodic(grid)?;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.len());
        let inv = planner.plan_fft_inverse(grid.len());
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Ok(Self {
            grid: *grid,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); len],
            xi2: wavenumbers(grid).iter().map(|k| k * k).collect(),
            window: None,
        })
    }

    /// Damp u = v - a toward the ends of the periodic box: the outer
    /// `fraction` of each half is a smooth cos^2 ramp.
    pub fn with_window(mut self, fraction: f64) -> Self {
        let half = 0.5 * (self.grid.x_max - self.grid.x_min);
        let mid = 0.5 * (self.grid.x_max + self.grid.x_min);
        let start = half * (1.0 - fraction);
        self.window = Some(
            self.grid
                .xs()
                .into_iter()
                .map(|x| {
                    let d = (x - mid).abs();
                    if d <= start {
                        1.0
                    } else {
                        let r = ((d - start) / (half - start)).min(1.0);
                        (0.5 * PI * r).cos().powi(2)
                    }
                })
                .collect(),
        );
        self
    }

    fn nonlinear(v: &mut [Complex64], delta: f64, a: f64) {
        let a2 = a * a;
        let f = |z: &mut Complex64| *z *= Complex64::from_polar(1.0, delta * (z.norm_sqr() - a2));
        if v.len() >= PAR_MIN {
            v.par_iter_mut().for_each(f);
        } else {
            v.iter_mut().for_each(f);
        }
    }

    /// Exact free propagation e^{i dt d_xx}: multiplies mode xi by e^{-i xi^2 dt}.
    pub fn linear(&mut self, v: &mut [Complex64], dt: f64) {
        self.fwd.process_with_scratch(v, &mut self.scratch);
        let inv_n = 1.0 / v.len() as f64;
        let xi2 = &self.xi2;
        let f = |(z, k2): (&mut Complex64, &f64)| *z *= Complex64::from_polar(inv_n, -k2 * dt);
        if v.len() >= PAR_MIN {
            v.par_iter_mut().zip(xi2.par_iter()).for_each(f);
        } else {
            v.iter_mut().zip(xi2.iter()).for_each(f);
        }
        self.inv.process_with_scratch(v, &mut self.scratch);
    }

    fn apply_window(&self, v: &mut [Complex64], a: f64) {
        if let Some(w) = &self.window {
            let ac = Complex64::new(a, 0.0);
            let f = |(z, w): (&mut Complex64, &f64)| *z = ac + (*z - ac) * *w;
            if v.len() >= PAR_MIN {
                v.par_iter_mut().zip(w.par_iter()).for_each(f);
            } else {
                v.iter_mut().zip(w.iter()).for_each(f);
            }
        }
    }

    /// One Strang step from t to t + dt (dt may be negative). The 1/2t
    /// coefficient is integrated exactly: each nonlinear half carries
    /// Delta = ln(t_end / t_start) / 2.
    pub fn step(&mut self, v: &mut [Complex64], t: f64, dt: f64, a: f64) -> Result<()> {
        check_step(t, dt)?;
        let tm = t + 0.5 * dt;
        Self::nonlinear(v, 0.5 * (tm / t).ln(), a);
        self.linear(v, dt);
        Self::nonlinear(v, 0.5 * ((t + dt) / tm).ln(), a);
        self.apply_window(v, a);
        Ok(())
    }
}

fn check_step(t: f64, dt: f64) -> Result<()> {
    if !(t > 0.0 && t + dt > 0.0) {
        return invalid(format!("step from t = {t} by dt = {dt} leaves t > 0"));
    }
    if !(dt.abs() <= t / 10.0 * (1.0 + 1e-12)) {
        return invalid(format!("|dt| = {} exceeds t/10 = {}", dt.abs(), t / 10.0));
    }
    Ok(())
}

pub fn step(v: &SpectralField, t: f64, dt: f64, a: f64) -> Result<SpectralField> {
    if (v.time - t).abs() > 1e-12 * t.abs().max(1.0) {
        return invalid(format!("field is at time {} but the step starts at {t}", v.time));
    }
    let mut s = Stepper::new(&v.grid)?;
    let mut vals = v.values.clone();
    s.step(&mut vals, t, dt, a)?;
    SpectralField::new(v.grid, vals, t + dt)
}

/// Plain cubic NLS step (no 1/2t factor): i v_t + v_xx + |v|^2 v = 0.
pub fn step_cubic(v: &SpectralField, dt: f64) -> Result<SpectralField> {
    let mut s = Stepper::new(&v.grid)?;
    let mut vals = v.values.clone();
    let f = |z: &mut Complex64| *z *= Complex64::from_polar(1.0, 0.5 * dt * z.norm_sqr());
    vals.iter_mut().for_each(f);
    s.linear(&mut vals, dt);
    vals.iter_mut().for_each(f);
    SpectralField::new(v.grid, vals, v.time + dt)
}

/// E(t) = int |v_x|^2 - (|v|^2 - a^2)^2 / 4t.
pub fn energy(v: &SpectralField, t: f64, a: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid("energy needs t > 0");
    }
    let vx = v.derivative(1);
    let h = v.grid.h();
    let a2 = a * a;
    Ok(h * v
        .values
        .iter()
        .zip(&vx.values)
        .map(|(z, d)| d.norm_sqr() - (z.norm_sqr() - a2).powi(2) / (4.0 * t))
        .sum::<f64>())
}

/// int (|v|^2 - a^2)^2 / 4t^2, the rate at which E grows along solutions.
pub fn energy_rate(v: &SpectralField, t: f64, a: f64) -> f64 {
    let a2 = a * a;
    v.grid.h() * v.values.iter().map(|z| (z.norm_sqr() - a2).powi(2)).sum::<f64>() / (4.0 * t * t)
}

fn check_gamma(gamma: f64, t0: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return invalid(format!("gamma = {gamma} must lie in (0, 1/4)"));
    }
    if !(t0 > 0.0) {
        return invalid("t0 must be positive");
    }
    Ok(())
}

/// sup over discrete modes with xi^2 <= 1 of |xi|^{2 gamma} |f^(xi)|.
pub fn low_frequency_sup(f: &SpectralField, gamma: f64) -> Result<f64> {
    let xi = f.xi();
    if !xi.iter().any(|k| *k != 0.0 && k * k <= 1.0) {
        return invalid("no nonzero modes with xi^2 <= 1: the domain is too small");
    }
    Ok(f.transform()
        .iter()
        .zip(&xi)
        .filter(|(_, k)| **k * **k <= 1.0 + 1e-12)
        .map(|(z, k)| k.abs().powf(2.0 * gamma) * z.norm())
        .fold(0.0, f64::max))
}

pub fn xgamma_norm(f: &SpectralField, gamma: f64, t0: f64) -> Result<f64> {
    check_gamma(gamma, t0)?;
    let sup = low_frequency_sup(f, gamma)?;
    Ok(f.l2() / t0.powf(0.25) + t0.powf(gamma - 0.5) * sup)
}

/// Sup over the slices with time >= t0, low-frequency term weighted by (t0/t)^{a^2}.
pub fn ygamma_norm(traj: &[SpectralField], gamma: f64, t0: f64, a: f64) -> Result<f64> {
    check_gamma(gamma, t0)?;
    let mut best: Option<f64> = None;
    for g in traj.iter().filter(|g| g.time >= t0) {
        let sup = low_frequency_sup(g, gamma)?;
        let v = g.l2() / t0.powf(0.25) + (t0 / g.time).powf(a * a) * t0.powf(gamma - 0.5) * sup;
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best.ok_or_else(|| crate::Error::Invalid("no slice at or after t0".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBundle {
    pub l2: f64,
    pub hk: [f64; 4],
    pub xgamma: f64,
    pub ygamma: f64,
    pub gamma: f64,
    pub t0: f64,
}

/// Homogeneous Sobolev seminorms ||d^k f||, k = 1..4, by Parseval.
pub fn sobolev_seminorms(f: &SpectralField) -> [f64; 4] {
    let h = f.grid.h();
    let n = f.grid.len() as f64;
    let xi = f.xi();
    let c = f.coefficients();
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let p = 2 * (k as i32 + 1);
        *o = (h / n * c.iter().zip(&xi).map(|(z, x)| x.powi(p) * z.norm_sqr()).sum::<f64>()).sqrt();
    }
    out
}

pub fn norm_bundle(traj: &[SpectralField], gamma: f64, t0: f64, a: f64) -> Result<NormBundle> {
    let first = traj
        .iter()
        .filter(|g| g.time >= t0)
        .min_by(|x, y| x.time.total_cmp(&y.time))
        .ok_or_else(|| crate::Error::Invalid("no slice at or after t0".into()))?;
    Ok(NormBundle {
        l2: first.l2(),
        hk: sobolev_seminorms(first),
        xgamma: xgamma_norm(first, gamma, t0)?,
        ygamma: ygamma_norm(traj, gamma, t0, a)?,
        gamma,
        t0,
    })
}

/// e^{i (a^2/2) log t} e^{i (t - 1) d_xx} phi.
pub fn free_profile(phi: &SpectralField, a: f64, t: f64) -> Result<SpectralField> {
    if !(t > 0.0) {
        return invalid("free profile needs t > 0");
    }
    let mut s = Stepper::new(&phi.grid)?;
    let mut vals = phi.values.clone();
    s.linear(&mut vals, t - 1.0);
    let ph = Complex64::from_polar(1.0, 0.5 * a * a * t.ln());
    vals.iter_mut().for_each(|z| *z *= ph);
    SpectralField::new(phi.grid, vals, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveOperatorOptions {
    /// Geometric ladder ratio t_{k+1}/t_k of the backward march.
    pub dt_ratio: f64,
    pub gamma: f64,
    /// Budget for the input norms and the defect, as a fraction of a.
    pub smallness: f64,
    /// Fraction of each half-box covered by the absorbing ramp; 0 disables it.
    pub window: f64,
    /// Record the defect against the free profile every `defect_every` steps.
    pub defect_every: usize,
}

impl Default for WaveOperatorOptions {
    fn default() -> Self {
        Self { dt_ratio: 2f64.powf(-1.0 / 8.0), gamma: 0.2, smallness: 0.1, window: 0.1, defect_every: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveOperatorRun {
    /// u = v - a at t_target.
    pub u: SpectralField,
    /// sup_t t^{1/4 - gamma - 0.01} ||u(t) - free(t)||.
    pub defect: f64,
    pub defect_series: Vec<(f64, f64)>,
    pub input_norms: Vec<f64>,
    pub flagged: bool,
    pub steps: usize,
}

/// Number of ladder steps and the adjusted ratio landing exactly on t_target.
pub fn ladder(t_far: f64, t_target: f64, ratio: f64) -> (usize, f64) {
    let n = ((t_far / t_target).ln() / (1.0 / ratio).ln() - 1e-9).ceil().max(1.0) as usize;
    (n, (t_target / t_far).powf(1.0 / n as f64))
}

/// Approximate the wave operator: start from the free profile of `phi` at
/// t_far and integrate backward to t_target. `observe` sees u = v - a after
/// every step (and at t_far) with its time.
pub fn wave_operator_approx_with(
    phi: &SpectralField,
    a: f64,
    t_far: f64,
    t_target: f64,
    opts: &WaveOperatorOptions,
    mut observe: impl FnMut(f64, &[Complex64]),
) -> Result<WaveOperatorRun> {
    if !(t_target > 0.0 && t_far >= 100.0 * t_target) {
        return invalid(format!("need t_far >= 100 t_target > 0, got t_far = {t_far}, t_target = {t_target}"));
    }
    if !(opts.dt_ratio > 0.9 && opts.dt_ratio < 1.0) {
        return invalid(format!("dt ratio {} must lie in (0.9, 1) so that |dt| <= t/10", opts.dt_ratio));
    }
    let budget = opts.smallness * a.max(f64::MIN_POSITIVE);
    let mut input_norms = Vec::new();
    let zero = phi.values.iter().all(|z| z.norm() == 0.0);
    if !zero {
        for k in 0..=4 {
            let d = if k == 0 { phi.clone() } else { phi.derivative(k) };
            input_norms.push(xgamma_norm(&d, opts.gamma, 1.0)?);
        }
        if a > 0.0 {
            if let Some((k, v)) = input_norms.iter().enumerate().find(|(_, v)| **v > budget) {
                return invalid(format!(
                    "asymptotic state is not small: X^gamma norm of derivative {k} is {v:.3e} > {budget:.3e}"
                ));
            }
        }
    }
    let free = free_profile(phi, a, t_far)?;
    let (n_steps, r) = ladder(t_far, t_target, opts.dt_ratio);
    let ac = Complex64::new(a, 0.0);
    let mut v: Vec<Complex64> = free.values.iter().map(|u| u + ac).collect();
    let mut stepper = Stepper::new(&phi.grid)?;
    if opts.window > 0.0 {
        stepper = stepper.with_window(opts.window);
    }
    let weight_pow = 0.25 - (opts.gamma + 0.01);
    let mut defect_series = Vec::new();
    let mut u_buf: Vec<Complex64> = v.iter().map(|z| z - ac).collect();
    observe(t_far, &u_buf);
    let mut t = t_far;
    for k in 0..n_steps {
        let t_next = if k + 1 == n_steps { t_target } else { t_far * r.powi(k as i32 + 1) };
        stepper.step(&mut v, t, t_next - t, a)?;
        t = t_next;
        u_buf.iter_mut().zip(&v).for_each(|(u, z)| *u = z - ac);
        observe(t, &u_buf);
        if opts.defect_every > 0 && ((k + 1) % opts.defect_every == 0 || k + 1 == n_steps) {
            let f = free_profile(phi, a, t)?;
            let h = phi.grid.h();
            let d = (h * u_buf.iter().zip(&f.values).map(|(u, w)| (u - w).norm_sqr()).sum::<f64>()).sqrt();
            defect_series.push((t, t.powf(weight_pow) * d));
        }
    }
    let defect = defect_series.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(WaveOperatorRun {
        u: SpectralField::new(phi.grid, u_buf, t_target)?,
        defect,
        defect_series,
        input_norms,
        flagged: defect > budget,
        steps: n_steps,
    })
}

pub fn wave_operator_approx(
    phi: &SpectralField,
    a: f64,
    t_far: f64,
    t_target: f64,
    opts: &WaveOperatorOptions,
) -> Result<WaveOperatorRun> {
    wave_operator_approx_with(phi, a, t_far, t_target, opts, |_, _| {})
}

/// Gaussian asymptotic state eps exp(-x^2 / 2 sigma^2).
pub fn gaussian(grid: &Grid1D, eps: f64, sigma: f64) -> Result<SpectralField> {
    SpectralField::from_fn(*grid, 1.0, |x| Complex64::new(eps * (-x * x / (2.0 * sigma * sigma)).exp(), 0.0))
}

/// Gaussian scaled so that its X^gamma norm (t0 = 1) equals `target`.
pub fn gaussian_with_norm(grid: &Grid1D, target: f64, sigma: f64, gamma: f64) -> Result<SpectralField> {
    let g = gaussian(grid, 1.0, sigma)?;
    let n = xgamma_norm(&g, gamma, 1.0)?;
    Ok(g.scaled(Complex64::new(target / n, 0.0)))
}
