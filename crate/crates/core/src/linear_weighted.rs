//! The linearized equation i w_t + w_xx + a^2 (w + conj w) / 2t = 0 in Fourier
//! modes, the weighted quantity v = J w with J = x + 2it d_x, and the
//! diagonalized amplitudes (Y2, Z2) of the regime t xi^2 >= 4a^2.
//!
//! With w = p + i q (p, q real) each frequency evolves on its own:
//! p^_t = xi^2 q^, q^_t = (a^2/t - xi^2) p^. The transforms P^ = (Re v)^ and
//! Q^ = (Im v)^ obey the same system plus the forcing -2i a^2 xi p^ and
//! 2i a^2 xi q^. Everything below integrates in sigma = ln t.

use crate::error::{invalid, Result};
use crate::nls::{wavenumbers, SpectralField};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// (p^, q^, P^, Q^) at one frequency.
pub type Mode4 = [C; 4];

/// Right-hand side in sigma = ln t.
fn mode_rhs(xi: f64, a: f64, t: f64, y: &Mode4, forced: bool) -> Mode4 {
    let tau = t * xi * xi;
    let a2 = a * a;
    let (f_p, f_q) = if forced { (-2.0 * I * a2 * xi * t * y[0], 2.0 * I * a2 * xi * t * y[1]) } else { (C::new(0.0, 0.0), C::new(0.0, 0.0)) };
    [
        y[1] * tau,
        y[0] * (a2 - tau),
        y[3] * tau + f_p,
        y[2] * (a2 - tau) + f_q,
    ]
}

fn add(y: &Mode4, k: &Mode4, s: f64) -> Mode4 {
    [y[0] + k[0] * s, y[1] + k[1] * s, y[2] + k[2] * s, y[3] + k[3] * s]
}

/// Step bound in sigma: resolve the local oscillation frequency t xi^2.
fn sigma_step(xi: f64, t: f64, resolution: f64) -> f64 {
    (resolution / (t * xi * xi).max(1e-300)).min(0.01)
}

/// RK4 march from t_from to t_to in ln t. `resolution` bounds t xi^2 dsigma.
pub fn march(xi: f64, a: f64, y0: Mode4, t_from: f64, t_to: f64, forced: bool, resolution: f64) -> Mode4 {
    let (s0, s1) = (t_from.ln(), t_to.ln());
    let mut y = y0;
    let mut s = s0;
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    while (s1 - s) * dir > 1e-14 {
        let t = s.exp();
        // Forward steps grow t by up to e^0.01; size them for the far end.
        let t_hi = if dir > 0.0 { t * 0.01f64.exp() } else { t };
        let h = sigma_step(xi, t_hi, resolution).min((s1 - s).abs()) * dir;
        let k1 = mode_rhs(xi, a, t, &y, forced);
        let tm = (s + 0.5 * h).exp();
        let k2 = mode_rhs(xi, a, tm, &add(&y, &k1, 0.5 * h), forced);
        let k3 = mode_rhs(xi, a, tm, &add(&y, &k2, 0.5 * h), forced);
        let k4 = mode_rhs(xi, a, (s + h).exp(), &add(&y, &k3, h), forced);
        for j in 0..4 {
            y[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        s += h;
    }
    y
}

/// March through an ordered list of times, returning the state at each.
pub fn march_record(xi: f64, a: f64, y0: Mode4, t0: f64, times: &[f64], forced: bool, resolution: f64) -> Vec<Mode4> {
    let mut out = Vec::with_capacity(times.len());
    let (mut y, mut t) = (y0, t0);
    for &tn in times {
        y = march(xi, a, y, t, tn, forced, resolution);
        t = tn;
        out.push(y);
    }
    out
}

pub const DEFAULT_RESOLUTION: f64 = 0.02;

/// S(t1, t0) applied to omega0 mode by mode. For a = 0 the free phases are
/// applied exactly.
pub fn evolve_linear(omega0: &SpectralField, a: f64, t0: f64, t1: f64) -> Result<SpectralField> {
    evolve_linear_with(omega0, a, t0, t1, DEFAULT_RESOLUTION)
}

pub fn evolve_linear_with(omega0: &SpectralField, a: f64, t0: f64, t1: f64, resolution: f64) -> Result<SpectralField> {
    if !(t0 > 0.0 && t1 > 0.0) {
        return invalid("evolve_linear needs positive times");
    }
    let n = omega0.grid.len();
    let xi = wavenumbers(&omega0.grid);
    let c = omega0.coefficients().to_vec();
    let out: Vec<C> = (0..n)
        .into_par_iter()
        .map(|k| {
            if a == 0.0 {
                return c[k] * C::from_polar(1.0, -xi[k] * xi[k] * (t1 - t0));
            }
            let km = (n - k) % n;
            let p = (c[k] + c[km].conj()) * 0.5;
            let q = (c[k] - c[km].conj()) / (2.0 * I);
            let y = march(xi[k], a, [p, q, C::new(0.0, 0.0), C::new(0.0, 0.0)], t0, t1, false, resolution);
            y[0] + I * y[1]
        })
        .collect();
    let mut buf = out;
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= inv_n);
    SpectralField::new(omega0.grid, buf, t1)
}

/// Transforms of Re w, Im w, Re v, Im v at +xi (slot 0) and -xi (slot 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub xi: f64,
    pub t: f64,
    pub what_re: [C; 2],
    pub what_im: [C; 2],
    pub vhat_re: [C; 2],
    pub vhat_im: [C; 2],
}

impl ModeState {
    pub fn slot(&self, k: usize) -> Mode4 {
        [self.what_re[k], self.what_im[k], self.vhat_re[k], self.vhat_im[k]]
    }

    pub fn from_slots(xi: f64, t: f64, plus: Mode4, minus: Mode4) -> Self {
        Self {
            xi,
            t,
            what_re: [plus[0], minus[0]],
            what_im: [plus[1], minus[1]],
            vhat_re: [plus[2], minus[2]],
            vhat_im: [plus[3], minus[3]],
        }
    }

    pub fn omega_hat(&self, k: usize) -> C {
        self.what_re[k] + I * self.what_im[k]
    }

    pub fn vhat(&self, k: usize) -> C {
        self.vhat_re[k] + I * self.vhat_im[k]
    }

    /// Transforms of real fields satisfy f^(-xi) = conj f^(xi).
    pub fn conj_symmetry_defect(&self) -> f64 {
        [
            (self.what_re[1] - self.what_re[0].conj()).norm(),
            (self.what_im[1] - self.what_im[0].conj()).norm(),
            (self.vhat_re[1] - self.vhat_re[0].conj()).norm(),
            (self.vhat_im[1] - self.vhat_im[0].conj()).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Initial state at time t from w^ and its xi-derivative, with v = J(t) w.
    pub fn from_datum(xi: f64, t: f64, what: impl Fn(f64) -> C, dwhat: impl Fn(f64) -> C) -> Self {
        let slot = |x: f64| -> Mode4 {
            let (w, wm) = (what(x), what(-x));
            let (d, dm) = (dwhat(x), dwhat(-x));
            let p = (w + wm.conj()) * 0.5;
            let q = (w - wm.conj()) / (2.0 * I);
            let dp = (d - dm.conj()) * 0.5;
            let dq = (d + dm.conj()) / (2.0 * I);
            let big_p = I * dp - 2.0 * I * t * x * q;
            let big_q = I * dq + 2.0 * I * t * x * p;
            [p, q, big_p, big_q]
        };
        Self::from_slots(xi, t, slot(xi), slot(-xi))
    }
}

/// Evolve w and v = J w together from `state.t` through `times`.
pub fn evolve_j(state: &ModeState, a: f64, times: &[f64], resolution: f64) -> Vec<ModeState> {
    let plus = march_record(state.xi, a, state.slot(0), state.t, times, true, resolution);
    let minus = march_record(-state.xi, a, state.slot(1), state.t, times, true, resolution);
    times
        .iter()
        .zip(plus.iter().zip(&minus))
        .map(|(t, (p, m))| ModeState::from_slots(state.xi, *t, *p, *m))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorCheck {
    pub xi: f64,
    pub a: f64,
    pub times: Vec<f64>,
    /// Relative residual per time, worst of the two slots.
    pub residual: Vec<f64>,
}

impl CommutatorCheck {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }
}

/// J(t)w(t) against S(t,1)[J(1)w(1) + F^{-1}((2a^2/xi) p^(1))] - F^{-1}((2a^2/xi) p^(t)).
/// The left side comes from the forced system, the bracket is propagated by
/// a separate homogeneous run.
pub fn commutator_check(state: &ModeState, a: f64, times: &[f64], resolution: f64) -> CommutatorCheck {
    let traj = evolve_j(state, a, times, resolution);
    let mut residual = vec![0.0f64; times.len()];
    for (k, sgn) in [(0usize, 1.0), (1, -1.0)] {
        let xi = sgn * state.xi;
        let c = 2.0 * a * a / xi;
        let y0 = state.slot(k);
        // W = v + F^{-1}(c p^): Re-part transform P^, Im-part transform Q^ - i c p^.
        let w0: Mode4 = [y0[2], y0[3] - I * c * y0[0], C::new(0.0, 0.0), C::new(0.0, 0.0)];
        let sw = march_record(xi, a, w0, state.t, times, false, resolution);
        for (j, m) in traj.iter().enumerate() {
            let y = m.slot(k);
            let lhs = y[2] + I * y[3];
            let rhs = sw[j][0] + I * sw[j][1] - c * y[0];
            let scale = lhs.norm() + (c * y[0]).norm() + 1e-300;
            residual[j] = residual[j].max((lhs - rhs).norm() / scale);
        }
    }
    CommutatorCheck { xi: state.xi, a, times: times.to_vec(), residual }
}

/// Residual of (Re v)^_tt = xi^2 (a^2/t - xi^2) (Re v)^ at t by the
/// five-point second difference, relative to |f| xi^2 (xi^2 + a^2/t).
pub fn second_order_residual(state: &ModeState, a: f64, t: f64, resolution: f64) -> f64 {
    let xi = state.xi;
    let dt = 0.05 * (1.0 / (xi * xi)).min(1.0).min(t / 10.0);
    let times: Vec<f64> = (-2..=2).map(|k| t + k as f64 * dt).collect();
    let traj = evolve_j(state, a, &times, resolution);
    let f: Vec<C> = traj.iter().map(|m| m.vhat_re[0]).collect();
    let fd = (-f[0] + f[1] * 16.0 - f[2] * 30.0 + f[3] * 16.0 - f[4]) / (12.0 * dt * dt);
    let rhs = f[2] * (xi * xi * (a * a / t - xi * xi));
    (fd - rhs).norm() / (f[2].norm() * xi * xi * (xi * xi + a * a / t) + 1e-300)
}

pub fn alpha(tau: f64, a: f64) -> f64 {
    (1.0 - a * a / tau).sqrt()
}

pub fn psi_tilde(tau: f64, a: f64) -> f64 {
    tau - 0.5 * a * a * tau.ln()
}

/// int_tau^inf (alpha(s) - 1 + a^2/2s) ds in closed form.
pub fn psi_tail_closed(tau: f64, a: f64) -> f64 {
    let a2 = a * a;
    let r = (tau - a2).sqrt();
    let f = (tau * (tau - a2)).sqrt() - a2 * (tau.sqrt() + r).ln() - tau + 0.5 * a2 * tau.ln();
    -0.5 * a2 - a2 * 2f64.ln() - f
}

/// The same integral by Gauss-Legendre quadrature in ln s up to 1e6 tau,
/// plus the tail -a^4 / 8 s_max.
pub fn psi_tail_quadrature(tau: f64, a: f64) -> f64 {
    const X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let a2 = a * a;
    // sqrt(1-x) - 1 + x/2 = -x^2 / 2(1 + sqrt(1-x))^2, free of cancellation.
    let g = |s: f64| {
        let x = a2 / s;
        let r = (1.0 - x).sqrt();
        -x * x / (2.0 * (1.0 + r) * (1.0 + r))
    };
    let s_max = 1e6 * tau.max(a2);
    // Near tau = a^2 the integrand has a square-root edge: substitute s = a^2 + r^2.
    let mut total = 0.0;
    let mut lo = tau;
    let edge = (4.0 * a2).max(tau);
    if tau < edge {
        let (r0, r1) = ((tau - a2).max(0.0).sqrt(), (edge - a2).sqrt());
        let n = 200;
        let dr = (r1 - r0) / n as f64;
        for k in 0..n {
            let m = r0 + (k as f64 + 0.5) * dr;
            for (x, w) in X.iter().zip(W) {
                let r = m + 0.5 * dr * x;
                total += 0.5 * dr * w * g(a2 + r * r) * 2.0 * r;
            }
        }
        lo = edge;
    }
    let (u0, u1) = (lo.ln(), s_max.ln());
    let n = ((u1 - u0) * 40.0).ceil() as usize;
    let du = (u1 - u0) / n as f64;
    for k in 0..n {
        let m = u0 + (k as f64 + 0.5) * du;
        for (x, w) in X.iter().zip(W) {
            let s = (m + 0.5 * du * x).exp();
            total += 0.5 * du * w * g(s) * s;
        }
    }
    total - a2 * a2 / (8.0 * s_max)
}

pub fn psi_phase(tau: f64, a: f64) -> f64 {
    psi_tilde(tau, a) - psi_tail_closed(tau, a)
}

pub type Mat2 = [[C; 2]; 2];

pub fn m_matrix(tau: f64, a: f64, psi: f64) -> Mat2 {
    let al2 = 1.0 - a * a / tau;
    let k = a * a / (4.0 * tau * tau * al2);
    let e = C::from_polar(k, 2.0 * psi);
    [[C::new(-k, 0.0), e.conj()], [e, C::new(-k, 0.0)]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseData {
    pub tau: f64,
    pub alpha: f64,
    pub psi: f64,
    pub psi_tilde: f64,
    pub m: Mat2,
}

pub fn phase_data(tau: f64, a: f64) -> Result<PhaseData> {
    if !(tau > a * a) {
        return invalid(format!("tau = {tau} is not above a^2 = {}: alpha would be imaginary", a * a));
    }
    let psi = psi_tilde(tau, a) - psi_tail_quadrature(tau, a);
    Ok(PhaseData { tau, alpha: alpha(tau, a), psi, psi_tilde: psi_tilde(tau, a), m: m_matrix(tau, a, psi) })
}

pub fn matrix_norm(m: &Mat2) -> f64 {
    m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// (Y2, Z2) from (p^, q^) at tau = t xi^2 >= 4a^2.
pub fn diagonalize(p: C, q: C, phase: &PhaseData, a: f64) -> Result<(C, C)> {
    if phase.tau < 4.0 * a * a * (1.0 - 1e-12) {
        return invalid(format!("tau = {} is below the diagonalization regime 4a^2", phase.tau));
    }
    let e = C::from_polar(1.0, phase.psi);
    let y = e.conj() * (p - I * q / phase.alpha) * 0.5;
    let z = e * (p + I * q / phase.alpha) * 0.5;
    Ok((y, z))
}

pub fn undiagonalize(y: C, z: C, phase: &PhaseData) -> (C, C) {
    let e = C::from_polar(1.0, phase.psi);
    let p = e * y + e.conj() * z;
    let q = I * phase.alpha * (e * y - e.conj() * z);
    (p, q)
}

/// Geometric grid on [xi_min, xi_max], mirrored to negative frequencies.
pub fn symmetric_log_grid(xi_min: f64, xi_max: f64, per_decade: usize) -> Vec<f64> {
    let n = (((xi_max / xi_min).log10() * per_decade as f64).ceil() as usize).max(2);
    let pos: Vec<f64> = (0..=n).map(|k| xi_min * (xi_max / xi_min).powf(k as f64 / n as f64)).collect();
    let mut all: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    all.extend(pos);
    all
}

/// (1/2pi) int |f|^2 by the trapezoid rule on a nonuniform grid that skips
/// the gap around 0.
pub fn l2_on_grid(xi: &[f64], f: &[C]) -> f64 {
    let mut s = 0.0;
    for k in 0..xi.len() - 1 {
        if xi[k] < 0.0 && xi[k + 1] > 0.0 {
            continue;
        }
        s += 0.5 * (xi[k + 1] - xi[k]) * (f[k].norm_sqr() + f[k + 1].norm_sqr());
    }
    (s / (2.0 * PI)).sqrt()
}

/// Phi(tau) with d Phi / d tau = M Phi and Phi = I at tau_inf, tabulated
/// from tau_inf down to 4a^2 and interpolated by cubic Hermite.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub a: f64,
    pub tau_inf: f64,
    taus: Vec<f64>,
    phis: Vec<Mat2>,
    dphis: Vec<Mat2>,
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_axpy(a: &Mat2, b: &Mat2, s: f64) -> Mat2 {
    let mut out = *a;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] += b[i][j] * s;
        }
    }
    out
}

const IDENTITY2: Mat2 = [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];

impl Propagator {
    pub fn new(a: f64, tau_inf: f64) -> Self {
        let tau_min = 4.0 * a * a;
        let deriv = |tau: f64, phi: &Mat2| mat_mul(&m_matrix(tau, a, psi_phase(tau, a)), phi);
        let mut taus = vec![tau_inf];
        let mut phis = vec![IDENTITY2];
        let mut dphis = vec![if a > 0.0 { deriv(tau_inf, &IDENTITY2) } else { [[C::new(0.0, 0.0); 2]; 2] }];
        if a > 0.0 {
            let (mut tau, mut phi) = (tau_inf, IDENTITY2);
            let mut last = tau;
            while tau > tau_min * (1.0 + 1e-14) {
                let h = -(0.02f64.min(0.005 * tau)).min(tau - tau_min);
                let k1 = deriv(tau, &phi);
                let k2 = deriv(tau + 0.5 * h, &mat_axpy(&phi, &k1, 0.5 * h));
                let k3 = deriv(tau + 0.5 * h, &mat_axpy(&phi, &k2, 0.5 * h));
                let k4 = deriv(tau + h, &mat_axpy(&phi, &k3, h));
                for i in 0..2 {
                    for j in 0..2 {
                        phi[i][j] += (k1[i][j] + (k2[i][j] + k3[i][j]) * 2.0 + k4[i][j]) * (h / 6.0);
                    }
                }
                tau += h;
                let done = tau <= tau_min * (1.0 + 1e-14);
                if last - tau >= 0.1f64.min(0.02 * tau) || done {
                    taus.push(tau);
                    phis.push(phi);
                    dphis.push(deriv(tau, &phi));
                    last = tau;
                }
            }
        }
        taus.reverse();
        phis.reverse();
        dphis.reverse();
        Self { a, tau_inf, taus, phis, dphis }
    }

    pub fn eval(&self, tau: f64) -> Mat2 {
        if self.a == 0.0 || tau >= self.tau_inf {
            return IDENTITY2;
        }
        let j = match self.taus.binary_search_by(|x| x.total_cmp(&tau)) {
            Ok(j) => return self.phis[j],
            Err(j) => j.clamp(1, self.taus.len() - 1),
        };
        let (t0, t1) = (self.taus[j - 1], self.taus[j]);
        let h = t1 - t0;
        let s = (tau - t0) / h;
        let (h00, h10, h01, h11) = (
            2.0 * s.powi(3) - 3.0 * s * s + 1.0,
            s.powi(3) - 2.0 * s * s + s,
            -2.0 * s.powi(3) + 3.0 * s * s,
            s.powi(3) - s * s,
        );
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                out[i][k] = self.phis[j - 1][i][k] * h00
                    + self.dphis[j - 1][i][k] * (h10 * h)
                    + self.phis[j][i][k] * h01
                    + self.dphis[j][i][k] * (h11 * h);
            }
        }
        out
    }
}

/// An asymptotic state given through its transform.
pub trait AsymptoticState: Sync {
    fn uhat(&self, xi: f64) -> C;
}

impl<F: Fn(f64) -> C + Sync> AsymptoticState for F {
    fn uhat(&self, xi: f64) -> C {
        self(xi)
    }
}

/// u^+ = e^{-xi^2/w^2}, or xi e^{-xi^2/w^2} when `odd`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub width: f64,
    pub odd: bool,
}

impl AsymptoticState for GaussianState {
    fn uhat(&self, xi: f64) -> C {
        let g = (-xi * xi / (self.width * self.width)).exp();
        C::new(if self.odd { xi * g } else { g }, 0.0)
    }
}

/// Y+(xi) = e^{i a^2 log|xi|} conj(u^(-xi)) / 2 and Z+(xi) = e^{-i a^2 log|xi|} u^(xi) / 2.
pub fn asymptotic_amplitudes(u: &dyn AsymptoticState, a: f64, xi: f64) -> (C, C) {
    let ph = C::from_polar(1.0, a * a * xi.abs().ln());
    (ph * u.uhat(-xi).conj() * 0.5, ph.conj() * u.uhat(xi) * 0.5)
}

fn amplitude_derivatives(u: &dyn AsymptoticState, a: f64, xi: f64) -> (C, C) {
    let d = 1e-5 * xi.abs();
    let (yp, zp) = asymptotic_amplitudes(u, a, xi + d);
    let (ym, zm) = asymptotic_amplitudes(u, a, xi - d);
    ((yp - ym) / (2.0 * d), (zp - zm) / (2.0 * d))
}

/// (p^, q^, P^, Q^) at (t, xi) with t xi^2 >= 4a^2 for the solution with
/// asymptotic state `u`: (Y2, Z2) = Phi (Y+, Z+), and the xi-derivatives at
/// fixed tau carried by the same Phi.
pub fn high_regime_state(prop: &Propagator, u: &dyn AsymptoticState, a: f64, t: f64, xi: f64) -> Mode4 {
    let tau = t * xi * xi;
    let phi = prop.eval(tau);
    let (yp, zp) = asymptotic_amplitudes(u, a, xi);
    let (dy, dz) = amplitude_derivatives(u, a, xi);
    let y = phi[0][0] * yp + phi[0][1] * zp;
    let z = phi[1][0] * yp + phi[1][1] * zp;
    let y2 = phi[0][0] * dy + phi[0][1] * dz;
    let z2 = phi[1][0] * dy + phi[1][1] * dz;
    let (al, psi) = if a == 0.0 { (1.0, tau) } else { (alpha(tau, a), psi_phase(tau, a)) };
    let e = C::from_polar(1.0, psi);
    let p = e * y + e.conj() * z;
    let q = I * al * (e * y - e.conj() * z);
    let big_p = I * (e * y2 + e.conj() * z2);
    let big_q = I * (2.0 * a * a / xi) * p - al * (e * y2 - e.conj() * z2);
    [p, q, big_p, big_q]
}

/// v^(t, xi) at each of the increasing `times`; below t xi^2 = 4a^2 the
/// forced mode system is integrated backward from the regime boundary.
pub fn vhat_series(prop: &Propagator, u: &dyn AsymptoticState, a: f64, xi: f64, times: &[f64], resolution: f64) -> Vec<C> {
    let t_sw = if a == 0.0 { 0.0 } else { 4.0 * a * a / (xi * xi) };
    let mut out = vec![C::new(0.0, 0.0); times.len()];
    for (j, &t) in times.iter().enumerate() {
        if t >= t_sw {
            let y = high_regime_state(prop, u, a, t, xi);
            out[j] = y[2] + I * y[3];
        }
    }
    let low: Vec<usize> = (0..times.len()).filter(|&j| times[j] < t_sw).collect();
    if !low.is_empty() {
        let start = high_regime_state(prop, u, a, t_sw, xi);
        let back: Vec<f64> = low.iter().rev().map(|&j| times[j]).collect();
        let states = march_record(xi, a, start, t_sw, &back, true, resolution);
        for (j, y) in low.iter().rev().zip(states) {
            out[*j] = y[2] + I * y[3];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionOptions {
    pub xi_min: f64,
    pub xi_max: f64,
    pub per_decade: usize,
    pub n_times: usize,
    pub resolution: f64,
}

impl Default for ObstructionOptions {
    fn default() -> Self {
        Self { xi_min: 1e-3, xi_max: 8.0, per_decade: 120, n_times: 31, resolution: DEFAULT_RESOLUTION }
    }
}

/// ||J(t) w(t)|| for the solution with asymptotic state `u`, with the
/// frequencies |xi| < xi_min left out.
pub fn norm_series(prop: &Propagator, u: &dyn AsymptoticState, a: f64, times: &[f64], opts: &ObstructionOptions) -> Vec<f64> {
    let xi = symmetric_log_grid(opts.xi_min, opts.xi_max, opts.per_decade);
    let cols: Vec<Vec<C>> = xi.par_iter().map(|&x| vhat_series(prop, u, a, x, times, opts.resolution)).collect();
    (0..times.len())
        .map(|j| {
            let f: Vec<C> = cols.iter().map(|c| c[j]).collect();
            l2_on_grid(&xi, &f)
        })
        .collect()
}

pub fn hdot_norm(u: &dyn AsymptoticState, s: f64, xi_min: f64, xi_max: f64) -> f64 {
    let xi = symmetric_log_grid(xi_min, xi_max, 400);
    let f: Vec<C> = xi.iter().map(|x| u.uhat(*x) * x.abs().powf(s)).collect();
    l2_on_grid(&xi, &f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub a: f64,
    pub times: Vec<f64>,
    pub norm_nonzero: Vec<f64>,
    pub norm_zero: Vec<f64>,
    /// max/min of ||J w|| over the series.
    pub ratio_nonzero: f64,
    pub ratio_zero: f64,
    /// ||J w(1)|| with the cutoff xi_min/10 over the same with xi_min. Near
    /// sqrt(10) when the norm diverges like xi_min^{-1/2}, near 1 when it converges.
    pub cutoff_growth_nonzero: f64,
    pub cutoff_growth_zero: f64,
    /// ||u+||_{H^-1} + ||u+||_{H^{-1-delta}} of the vanishing state, delta = 0.1.
    pub hdot_sum_zero: f64,
    /// Smallest C with ||J w|| <= C (H^-1 + H^{-1-delta}) over the series.
    pub fitted_c: f64,
}

/// ||J(t) w(t)|| over t in [1, t_max] (log-spaced, t = 1 included) for an
/// asymptotic state with u^+(0) != 0 and one with u^+(0) = 0.
pub fn zero_mode_obstruction(
    nonzero: &dyn AsymptoticState,
    zero: &dyn AsymptoticState,
    a: f64,
    t_max: f64,
    opts: &ObstructionOptions,
) -> Result<ObstructionReport> {
    if !(t_max > 1.0) || opts.n_times < 2 {
        return invalid("obstruction series needs t_max > 1 and at least two times");
    }
    if zero.uhat(0.0).norm() > 1e-12 {
        return invalid("the vanishing state must have u^+(0) = 0");
    }
    let times: Vec<f64> = (0..opts.n_times).map(|k| t_max.powf(k as f64 / (opts.n_times - 1) as f64)).collect();
    let tau_inf = (2.0 * t_max * opts.xi_max * opts.xi_max).max(1e4);
    let prop = Propagator::new(a, tau_inf);
    let norm_nonzero = norm_series(&prop, nonzero, a, &times, opts);
    let norm_zero = norm_series(&prop, zero, a, &times, opts);
    let fine = ObstructionOptions { xi_min: opts.xi_min / 10.0, ..opts.clone() };
    let at_one = |u: &dyn AsymptoticState| norm_series(&prop, u, a, &[1.0], &fine)[0];
    let ratio = |v: &[f64]| {
        let mx = v.iter().copied().fold(0.0, f64::max);
        let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
        mx / mn
    };
    let hdot_sum_zero = hdot_norm(zero, -1.0, opts.xi_min, opts.xi_max) + hdot_norm(zero, -1.1, opts.xi_min, opts.xi_max);
    let fitted_c = norm_zero.iter().copied().fold(0.0, f64::max) / hdot_sum_zero;
    Ok(ObstructionReport {
        a,
        ratio_nonzero: ratio(&norm_nonzero),
        ratio_zero: ratio(&norm_zero),
        cutoff_growth_nonzero: at_one(nonzero) / norm_nonzero[0],
        cutoff_growth_zero: at_one(zero) / norm_zero[0],
        times,
        norm_nonzero,
        norm_zero,
        hdot_sum_zero,
        fitted_c,
    })
}

/// Forward counterpart: ||J(t) w(t)|| for the solution with a given smooth
/// datum w^(1, xi) (and its derivative) at t = 1.
pub fn datum_norm_series(
    what: &(dyn Fn(f64) -> C + Sync),
    dwhat: &(dyn Fn(f64) -> C + Sync),
    a: f64,
    times: &[f64],
    opts: &ObstructionOptions,
) -> Vec<f64> {
    let grid = symmetric_log_grid(opts.xi_min, opts.xi_max, opts.per_decade);
    let half = grid.len() / 2;
    let cols: Vec<Vec<ModeState>> = grid[half..]
        .par_iter()
        .map(|&x| evolve_j(&ModeState::from_datum(x, 1.0, what, dwhat), a, times, opts.resolution))
        .collect();
    (0..times.len())
        .map(|j| {
            let mut f: Vec<C> = cols.iter().rev().map(|c| c[j].vhat(1)).collect();
            f.extend(cols.iter().map(|c| c[j].vhat(0)));
            l2_on_grid(&grid, &f)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub xi: f64,
    pub a: f64,
    pub times: Vec<f64>,
    /// |v^ - 2i e^{-i Psi~} dZ+ + (2a^2/xi)(e^{i Psi~} Y+ + e^{-i Psi~} Z+)| per time.
    pub defect: Vec<f64>,
    /// Fitted exponent p in defect ~ t^{-p}.
    pub rate: f64,
    /// |Z+ - e^{-i a^2 log|xi|} u^+(xi) / 2| with u^+ read off w^ at the last time.
    pub z_plus_error: f64,
}

/// RK4 for d(Y2, Z2)/d tau = M (Y2, Z2) through the increasing `taus`.
pub fn march_yz(a: f64, yz: [C; 2], tau0: f64, taus: &[f64]) -> Vec<[C; 2]> {
    let f = |tau: f64, v: &[C; 2]| {
        let m = m_matrix(tau, a, psi_phase(tau, a));
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    };
    let mut out = Vec::with_capacity(taus.len());
    let (mut tau, mut v) = (tau0, yz);
    for &target in taus {
        while target - tau > 1e-12 * target {
            if a == 0.0 {
                tau = target;
                break;
            }
            let h = (0.25f64.min(0.01 * tau)).min(target - tau);
            let k1 = f(tau, &v);
            let k2 = f(tau + 0.5 * h, &[v[0] + k1[0] * (0.5 * h), v[1] + k1[1] * (0.5 * h)]);
            let k3 = f(tau + 0.5 * h, &[v[0] + k2[0] * (0.5 * h), v[1] + k2[1] * (0.5 * h)]);
            let k4 = f(tau + h, &[v[0] + k3[0] * h, v[1] + k3[1] * h]);
            for j in 0..2 {
                v[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
            }
            tau += h;
        }
        out.push(v);
    }
    out
}

/// Forward run from a datum at t = 1 to t_end with xi^2 t_end >= 1e6 a^2.
/// Below t xi^2 = 4a^2 the mode system is integrated in ln t, above it the
/// diagonal system in tau. The limits Y+, Z+ are the amplitudes at the last
/// time; xi-derivatives at fixed tau come from centered differences over the
/// neighbouring modes xi +- d.
pub fn asymptotic_check(
    what: impl Fn(f64) -> C + Sync,
    a: f64,
    xi: f64,
    n_times: usize,
    resolution: f64,
) -> Result<AsymptoticReport> {
    if !(xi > 0.0) {
        return invalid("asymptotic check needs xi > 0");
    }
    let t_end = (1e6 * a * a / (xi * xi)).max(1e3 / (xi * xi));
    let t_sw = (4.0 * a * a / (xi * xi)).max(1.0);
    let times: Vec<f64> = (1..=n_times).map(|k| t_sw * (t_end / t_sw).powf(k as f64 / n_times as f64)).collect();
    let taus: Vec<f64> = times.iter().map(|t| t * xi * xi).collect();
    let d = 1e-3 * xi;
    let amplitudes = |x: f64| -> Result<Vec<[C; 2]>> {
        let w = what(x);
        let wm = what(-x);
        let p = (w + wm.conj()) * 0.5;
        let q = (w - wm.conj()) / (2.0 * I);
        let t_x = (4.0 * a * a / (x * x)).max(1.0);
        let y = march(x, a, [p, q, C::new(0.0, 0.0), C::new(0.0, 0.0)], 1.0, t_x, false, resolution);
        let tau_sw = t_x * x * x;
        let ph = phase_data_closed(tau_sw, a)?;
        let (y2, z2) = diagonalize(y[0], y[1], &ph, a)?;
        Ok(march_yz(a, [y2, z2], tau_sw, &taus))
    };
    let (c, p, m) = (amplitudes(xi)?, amplitudes(xi + d)?, amplitudes(xi - d)?);
    let last = n_times - 1;
    let (y_plus, z_plus) = (c[last][0], c[last][1]);
    let dz_plus = (p[last][1] - m[last][1]) / (2.0 * d);
    let mut defect = Vec::with_capacity(n_times);
    for j in 0..n_times {
        let ph = phase_data_closed(taus[j], a)?;
        let e = C::from_polar(1.0, ph.psi);
        let (dy, dz) = ((p[j][0] - m[j][0]) / (2.0 * d), (p[j][1] - m[j][1]) / (2.0 * d));
        let (pp, _) = undiagonalize(c[j][0], c[j][1], &ph);
        let vhat = -(2.0 * a * a / xi) * pp + I * (1.0 - ph.alpha) * e * dy + I * (1.0 + ph.alpha) * e.conj() * dz;
        let et = C::from_polar(1.0, ph.psi_tilde);
        let model = 2.0 * I * et.conj() * dz_plus - (2.0 * a * a / xi) * (et * y_plus + et.conj() * z_plus);
        defect.push((vhat - model).norm());
    }
    // Fit away from the reference time, where the defect is dominated by
    // the neighbourhood of the limit itself.
    let lo = n_times / 8;
    let hi = n_times / 2;
    let rate = -crate::fit::slope(
        &times[lo..hi].iter().map(|t| t.ln()).collect::<Vec<_>>(),
        &defect[lo..hi].iter().map(|d| d.max(1e-300).ln()).collect::<Vec<_>>(),
    );
    let ph = phase_data_closed(taus[last], a)?;
    let (pp, qq) = undiagonalize(y_plus, z_plus, &ph);
    let t = times[last];
    let u_plus = (pp + I * qq) * C::from_polar(1.0, taus[last] - 0.5 * a * a * t.ln());
    let z_expected = C::from_polar(0.5, -a * a * xi.ln()) * u_plus;
    Ok(AsymptoticReport { xi, a, times, defect, rate, z_plus_error: (z_plus - z_expected).norm() })
}

/// Phase data with Psi from the closed form, for inner loops.
pub fn phase_data_closed(tau: f64, a: f64) -> Result<PhaseData> {
    if a == 0.0 {
        return Ok(PhaseData { tau, alpha: 1.0, psi: tau, psi_tilde: tau, m: [[C::new(0.0, 0.0); 2]; 2] });
    }
    if !(tau > a * a) {
        return invalid(format!("tau = {tau} is not above a^2"));
    }
    let psi = psi_phase(tau, a);
    Ok(PhaseData { tau, alpha: alpha(tau, a), psi, psi_tilde: psi_tilde(tau, a), m: m_matrix(tau, a, psi) })
}
