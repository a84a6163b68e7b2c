//! The trace of the tangent at t = 0: coupling g, asymptotic state f+, the
//! kernels h and h~, and three constructions of (T(0), N~(0)).
//!
//! Conventions: h~(x) = i f+^(x/2) e^{-i a^2 log|x|} = i g(x), and
//! T' = Re(g N~), N~' = -conj(g) T. In the NLS variables the state seen by
//! the split-step solver is phi+ with phi+^ = sqrt(4 pi i) e^{-i xi^2} f+^.

use crate::error::{invalid, numerical, Result};
use crate::geometry::{
    complex_vec, curve_from_tangent, differentiate, interp, parallel_integrate_fn, CVec3, Frame, FrameField, Grid1D,
    Layout, SampledCurve, Vec3,
};
use crate::hasimoto::transport_normal;
use crate::nls::{wavenumbers, SpectralField};
use crate::selfsimilar::SelfSimilarProfile;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C = Complex64;
const I: C = C { re: 0.0, im: 1.0 };

/// Corner data (a, A+-, B+-) of the self-similar solution being perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerData {
    pub a: f64,
    pub a_plus: Vec3,
    pub a_minus: Vec3,
    pub b_plus: CVec3,
    pub b_minus: CVec3,
}

impl CornerData {
    pub fn from_profile(p: &SelfSimilarProfile) -> Self {
        Self { a: p.a, a_plus: p.a_plus, a_minus: p.a_minus, b_plus: p.b_plus, b_minus: p.b_minus }
    }

    pub fn frame(&self, positive: bool) -> Frame {
        if positive {
            Frame::from_complex(self.a_plus, &self.b_plus)
        } else {
            Frame::from_complex(self.a_minus, &self.b_minus)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingData {
    pub grid: Grid1D,
    pub g: Vec<C>,
    pub f_plus: SpectralField,
    pub corner: CornerData,
}

impl CouplingData {
    /// g(x) = -i h~(x), read from f+ so that every route sees the same function.
    pub fn g_at(&self, x: f64) -> C {
        -I * htilde(x, &self.f_plus, self.corner.a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFrameLimits {
    pub t_inf_plus: Vec3,
    pub t_inf_minus: Vec3,
    pub n_inf_plus: CVec3,
    pub n_inf_minus: CVec3,
}

impl AsymptoticFrameLimits {
    /// Limits read off at the two ends of a solved frame field.
    pub fn from_frame(frame: &FrameField) -> Self {
        let n = frame.grid.len() - 1;
        Self {
            t_inf_plus: frame.t[n],
            t_inf_minus: frame.t[0],
            n_inf_plus: frame.n(n),
            n_inf_minus: frame.n(0),
        }
    }

    pub fn trivial(corner: &CornerData) -> Self {
        Self { t_inf_plus: corner.a_plus, t_inf_minus: corner.a_minus, n_inf_plus: corner.b_plus, n_inf_minus: corner.b_minus }
    }
}

/// sum_j w_j e^{-i xi x_j} for x_j = x0 + j h, by Horner in e^{-i xi h}.
fn horner(w: &[C], x0: f64, h: f64, xi: f64) -> C {
    let z = C::from_polar(1.0, -xi * h);
    let mut acc = C::new(0.0, 0.0);
    for c in w.iter().rev() {
        acc = acc * z + c;
    }
    acc * C::from_polar(1.0, -xi * x0)
}

/// f^(xi) = int f e^{-i xi x} dx for the band-limited interpolant of the
/// samples: the trapezoid sum below the Nyquist wavenumber, zero above it.
/// Agrees with `SpectralField::transform` on the wavenumbers.
pub fn fourier_at(f: &SpectralField, xi: f64) -> C {
    let h = f.grid.h();
    if xi.abs() > PI / h * (1.0 + 1e-12) {
        return C::new(0.0, 0.0);
    }
    horner(&f.values, f.grid.x_min, h, xi) * h
}

fn log_phase(x: f64, a: f64) -> C {
    if x == 0.0 {
        C::new(1.0, 0.0)
    } else {
        C::from_polar(1.0, -a * a * x.abs().ln())
    }
}

/// h~(x) = i f+^(x/2) e^{-i a^2 log|x|}; the phase is taken as 1 at x = 0.
pub fn htilde(x: f64, f_plus: &SpectralField, a: f64) -> C {
    I * fourier_at(f_plus, 0.5 * x) * log_phase(x, a)
}

pub fn htilde_on(xs: &[f64], f_plus: &SpectralField, a: f64) -> Vec<C> {
    xs.par_iter().map(|&x| htilde(x, f_plus, a)).collect()
}

/// f+ with f+^(xi) = g(2 xi) e^{i a^2 log|2 xi|} on the wavenumbers of
/// `fgrid`; g is interpolated branch-locally and taken as 0 off its grid.
pub fn fplus_from_g(grid: &Grid1D, g: &[C], a: f64, fgrid: &Grid1D) -> Result<SpectralField> {
    if g.len() != grid.len() {
        return invalid("g must be sampled on its grid");
    }
    let (lo, hi) = (grid.first(), grid.last());
    let fhat: Vec<C> = wavenumbers(fgrid)
        .into_iter()
        .map(|k| {
            let x = 2.0 * k;
            if k == 0.0 || x < lo || x > hi {
                C::new(0.0, 0.0)
            } else {
                interp(grid, g, x, x > 0.0) * log_phase(x, a).conj()
            }
        })
        .collect();
    SpectralField::from_transform(*fgrid, &fhat, 1.0)
}

pub fn g_from_fplus(f_plus: &SpectralField, a: f64, grid: &Grid1D) -> Vec<C> {
    htilde_on(&grid.xs(), f_plus, a).into_iter().map(|h| -I * h).collect()
}

fn sqrt_4pi_i() -> C {
    C::from_polar((4.0 * PI).sqrt(), PI / 4.0)
}

fn multiply_transform(f: &SpectralField, m: impl Fn(f64) -> C) -> Result<SpectralField> {
    let fhat: Vec<C> = f.transform().into_iter().zip(f.xi()).map(|(v, k)| v * m(k)).collect();
    SpectralField::from_transform(f.grid, &fhat, f.time)
}

/// f+^ = phi+^ e^{i xi^2} / sqrt(4 pi i).
pub fn fplus_from_nls_state(phi: &SpectralField) -> Result<SpectralField> {
    let s = sqrt_4pi_i();
    multiply_transform(phi, |k| C::from_polar(1.0, k * k) / s)
}

/// phi+^ = sqrt(4 pi i) e^{-i xi^2} f+^.
pub fn nls_state_from_fplus(f: &SpectralField) -> Result<SpectralField> {
    let s = sqrt_4pi_i();
    multiply_transform(f, |k| C::from_polar(1.0, -k * k) * s)
}

/// Coupling read off a corner datum by transporting N~ from B+- along T0.
pub fn g_from_datum(grid: &Grid1D, t0: &[Vec3], corner: &CornerData, fgrid: &Grid1D) -> Result<CouplingData> {
    if t0.len() != grid.len() {
        return invalid("tangent must be sampled on the grid");
    }
    if grid.split().is_none() {
        return invalid("datum grid must straddle the corner at x = 0");
    }
    for (pos, av) in [(true, corner.a_plus), (false, corner.a_minus)] {
        let lim = interp(grid, t0, 0.0, pos);
        let d = (lim - av).norm();
        if d > 1e-3 {
            return invalid(format!(
                "corner mismatch: T0(0{}) differs from A{} by {d:.3e}",
                if pos { "+" } else { "-" },
                if pos { "+" } else { "-" }
            ));
        }
    }
    let tx = differentiate(grid, t0);
    let right = transport_normal(grid, t0, &tx, &corner.frame(true), 0.0);
    let left = transport_normal(grid, t0, &tx, &corner.frame(false), 0.0);
    let split = grid.split().unwrap_or(0);
    let g: Vec<C> = (0..grid.len())
        .map(|i| {
            let f = if i >= split { &right } else { &left };
            C::new(tx[i].dot(&f.n_re[i]), -tx[i].dot(&f.n_im[i]))
        })
        .collect();
    let f_plus = fplus_from_g(grid, &g, corner.a, fgrid)?;
    Ok(CouplingData { grid: *grid, g, f_plus, corner: *corner })
}

/// Coupling generated by an asymptotic state, g sampled on `grid`.
pub fn coupling_from_fplus(f_plus: SpectralField, corner: &CornerData, grid: &Grid1D) -> CouplingData {
    let g = g_from_fplus(&f_plus, corner.a, grid);
    CouplingData { grid: *grid, g, f_plus, corner: *corner }
}

/// Frame system T' = Re(g N~), N~' = -conj(g) T from (A+-, B+-) at 0+-.
pub fn solve_trace_ode<F>(grid: &Grid1D, g: F, corner: &CornerData) -> Result<FrameField>
where
    F: Fn(f64) -> C,
{
    let split = match grid.split() {
        Some(k) => k,
        None => return invalid("trace grid must straddle x = 0"),
    };
    let right = parallel_integrate_fn(grid, |x| g(x).conj(), &corner.frame(true), 0.0)?;
    let left = parallel_integrate_fn(grid, |x| g(x).conj(), &corner.frame(false), 0.0)?;
    let frames: Vec<Frame> =
        (0..grid.len()).map(|i| if i >= split { right.frame(i) } else { left.frame(i) }).collect();
    Ok(FrameField::from_frames(*grid, &frames))
}

/// Tangent and curve of the datum generated by g, with chi0(0) = 0.
pub fn datum_from_coupling<F>(grid: &Grid1D, g: F, corner: &CornerData) -> Result<(SampledCurve, FrameField)>
where
    F: Fn(f64) -> C,
{
    let frame = solve_trace_ode(grid, g, corner)?;
    let curve = curve_from_tangent(grid, &frame.t, Vec3::zeros(), 0.0)?;
    Ok((curve, frame))
}

/// Nodes of one branch ordered away from 0, with the kernel seen from that
/// branch: k(y) = h~(y) on the right, -h~(-y) on the left.
struct Branch {
    idx: Vec<usize>,
    h: f64,
    k: Vec<C>,
    t_inf: Vec3,
    n_inf: CVec3,
}

fn branches(grid: &Grid1D, ht: &[C], limits: &AsymptoticFrameLimits) -> Result<[Branch; 2]> {
    if grid.layout == Layout::Periodic {
        return invalid("trace grid must not be periodic");
    }
    let split = match grid.split() {
        Some(k) => k,
        None => return invalid("trace grid must straddle x = 0"),
    };
    if split < 4 || grid.len() - split < 4 {
        return invalid("each branch needs at least four nodes");
    }
    let right: Vec<usize> = (split..grid.len()).collect();
    let left: Vec<usize> = (0..split).rev().collect();
    Ok([
        Branch {
            k: right.iter().map(|&i| ht[i]).collect(),
            idx: right,
            h: grid.h(),
            t_inf: limits.t_inf_plus,
            n_inf: limits.n_inf_plus,
        },
        Branch {
            k: left.iter().map(|&i| -ht[i]).collect(),
            idx: left,
            h: grid.h(),
            t_inf: limits.t_inf_minus,
            n_inf: limits.n_inf_minus,
        },
    ])
}

/// out[i] = int_{y_i}^{y_last} f on a uniform branch, fourth-order cells.
fn tail(f: &[C], h: f64) -> Vec<C> {
    let m = f.len();
    let mut out = vec![C::new(0.0, 0.0); m];
    let w = h / 24.0;
    for i in (0..m - 1).rev() {
        let cell = if i == 0 {
            (f[0] * 9.0 + f[1] * 19.0 - f[2] * 5.0 + f[3]) * w
        } else if i + 2 >= m {
            (f[m - 4] - f[m - 3] * 5.0 + f[m - 2] * 19.0 + f[m - 1] * 9.0) * w
        } else {
            (-f[i - 1] + (f[i] + f[i + 1]) * 13.0 - f[i + 2]) * w
        };
        out[i] = out[i + 1] + cell;
    }
    out
}

fn tail3(f: &[CVec3], h: f64) -> Vec<CVec3> {
    let comps: Vec<Vec<C>> = (0..3).map(|c| tail(&f.iter().map(|v| v[c]).collect::<Vec<_>>(), h)).collect();
    (0..f.len()).map(|i| CVec3::new(comps[0][i], comps[1][i], comps[2][i])).collect()
}

fn cvec(v: &Vec3) -> CVec3 {
    v.map(|x| C::new(x, 0.0))
}

impl Branch {
    /// K[T](y) = -Re int_y k(s) int_s conj(k) T.
    fn apply_k(&self, t: &[Vec3]) -> Vec<Vec3> {
        let inner = self.inner(t);
        let outer: Vec<CVec3> = inner.iter().zip(&self.k).map(|(w, k)| w * *k).collect();
        tail3(&outer, self.h).iter().map(|v| -v.map(|z| z.re)).collect()
    }

    /// int_y conj(k) T.
    fn inner(&self, t: &[Vec3]) -> Vec<CVec3> {
        let f: Vec<CVec3> = t.iter().zip(&self.k).map(|(v, k)| cvec(v) * k.conj()).collect();
        tail3(&f, self.h)
    }

    /// T_inf - Im(N_inf int_y k).
    fn first_two(&self) -> Vec<Vec3> {
        tail(&self.k, self.h).iter().map(|i1| self.t_inf - (self.n_inf * *i1).map(|z| z.im)).collect()
    }

    fn normal(&self, t: &[Vec3]) -> Vec<CVec3> {
        self.inner(t).into_iter().map(|w| self.n_inf + w * I).collect()
    }
}

fn assemble(grid: &Grid1D, br: &[Branch; 2], t: [Vec<Vec3>; 2], n: [Vec<CVec3>; 2]) -> FrameField {
    let mut frames = vec![Frame::canonical(); grid.len()];
    for s in 0..2 {
        for (j, &i) in br[s].idx.iter().enumerate() {
            let nn = n[s][j];
            frames[i] = Frame { t: t[s][j], n_re: nn.map(|z| z.re), n_im: nn.map(|z| z.im) };
        }
    }
    FrameField::from_frames(*grid, &frames)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSolution {
    pub frame: FrameField,
    pub iterations: usize,
    /// Sup change of T at each Picard step.
    pub changes: Vec<f64>,
    /// Largest ratio of successive changes once the iteration settled.
    pub contraction: f64,
}

/// Picard iteration of T = T_inf - Im(N_inf int h~) - Re int h~ int conj(h~) T
/// on each branch, then N~ = N_inf + i int conj(h~) T. `ht` holds h~ at the
/// grid nodes; integrals stop at the grid edge.
pub fn solve_trace_integral(grid: &Grid1D, ht: &[C], limits: &AsymptoticFrameLimits, tol: f64) -> Result<TraceSolution> {
    if ht.len() != grid.len() {
        return invalid("h~ must be sampled on the grid");
    }
    let br = branches(grid, ht, limits)?;
    let mut ts: [Vec<Vec3>; 2] = [Vec::new(), Vec::new()];
    let mut changes = Vec::new();
    let mut contraction = 0.0f64;
    let mut iterations = 0;
    for (s, b) in br.iter().enumerate() {
        let base = b.first_two();
        let mut t = base.clone();
        let mut prev_change = f64::INFINITY;
        for it in 0..200 {
            let k = b.apply_k(&t);
            let next: Vec<Vec3> = base.iter().zip(&k).map(|(u, v)| u + v).collect();
            let change = next.iter().zip(&t).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            t = next;
            iterations = iterations.max(it + 1);
            if s == 0 {
                changes.push(change);
            }
            if change <= tol {
                break;
            }
            let ratio = change / prev_change;
            if it >= 2 {
                contraction = contraction.max(ratio);
                if ratio > 0.9 {
                    let l1: f64 = b.k.iter().map(|z| z.norm()).sum::<f64>() * b.h;
                    return numerical(format!(
                        "Picard iteration does not contract: change ratio {ratio:.3} with ||h~||_L1 = {l1:.3e}"
                    ));
                }
            }
            if it == 199 {
                return numerical(format!("Picard iteration stalled at change {change:.3e}"));
            }
            prev_change = change;
        }
        ts[s] = t;
    }
    let ns = [br[0].normal(&ts[0]), br[1].normal(&ts[1])];
    Ok(TraceSolution { frame: assemble(grid, &br, ts, ns), iterations, changes, contraction })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesTerms {
    pub grid: Grid1D,
    /// terms[j - 1][i] = a~_j at node i.
    pub terms: Vec<Vec<Vec3>>,
    /// Bound on the part of each term lost by stopping the integrals at the
    /// grid edge.
    pub tail_bounds: Vec<f64>,
    pub limits: AsymptoticFrameLimits,
    ht: Vec<C>,
}

/// (int_L^{4L} |x h~|^2)^{1/2} / sqrt(L), a Cauchy-Schwarz bound on
/// int_L^inf |h~| that ignores what lies beyond 4L.
pub fn htilde_tail_bound(f_plus: &SpectralField, a: f64, l: f64) -> f64 {
    let n = 600;
    let dx = 3.0 * l / n as f64;
    let mut acc = 0.0;
    for sign in [1.0, -1.0] {
        for k in 0..=n {
            let x = l + k as f64 * dx;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * (x * htilde(sign * x, f_plus, a)).norm_sqr() * dx;
        }
    }
    acc.sqrt() / l.sqrt()
}

/// a~_1 = T_inf, a~_2 = -Im(N_inf int h~), a~_{j+2} = K[a~_j] with K the
/// double integral above.
pub fn series_terms(
    grid: &Grid1D,
    ht: &[C],
    limits: &AsymptoticFrameLimits,
    n_max: usize,
    edge_tail: f64,
) -> Result<SeriesTerms> {
    if n_max == 0 {
        return invalid("n_max must be positive");
    }
    if ht.len() != grid.len() {
        return invalid("h~ must be sampled on the grid");
    }
    let br = branches(grid, ht, limits)?;
    let nt = 2 * n_max;
    let mut terms = vec![vec![Vec3::zeros(); grid.len()]; nt];
    for b in &br {
        let mut per: Vec<Vec<Vec3>> = vec![vec![b.t_inf; b.idx.len()]];
        let first = b.first_two();
        per.push(first.iter().map(|v| v - b.t_inf).collect());
        for j in 2..nt {
            let next = b.apply_k(&per[j - 2]);
            per.push(next);
        }
        for (j, term) in per.iter().enumerate() {
            for (m, &i) in b.idx.iter().enumerate() {
                terms[j][i] = term[m];
            }
        }
    }
    let sup = |v: &Vec<Vec3>| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let l1: f64 = ht.iter().map(|z| z.norm()).sum::<f64>() * grid.h();
    let mut tail_bounds = vec![0.0; nt];
    for j in 1..nt {
        let prev = if j == 1 { 1.0 } else { sup(&terms[j - 2]) };
        tail_bounds[j] = edge_tail * prev * if j == 1 { 1.0 } else { 2.0 * l1 };
        let mag = sup(&terms[j]);
        if tail_bounds[j] > 1e-6 * mag && tail_bounds[j] > 1e-15 {
            return numerical(format!(
                "truncation tail {:.3e} exceeds 1e-6 of term {} (size {mag:.3e}); widen the grid",
                tail_bounds[j],
                j + 1
            ));
        }
    }
    Ok(SeriesTerms { grid: *grid, terms, tail_bounds, limits: *limits, ht: ht.to_vec() })
}

impl SeriesTerms {
    pub fn partial_sum(&self, n_terms: usize) -> Vec<Vec3> {
        let n = n_terms.min(self.terms.len());
        (0..self.grid.len()).map(|i| (0..n).map(|j| self.terms[j][i]).sum()).collect()
    }

    pub fn sup(&self, j: usize) -> f64 {
        self.terms[j - 1].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Frame field from the partial sum of `n_terms`, N~ from the integral for N~.
    pub fn frame(&self, n_terms: usize) -> Result<FrameField> {
        let t = self.partial_sum(n_terms);
        let br = branches(&self.grid, &self.ht, &self.limits)?;
        let ts = [
            br[0].idx.iter().map(|&i| t[i]).collect::<Vec<_>>(),
            br[1].idx.iter().map(|&i| t[i]).collect::<Vec<_>>(),
        ];
        let ns = [br[0].normal(&ts[0]), br[1].normal(&ts[1])];
        Ok(assemble(&self.grid, &br, ts, ns))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceAgreement {
    pub ode_vs_integral: f64,
    pub ode_vs_series: f64,
    pub series_vs_integral: f64,
    /// max over the two sides of |T(0+-) - A+-| for the integral route,
    /// extrapolated from the nodes next to 0.
    pub corner_integral: f64,
    pub orthonormality: f64,
    pub series_last_increment: f64,
    pub picard_iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceComparison {
    pub ode: FrameField,
    pub integral: TraceSolution,
    pub series: SeriesTerms,
    pub agreement: TraceAgreement,
}

fn sup_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// All three routes for the coupling of `f_plus`, on `grid`.
pub fn compare_routes(f_plus: &SpectralField, corner: &CornerData, grid: &Grid1D, n_max: usize) -> Result<TraceComparison> {
    let a = corner.a;
    let ht = htilde_on(&grid.xs(), f_plus, a);
    let ode = solve_trace_ode(grid, |x| -I * htilde(x, f_plus, a), corner)?;
    let limits = AsymptoticFrameLimits::from_frame(&ode);
    let integral = solve_trace_integral(grid, &ht, &limits, 1e-13)?;
    let edge = htilde_tail_bound(f_plus, a, grid.last().min(-grid.first()));
    let series = series_terms(grid, &ht, &limits, n_max, edge)?;
    let st = series.partial_sum(2 * n_max);
    let prev = series.partial_sum(2 * n_max - 2);
    let corner_integral = [(true, corner.a_plus), (false, corner.a_minus)]
        .iter()
        .map(|(pos, av)| (interp(grid, &integral.frame.t, 0.0, *pos) - av).norm())
        .fold(0.0, f64::max);
    let agreement = TraceAgreement {
        ode_vs_integral: sup_diff(&ode.t, &integral.frame.t),
        ode_vs_series: sup_diff(&ode.t, &st),
        series_vs_integral: sup_diff(&st, &integral.frame.t),
        corner_integral,
        orthonormality: integral.frame.max_defect().max(ode.max_defect()),
        series_last_increment: sup_diff(&st, &prev),
        picard_iterations: integral.iterations,
    };
    Ok(TraceComparison { ode, integral, series, agreement })
}

/// (||T_x||_L1, ||T_x||_L2) by the trapezoid rule on the nodes.
pub fn tx_norms(frame: &FrameField) -> (f64, f64) {
    let tx = differentiate(&frame.grid, &frame.t);
    let h = frame.grid.h();
    let l1 = tx.iter().map(|v| v.norm()).sum::<f64>() * h;
    let l2 = (tx.iter().map(|v| v.norm_squared()).sum::<f64>() * h).sqrt();
    (l1, l2)
}

/// ||f||_H1 = (||f||^2 + ||f'||^2)^{1/2}.
pub fn h1_norm(f: &SpectralField) -> f64 {
    let d = f.derivative(1);
    (f.l2().powi(2) + d.l2().powi(2)).sqrt()
}

/// u_s(1/t, .) on the NLS grid, ready for h(t, s).
#[derive(Clone, Debug)]
pub struct KernelSlice {
    pub t: f64,
    pub a: f64,
    pub grid: Grid1D,
    pub us: Vec<C>,
    pub us_l2: f64,
    pub u_h1: f64,
}

impl KernelSlice {
    /// `u` is the NLS perturbation at time 1/t.
    pub fn from_u(u: &SpectralField, a: f64) -> Result<Self> {
        if !(u.time > 0.0) {
            return invalid("u must carry a positive time");
        }
        let d = u.derivative(1);
        Ok(Self { t: 1.0 / u.time, a, grid: u.grid, us_l2: d.l2(), u_h1: h1_norm(u), us: d.values })
    }

    fn us_at(&self, y: f64) -> Result<C> {
        if y < self.grid.first() || y > self.grid.last() {
            return invalid(format!("s/t = {y} lies outside the grid of u"));
        }
        Ok(interp(&self.grid, &self.us, y, true))
    }

    pub fn h(&self, s: f64) -> Result<C> {
        if s == 0.0 {
            return invalid("h(t, s) needs s != 0");
        }
        Ok(h_kernel(self.t, s, self.a, self.us_at(s / self.t)?))
    }

    /// h on the nodes s = t y_j of the NLS grid with s in [x0, x1].
    pub fn samples(&self, x0: f64, x1: f64) -> Result<(Vec<f64>, Vec<C>)> {
        let (j0, j1) = ((self.grid.coord(x0 / self.t)).ceil() as i64, (self.grid.coord(x1 / self.t)).floor() as i64);
        if j0 < 0 || j1 >= self.grid.len() as i64 || j1 <= j0 + 3 {
            return invalid(format!("[{x0}, {x1}] is not covered by the grid of u at t = {}", self.t));
        }
        let s: Vec<f64> = (j0..=j1).map(|j| self.t * self.grid.x(j as usize)).collect();
        let h: Vec<C> = (j0..=j1).zip(&s).map(|(j, &s)| h_kernel(self.t, s, self.a, self.us[j as usize])).collect();
        Ok((s, h))
    }
}

/// h(t, s) = e^{-i s^2/4t} (2/(s sqrt t)) u_s(1/t, s/t) e^{-i Phi},
/// Phi = -a^2 log sqrt t + a^2 log|s|, given u_s(1/t, s/t).
pub fn h_kernel(t: f64, s: f64, a: f64, us: C) -> C {
    let phi = -a * a * t.sqrt().ln() + a * a * s.abs().ln();
    C::from_polar(2.0 / (s * t.sqrt()), -s * s / (4.0 * t) - phi) * us
}

fn trapezoid(s: &[f64], f: &[C]) -> C {
    let mut acc = C::new(0.0, 0.0);
    for k in 1..s.len() {
        acc += (f[k] + f[k - 1]) * (0.5 * (s[k] - s[k - 1]));
    }
    acc
}

/// Constants of the remainder bounds, fitted on samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderBudget {
    /// ||u(1)||_H1 standing in for the X^gamma norms.
    pub c0: f64,
    /// sup |c0(t, x)| |x| / sqrt t.
    pub c1: f64,
    /// sup |d0(t, x)| / (sqrt t/|x| + t/x^2 + sqrt t).
    pub c2: f64,
    /// sup_t int_1^L |h(t, s)| ds.
    pub c3: f64,
    /// sup (int_x^L |h| - c3)+ x / t^{1/4}.
    pub c4: f64,
    /// sup |b1(t, x)| / (sqrt t + sqrt t/x + t^2/x^4).
    pub c5: f64,
    /// sup E(t, x) / ((1 + 1/x)(sqrt t/x + t^{1/6 - 0.01})).
    pub c6: f64,
    /// sup |T(t, x) - T(0, x)| / (sqrt t / x) for t <= x^2.
    pub c7: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditRow {
    pub t: f64,
    pub x: f64,
    /// |int_x^L h| against 2 ||u_s|| / sqrt x.
    pub tail_lhs: f64,
    pub tail_rhs: f64,
    /// |int_x^{x~} (h - h~)|.
    pub replacement: f64,
    pub c0: f64,
    pub d0: f64,
    pub b1: f64,
    pub trace_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderReport {
    pub rows: Vec<AuditRow>,
    pub budget: RemainderBudget,
    /// Largest tail_lhs / tail_rhs; at most 1 when the estimate holds.
    pub tail_margin: f64,
    /// Fitted exponent p of replacement ~ t^p at the smallest x audited.
    pub replacement_rate: f64,
}

/// Slice data needed by the audit at one time: the kernel, and the frame
/// (T, N~) of the flow on a grid covering [x_min, x_edge].
pub struct AuditSlice<'a> {
    pub kernel: &'a KernelSlice,
    pub frame: &'a FrameField,
    pub x_edge: f64,
}

/// Evaluate the sides of the quoted estimates for x > 0 on every slice.
/// `t_zero` is the trace at t = 0 on any grid covering the audited x.
pub fn remainder_audit(
    slices: &[AuditSlice],
    f_plus: &SpectralField,
    t_zero: &FrameField,
    xs: &[f64],
    x_tilde: f64,
    u1_h1: f64,
) -> Result<RemainderReport> {
    let mut rows = Vec::new();
    let mut b = RemainderBudget { c0: u1_h1, c1: 0.0, c2: 0.0, c3: 0.0, c4: 0.0, c5: 0.0, c6: 0.0, c7: 0.0 };
    for sl in slices {
        let k = sl.kernel;
        let t = k.t;
        let a = k.a;
        let l = sl.x_edge;
        let (s, hs) = k.samples(xs.iter().cloned().fold(f64::INFINITY, f64::min), l)?;
        let fr = sl.frame;
        let tt: Vec<Vec3> = s.iter().map(|&x| fr.frame_at(x).t).collect();
        // N~ = N e^{i Phi}
        let nt: Vec<CVec3> = s
            .iter()
            .map(|&x| {
                let f = fr.frame_at(x);
                complex_vec(&f.n_re, &f.n_im) * C::from_polar(1.0, -a * a * t.sqrt().ln() + a * a * x.ln())
            })
            .collect();
        let t_edge = *tt.last().unwrap_or(&Vec3::zeros());
        let n_edge = *nt.last().unwrap_or(&CVec3::zeros());
        let abs_h: Vec<C> = hs.iter().map(|z| C::new(z.norm(), 0.0)).collect();
        for &x in xs {
            let j = s.partition_point(|&v| v < x);
            let (ss, hh) = (&s[j..], &hs[j..]);
            let tail_lhs = trapezoid(ss, hh).norm();
            let tail_rhs = 2.0 * k.us_l2 / x.sqrt();
            let je = s.partition_point(|&v| v <= x_tilde);
            let diff: Vec<C> = (j..je).map(|m| hs[m] - htilde(s[m], f_plus, a)).collect();
            let replacement = trapezoid(&s[j..je], &diff).norm();
            let hn: Vec<CVec3> = (j..s.len()).map(|m| nt[m] * hs[m]).collect();
            let int_hn = trapz3(ss, &hn);
            let c0v = (tt[j] - t_edge + int_hn.map(|z| z.im)).norm();
            let hbt: Vec<CVec3> = (j..s.len()).map(|m| cvec(&tt[m]) * hs[m].conj()).collect();
            let d0v = (nt[j] - n_edge - trapz3(ss, &hbt) * I).norm();
            let int_h = trapezoid(ss, hh);
            let b1 = (tt[j] - t_edge + (n_edge * int_h).map(|z| z.im)).norm();
            let t0x = t_zero.frame_at(x).t;
            let trace_gap = (tt[j] - t0x).norm();
            let rt = t.sqrt();
            b.c1 = b.c1.max(c0v * x / rt);
            b.c2 = b.c2.max(d0v / (rt / x + t / (x * x) + rt));
            let int_abs = trapezoid(ss, &abs_h[j..]).re;
            if x >= 1.0 {
                b.c3 = b.c3.max(int_abs);
            }
            b.c5 = b.c5.max(b1 / (rt + rt / x + t * t / x.powi(4)));
            b.c6 = b.c6.max(replacement / ((1.0 + 1.0 / x) * (rt / x + t.powf(1.0 / 6.0 - 0.01))));
            if t <= x * x {
                b.c7 = b.c7.max(trace_gap / (rt / x));
            }
            rows.push(AuditRow { t, x, tail_lhs, tail_rhs, replacement, c0: c0v, d0: d0v, b1, trace_gap });
        }
    }
    for r in &rows {
        let j = r.x;
        let sl = slices.iter().find(|s| s.kernel.t == r.t);
        if let Some(sl) = sl {
            let (s, hs) = sl.kernel.samples(j, sl.x_edge)?;
            let int_abs: f64 = trapezoid(&s, &hs.iter().map(|z| C::new(z.norm(), 0.0)).collect::<Vec<_>>()).re;
            b.c4 = b.c4.max((int_abs - b.c3).max(0.0) * j / r.t.powf(0.25));
        }
    }
    let tail_margin = rows.iter().map(|r| r.tail_lhs / r.tail_rhs.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.x == x_min && r.replacement > 0.0).map(|r| (r.t, r.replacement)).collect();
    let replacement_rate = if pts.len() >= 2 {
        let (tx, ty): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        crate::fit::power_law(&tx, &ty).1
    } else {
        f64::NAN
    };
    Ok(RemainderReport { rows, budget: b, tail_margin, replacement_rate })
}

fn trapz3(s: &[f64], f: &[CVec3]) -> CVec3 {
    let mut acc = CVec3::zeros();
    for k in 1..s.len() {
        acc += (f[k] + f[k - 1]) * C::new(0.5 * (s[k] - s[k - 1]), 0.0);
    }
    acc
}
