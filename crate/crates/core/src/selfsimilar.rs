//! The self-similar family chi_a(t, x) = sqrt(t) G_a(x / sqrt(t)).
//!
//! G_a is generated by the Frenet system with curvature a and torsion s/2 from
//! the canonical frame at s = 0. Its two asymptotic directions A+ and A- and
//! the normal limits B+ and B- are extracted numerically.

use crate::error::{invalid, numerical, Result};
use crate::geometry::{
    complex_vec, curve_from_tangent, frenet_integrate, CVec3, Frame, FrameField, Grid1D, SampledCurve, Vec3,
};
use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BEstimate {
    /// Phase-removed average, as measured.
    pub raw: CVec3,
    /// `raw` projected onto the plane orthogonal to A and orthonormalized.
    pub polished: CVec3,
    /// Largest deviation of an individual phase-removed sample from `raw`.
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarProfile {
    pub a: f64,
    pub profile: SampledCurve,
    pub frame: FrameField,
    pub a_plus: Vec3,
    pub a_minus: Vec3,
    pub b_plus: CVec3,
    pub b_minus: CVec3,
    pub b_plus_raw: BEstimate,
    pub b_minus_raw: BEstimate,
    pub corner_angle: f64,
}

pub fn min_half_width(a: f64) -> f64 {
    20.0 * a.max(1.0)
}

pub fn default_half_width(a: f64) -> f64 {
    40.0 * a.max(1.0)
}

/// sin(theta/2) of the corner, predicted exactly by the family.
pub fn predicted_half_angle_sine(a: f64) -> f64 {
    (-std::f64::consts::PI * a * a / 2.0).exp()
}

pub fn selfsimilar_frame(a: f64, grid: &Grid1D) -> Result<FrameField> {
    let xs = grid.xs();
    let c = vec![a; xs.len()];
    let tau: Vec<f64> = xs.iter().map(|s| 0.5 * s).collect();
    frenet_integrate(grid, &c, &tau, &Frame::canonical(), 0.0)
}

pub fn build_profile(a: f64, half_width: f64, h: f64) -> Result<SelfSimilarProfile> {
    if !(a > 0.0 && a.is_finite()) {
        return invalid(format!("a = {a} must be positive"));
    }
    if half_width < min_half_width(a) {
        return invalid(format!(
            "half width {half_width} is too small for asymptotic extraction (need >= {})",
            min_half_width(a)
        ));
    }
    if !(h > 0.0 && h <= 0.05) {
        return invalid(format!("spacing h = {h} must lie in (0, 0.05]"));
    }
    let grid = Grid1D::symmetric(half_width, h)?;
    let frame = selfsimilar_frame(a, &grid)?;
    let profile = curve_from_tangent(&grid, &frame.t, Vec3::z() * (2.0 * a), 0.0)?;
    let a_plus = extract_a(&frame, a, Side::Plus)?;
    let a_minus = extract_a(&frame, a, Side::Minus)?;
    let bp = extract_b(&frame, a, Side::Plus, 1.0, &a_plus)?;
    let bm = extract_b(&frame, a, Side::Minus, 1.0, &a_minus)?;
    let corner_angle = a_plus.angle(&(-a_minus));
    Ok(SelfSimilarProfile {
        a,
        profile,
        frame,
        a_plus,
        a_minus,
        b_plus: bp.polished,
        b_minus: bm.polished,
        b_plus_raw: bp,
        b_minus_raw: bm,
        corner_angle,
    })
}

/// T + (2a/s) b + (4a/s^3) n, whose smooth part is A (1 + 2a^2/s^2) and
/// whose remainder is O(s^-4).
fn corrected_tangent(frame: &FrameField, a: f64, i: usize) -> Vec3 {
    let s = frame.grid.x(i);
    frame.t[i] + frame.n_im[i] * (2.0 * a / s) + frame.n_re[i] * (4.0 * a / (s * s * s))
}

/// Indices on `side` with |s| in [lo, hi].
fn window(grid: &Grid1D, side: Side, lo: f64, hi: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            let s = grid.x(i) * side.sign();
            s >= lo && s <= hi
        })
        .collect()
}

pub fn extract_a(frame: &FrameField, a: f64, side: Side) -> Result<Vec3> {
    let grid = &frame.grid;
    let s_max = match side {
        Side::Plus => grid.last(),
        Side::Minus => -grid.first(),
    };
    if s_max < min_half_width(a) {
        return invalid(format!("frame reaches |s| = {s_max}, extraction needs {}", min_half_width(a)));
    }
    // Three levels, each averaged over a couple of oscillation periods of the
    // normal (local wavelength 4 pi / s). The non-oscillating part of the
    // corrected tangent is even in 1/s, so the extrapolation variable is 1/s^2.
    let mut nodes = Vec::new();
    for k in 0..3 {
        let s_hi = s_max / f64::powi(2.0, k);
        let width = (8.0 * std::f64::consts::PI / s_hi).min(0.25 * s_hi);
        let idx = window(grid, side, s_hi - width, s_hi);
        if idx.is_empty() {
            return invalid("extraction window contains no nodes");
        }
        let mean = idx.iter().map(|&i| corrected_tangent(frame, a, i)).sum::<Vec3>() / idx.len() as f64;
        let u = idx.iter().map(|&i| grid.x(i).powi(-2)).sum::<f64>() / idx.len() as f64;
        nodes.push((u, mean));
    }
    let lag = |u: f64, j: usize| -> f64 {
        let mut w = 1.0;
        for (m, (um, _)) in nodes.iter().enumerate() {
            if m != j {
                w *= (u - um) / (nodes[j].0 - um);
            }
        }
        w
    };
    let extrap: Vec3 = (0..3).map(|j| nodes[j].1 * lag(0.0, j)).sum();
    // Two-level estimate from the outer pair, for the convergence check.
    let (u0, v0) = nodes[0];
    let (u1, v1) = nodes[1];
    let two = v0 * (u1 / (u1 - u0)) - v1 * (u0 / (u1 - u0));
    if (extrap - two).norm() > 1e-2 {
        return numerical(format!("A extraction did not converge: estimates differ by {:.3e}", (extrap - two).norm()));
    }
    Ok(extrap.normalize())
}

/// B on `side` from the limit of (n + i b) e^{i s^2/4t} e^{i a^2 log(|s|/sqrt t)}.
pub fn extract_b(frame: &FrameField, a: f64, side: Side, t: f64, a_vec: &Vec3) -> Result<BEstimate> {
    let grid = &frame.grid;
    let s_max = match side {
        Side::Plus => grid.last(),
        Side::Minus => -grid.first(),
    };
    if s_max < min_half_width(a) * t.sqrt() {
        return invalid("frame does not extend far enough for B extraction");
    }
    let idx = window(grid, side, 0.9 * s_max, s_max);
    if idx.is_empty() {
        return invalid("B extraction window is empty");
    }
    let samples: Vec<CVec3> = idx
        .iter()
        .map(|&i| {
            let s = grid.x(i);
            let phase = s * s / (4.0 * t) + a * a * (s.abs() / t.sqrt()).ln();
            complex_vec(&frame.n_re[i], &frame.n_im[i]) * Complex64::from_polar(1.0, phase)
        })
        .collect();
    let raw = samples.iter().sum::<CVec3>() / Complex64::new(samples.len() as f64, 0.0);
    let spread = samples.iter().map(|z| (z - raw).norm()).fold(0.0, f64::max);
    if spread > 1e-1 {
        return numerical(format!("phase removal left oscillation of size {spread:.3e}"));
    }
    Ok(BEstimate { raw, polished: polish_b(&raw, a_vec), spread })
}

/// Project Re B, Im B off A and orthonormalize, keeping Re B's direction.
pub fn polish_b(b: &CVec3, a_vec: &Vec3) -> CVec3 {
    let a = a_vec.normalize();
    let mut re = b.map(|z| z.re);
    re -= a * a.dot(&re);
    re = re.normalize();
    let im = a.cross(&re);
    let im_meas = b.map(|z| z.im);
    let im = if im.dot(&im_meas) >= 0.0 { im } else { -im };
    complex_vec(&re, &im)
}

/// chi_a(t, x) = sqrt(t) G_a(x / sqrt(t)); at t = 0 the two rays A+- x.
pub fn evaluate_selfsimilar(profile: &SelfSimilarProfile, t: f64, x: f64) -> Result<Vec3> {
    if !(t >= 0.0) {
        return invalid(format!("t = {t} must be nonnegative here"));
    }
    if t == 0.0 {
        return Ok(if x >= 0.0 { profile.a_plus * x } else { profile.a_minus * x });
    }
    let rt = t.sqrt();
    let s = x / rt;
    let grid = &profile.profile.grid;
    if s < grid.first() || s > grid.last() {
        return invalid(format!("s = {s} lies beyond the profile grid"));
    }
    let r = grid.coord(s);
    let j = (r.floor() as usize).min(grid.len() - 2);
    let w = r - j as f64;
    let p = &profile.profile.points;
    Ok((p[j] * (1.0 - w) + p[j + 1] * w) * rt)
}

/// chi_a(t, 0): 2a sqrt(t) e3 for t >= 0 and 2a sqrt(|t|) rho e3 for t < 0.
pub fn origin_trajectory(a: f64, t: f64, rho: Option<&Matrix3<f64>>) -> Result<Vec3> {
    let e = Vec3::z() * (2.0 * a * t.abs().sqrt());
    if t >= 0.0 {
        return Ok(e);
    }
    match rho {
        Some(r) => Ok(r * e),
        None => invalid("negative times need the continuation rotation"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Remainders {
    /// sup |T - A + (2a/s) b| s^2 over |s| in [L/10, L/2) and over [L/2, L].
    pub tangent: (f64, f64),
    /// sup |G - A (s + 2a^2/s) + (4a/s^2) n| s^3.
    pub position: (f64, f64),
    /// sup |(n + i b) e^{i phi} - B| |s|.
    pub normal: (f64, f64),
}

impl Remainders {
    /// Bounded means finite and not growing toward the end of the grid.
    pub fn bounded(&self) -> bool {
        [self.tangent, self.position, self.normal]
            .iter()
            .all(|(inner, outer)| inner.is_finite() && outer.is_finite() && *outer <= 1.5 * inner + 1e-12)
    }
}

/// Scaled remainders of the large-|s| expansions over the outer decade
/// |s| in [L/10, L] on both sides, split at L/2.
pub fn remainders(p: &SelfSimilarProfile) -> Remainders {
    let grid = &p.frame.grid;
    let l = grid.last().min(-grid.first());
    let a = p.a;
    let mut out = [(0.0f64, 0.0f64); 3];
    for (side, av, bv) in [
        (Side::Plus, p.a_plus, p.b_plus),
        (Side::Minus, p.a_minus, p.b_minus),
    ] {
        for i in window(grid, side, 0.1 * l, l) {
            let s = grid.x(i);
            let (t, n, b) = (p.frame.t[i], p.frame.n_re[i], p.frame.n_im[i]);
            let rt = (t - av + b * (2.0 * a / s)).norm() * s * s;
            let g = p.profile.points[i];
            let rg = (g - av * (s + 2.0 * a * a / s) + n * (4.0 * a / (s * s))).norm() * s.abs().powi(3);
            let phase = s * s / 4.0 + a * a * s.abs().ln();
            let nb = complex_vec(&n, &b) * Complex64::from_polar(1.0, phase);
            let rn = (nb - bv).norm() * s.abs();
            let outer = s.abs() >= 0.5 * l;
            for (k, v) in [rt, rg, rn].into_iter().enumerate() {
                if outer {
                    out[k].1 = out[k].1.max(v);
                } else {
                    out[k].0 = out[k].0.max(v);
                }
            }
        }
    }
    Remainders { tangent: out[0], position: out[1], normal: out[2] }
}
