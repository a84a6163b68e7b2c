//! Discrete curves, orthonormal frames and the frame ODE integrators.
//!
//! Frames are stored as three real vector fields `(T, Re N, Im N)`. Both the
//! Frenet triple `(T, n, b)` and the parallel frame `(T, N)` fit this layout:
//! for Frenet data `Re N = n`, `Im N = b`.

use crate::error::{invalid, numerical, Result};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul};
use std::path::Path;

pub type Vec3 = Vector3<f64>;
pub type CVec3 = Vector3<Complex64>;

pub const ORTHO_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Nodes at both endpoints, h = (x_max - x_min)/(n - 1).
    Nodal,
    /// Nodes at cell centres x_min + (i + 1/2) h, h = (x_max - x_min)/n.
    Staggered,
    /// Nodes x_min + i h with h = (x_max - x_min)/n, x_max identified with x_min.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_nodes: usize,
    pub layout: Layout,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_nodes: usize, layout: Layout) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return invalid(format!("grid bounds [{x_min}, {x_max}] are not an interval"));
        }
        if n_nodes < 3 {
            return invalid(format!("grid needs at least 3 nodes, got {n_nodes}"));
        }
        Ok(Self { x_min, x_max, n_nodes, layout })
    }

    /// Staggered grid on [-half_width, half_width] whose spacing is as close
    /// to `h` as an even node count allows; x = 0 falls between two nodes.
    pub fn symmetric(half_width: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(half_width > 0.0) {
            return invalid("symmetric grid needs positive half width and spacing");
        }
        let half = (half_width / h).round().max(2.0) as usize;
        Self::new(-half_width, half_width, 2 * half, Layout::Staggered)
    }

    /// Staggered grid with exact spacing `h` and `half` nodes on each side of 0.
    pub fn symmetric_exact(h: f64, half: usize) -> Result<Self> {
        let w = h * half as f64;
        Self::new(-w, w, 2 * half, Layout::Staggered)
    }

    pub fn periodic(x_min: f64, width: f64, n_nodes: usize) -> Result<Self> {
        Self::new(x_min, x_min + width, n_nodes, Layout::Periodic)
    }

    /// Grid whose nodes are `xs`, which must be equispaced.
    pub fn from_nodes(xs: &[f64], layout: Layout) -> Result<Self> {
        if xs.len() < 3 {
            return invalid(format!("grid needs at least 3 nodes, got {}", xs.len()));
        }
        let n = xs.len();
        let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        if let Some(i) = (0..n).find(|&i| (xs[i] - (xs[0] + i as f64 * h)).abs() > 1e-9 * (1.0 + xs[i].abs())) {
            return invalid(format!("nodes are not equispaced (node {i})"));
        }
        match layout {
            Layout::Nodal => Self::new(xs[0], xs[n - 1], n, layout),
            Layout::Staggered => Self::new(xs[0] - 0.5 * h, xs[n - 1] + 0.5 * h, n, layout),
            Layout::Periodic => Self::new(xs[0], xs[n - 1] + h, n, layout),
        }
    }

    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.n_nodes == 0
    }

    pub fn h(&self) -> f64 {
        let w = self.x_max - self.x_min;
        match self.layout {
            Layout::Nodal => w / (self.n_nodes - 1) as f64,
            Layout::Staggered | Layout::Periodic => w / self.n_nodes as f64,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        let h = self.h();
        match self.layout {
            Layout::Nodal | Layout::Periodic => self.x_min + i as f64 * h,
            Layout::Staggered => self.x_min + (i as f64 + 0.5) * h,
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.x(i)).collect()
    }

    pub fn first(&self) -> f64 {
        self.x(0)
    }

    pub fn last(&self) -> f64 {
        self.x(self.n_nodes - 1)
    }

    /// Fractional node coordinate of `x`, i.e. `x = x(0) + r h`.
    pub fn coord(&self, x: f64) -> f64 {
        (x - self.first()) / self.h()
    }

    /// Index of the first node with x > 0 when the grid straddles the origin.
    pub fn split(&self) -> Option<usize> {
        if !(self.first() < 0.0 && self.last() > 0.0) {
            return None;
        }
        let mut k = (self.coord(0.0).floor().max(0.0) as usize).min(self.n_nodes - 1);
        while k > 0 && self.x(k - 1) > 0.0 {
            k -= 1;
        }
        while self.x(k) <= 0.0 {
            k += 1;
        }
        Some(k)
    }

    /// Node range usable for interpolation on the given side of the origin.
    pub fn branch(&self, positive: bool) -> (usize, usize) {
        match self.split() {
            Some(k) if positive => (k, self.n_nodes - 1),
            Some(k) => (0, k.saturating_sub(1)),
            None => (0, self.n_nodes - 1),
        }
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.layout == other.layout
            && self.n_nodes == other.n_nodes
            && (self.x_min - other.x_min).abs() <= 1e-12 * (1.0 + self.x_min.abs())
            && (self.x_max - other.x_max).abs() <= 1e-12 * (1.0 + self.x_max.abs())
    }
}

fn lagrange4(r: f64) -> [f64; 4] {
    [
        -(r - 1.0) * (r - 2.0) * (r - 3.0) / 6.0,
        r * (r - 2.0) * (r - 3.0) / 2.0,
        -r * (r - 1.0) * (r - 3.0) / 2.0,
        r * (r - 1.0) * (r - 2.0) / 6.0,
    ]
}

/// Cubic Lagrange interpolation at `x` using only nodes on one side of the
/// origin (the side of `positive`), so that data with a jump at 0 are never
/// blended across it. Points outside the branch are extrapolated.
pub fn interp<T>(grid: &Grid1D, f: &[T], x: f64, positive: bool) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let (lo, hi) = grid.branch(positive);
    let r = grid.coord(x);
    if hi == lo {
        return f[lo];
    }
    if hi - lo < 3 {
        let j = (r.floor() as isize).clamp(lo as isize, hi as isize - 1) as usize;
        let w = r - j as f64;
        return f[j] * (1.0 - w) + f[j + 1] * w;
    }
    let j = r.floor() as isize - 1;
    let s = j.clamp(lo as isize, hi as isize - 3) as usize;
    let w = lagrange4(r - s as f64);
    f[s] * w[0] + f[s + 1] * w[1] + f[s + 2] * w[2] + f[s + 3] * w[3]
}

/// Integral of the branch-local cubic interpolant over [xa, xb]. Two-point
/// Gauss is exact for cubics as long as the stencil is fixed on the interval,
/// which holds when [xa, xb] lies within one grid cell.
pub fn integrate_cell<T>(grid: &Grid1D, f: &[T], xa: f64, xb: f64, positive: bool) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let m = 0.5 * (xa + xb);
    let d = 0.5 * (xb - xa);
    let g = d / 3f64.sqrt();
    (interp(grid, f, m - g, positive) + interp(grid, f, m + g, positive)) * d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: Vec3,
    pub n_re: Vec3,
    pub n_im: Vec3,
}

impl Frame {
    pub fn canonical() -> Self {
        Self { t: Vec3::x(), n_re: Vec3::y(), n_im: Vec3::z() }
    }

    pub fn from_complex(t: Vec3, n: &CVec3) -> Self {
        Self { t, n_re: n.map(|z| z.re), n_im: n.map(|z| z.im) }
    }

    pub fn n(&self) -> CVec3 {
        complex_vec(&self.n_re, &self.n_im)
    }

    pub fn defect(&self) -> f64 {
        [
            (self.t.norm() - 1.0).abs(),
            (self.n_re.norm() - 1.0).abs(),
            (self.n_im.norm() - 1.0).abs(),
            self.t.dot(&self.n_re).abs(),
            self.t.dot(&self.n_im).abs(),
            self.n_re.dot(&self.n_im).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Right-handed means T x Re N = Im N.
    pub fn is_right_handed(&self) -> bool {
        self.t.cross(&self.n_re).dot(&self.n_im) > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t, self.n_re, self.n_im];
        if all.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return invalid("frame has non-finite entries");
        }
        let d = self.defect();
        if d > ORTHO_TOL {
            return invalid(format!("frame is not orthonormal (defect {d:.3e})"));
        }
        Ok(())
    }

    pub fn gram_schmidt(mut self) -> Self {
        self.t /= self.t.norm();
        self.n_re -= self.t * self.t.dot(&self.n_re);
        self.n_re /= self.n_re.norm();
        self.n_im -= self.t * self.t.dot(&self.n_im) + self.n_re * self.n_re.dot(&self.n_im);
        self.n_im /= self.n_im.norm();
        self
    }

    /// Multiply the complex normal by e^{i phi}.
    pub fn rotate_normal(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self {
            t: self.t,
            n_re: self.n_re * c - self.n_im * s,
            n_im: self.n_re * s + self.n_im * c,
        }
    }

    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        Self { t: r * self.t, n_re: r * self.n_re, n_im: r * self.n_im }
    }
}

pub fn complex_vec(re: &Vec3, im: &Vec3) -> CVec3 {
    CVec3::new(
        Complex64::new(re.x, im.x),
        Complex64::new(re.y, im.y),
        Complex64::new(re.z, im.z),
    )
}

pub fn re_part(v: &CVec3) -> Vec3 {
    v.map(|z| z.re)
}

pub fn im_part(v: &CVec3) -> Vec3 {
    v.map(|z| z.im)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameField {
    pub grid: Grid1D,
    pub t: Vec<Vec3>,
    pub n_re: Vec<Vec3>,
    pub n_im: Vec<Vec3>,
}

impl FrameField {
    pub fn frame(&self, i: usize) -> Frame {
        Frame { t: self.t[i], n_re: self.n_re[i], n_im: self.n_im[i] }
    }

    pub fn n(&self, i: usize) -> CVec3 {
        complex_vec(&self.n_re[i], &self.n_im[i])
    }

    pub fn from_frames(grid: Grid1D, frames: &[Frame]) -> Self {
        Self {
            grid,
            t: frames.iter().map(|f| f.t).collect(),
            n_re: frames.iter().map(|f| f.n_re).collect(),
            n_im: frames.iter().map(|f| f.n_im).collect(),
        }
    }

    pub fn max_defect(&self) -> f64 {
        (0..self.t.len()).map(|i| self.frame(i).defect()).fold(0.0, f64::max)
    }

    /// Frame interpolated at `x` (cubic, branch-local) and re-orthonormalized.
    pub fn frame_at(&self, x: f64) -> Frame {
        let pos = x > 0.0;
        Frame {
            t: interp(&self.grid, &self.t, x, pos),
            n_re: interp(&self.grid, &self.n_re, x, pos),
            n_im: interp(&self.grid, &self.n_im, x, pos),
        }
        .gram_schmidt()
    }

    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        Self {
            grid: self.grid,
            t: self.t.iter().map(|v| r * v).collect(),
            n_re: self.n_re.iter().map(|v| r * v).collect(),
            n_im: self.n_im.iter().map(|v| r * v).collect(),
        }
    }
}

/// Coefficients (alpha, beta, gamma) of the skew system
/// T' = alpha R + beta I, R' = -alpha T + gamma I, I' = -beta T - gamma R.
fn rhs(f: &Frame, k: (f64, f64, f64)) -> Frame {
    let (al, be, ga) = k;
    Frame {
        t: f.n_re * al + f.n_im * be,
        n_re: -f.t * al + f.n_im * ga,
        n_im: -f.t * be - f.n_re * ga,
    }
}

fn axpy(f: &Frame, d: &Frame, s: f64) -> Frame {
    Frame { t: f.t + d.t * s, n_re: f.n_re + d.n_re * s, n_im: f.n_im + d.n_im * s }
}

fn rk4_step<F>(f: &Frame, xa: f64, xb: f64, coef: &F) -> Frame
where
    F: Fn(f64) -> (f64, f64, f64),
{
    let h = xb - xa;
    let xm = 0.5 * (xa + xb);
    let km = coef(xm);
    let k1 = rhs(f, coef(xa));
    let k2 = rhs(&axpy(f, &k1, 0.5 * h), km);
    let k3 = rhs(&axpy(f, &k2, 0.5 * h), km);
    let k4 = rhs(&axpy(f, &k3, h), coef(xb));
    Frame {
        t: f.t + (k1.t + (k2.t + k3.t) * 2.0 + k4.t) * (h / 6.0),
        n_re: f.n_re + (k1.n_re + (k2.n_re + k3.n_re) * 2.0 + k4.n_re) * (h / 6.0),
        n_im: f.n_im + (k1.n_im + (k2.n_im + k3.n_im) * 2.0 + k4.n_im) * (h / 6.0),
    }
    .gram_schmidt()
}

/// Walk outward from `anchor` in both directions, calling `visit(i, xa, xb)`
/// for each step that lands on node i, starting at xa.
fn outward_steps(grid: &Grid1D, anchor: f64) -> (Vec<(usize, f64, f64)>, Vec<(usize, f64, f64)>) {
    let n = grid.len();
    let tol = 1e-12 * grid.h();
    let mut right = Vec::new();
    let mut left = Vec::new();
    let ip = (0..n).find(|&i| grid.x(i) >= anchor - tol);
    if let Some(ip) = ip {
        let mut prev = anchor;
        for i in ip..n {
            right.push((i, prev, grid.x(i)));
            prev = grid.x(i);
        }
    }
    let im = (0..n).rev().find(|&i| grid.x(i) < anchor - tol);
    if let Some(im) = im {
        let mut prev = anchor;
        for i in (0..=im).rev() {
            left.push((i, prev, grid.x(i)));
            prev = grid.x(i);
        }
    }
    (right, left)
}

fn integrate_skew<F>(grid: &Grid1D, frame0: &Frame, anchor: f64, coef: F) -> FrameField
where
    F: Fn(f64, bool) -> (f64, f64, f64),
{
    let n = grid.len();
    let mut frames = vec![*frame0; n];
    let (right, left) = outward_steps(grid, anchor);
    for steps in [right, left] {
        let mut cur = *frame0;
        for (i, xa, xb) in steps {
            if (xb - xa).abs() > 1e-12 * grid.h() {
                let pos = xa + xb > 0.0;
                cur = rk4_step(&cur, xa, xb, &|x| coef(x, pos));
            }
            frames[i] = cur;
        }
    }
    FrameField::from_frames(*grid, &frames)
}

fn check_field(name: &str, f: &[f64], grid: &Grid1D) -> Result<()> {
    if f.len() != grid.len() {
        return invalid(format!("{name} has {} samples, grid has {}", f.len(), grid.len()));
    }
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return invalid(format!("{name} is not finite at node {i}"));
    }
    Ok(())
}

fn check_anchor(grid: &Grid1D, anchor: f64) -> Result<()> {
    let (a, b) = (grid.first() - grid.h(), grid.last() + grid.h());
    if !(anchor >= a && anchor <= b) {
        return invalid(format!("anchor {anchor} lies outside the grid"));
    }
    Ok(())
}

/// Frenet system T' = c n, n' = -c T + tau b, b' = -tau n, with the frame
/// `frame0 = (T, n, b)` prescribed at x = `anchor`.
pub fn frenet_integrate(grid: &Grid1D, c: &[f64], tau: &[f64], frame0: &Frame, anchor: f64) -> Result<FrameField> {
    check_field("curvature", c, grid)?;
    check_field("torsion", tau, grid)?;
    frame0.validate()?;
    check_anchor(grid, anchor)?;
    Ok(integrate_skew(grid, frame0, anchor, |x, pos| {
        (interp(grid, c, x, pos), 0.0, interp(grid, tau, x, pos))
    }))
}

/// Parallel frame T' = Re(conj(psi) N), N' = -psi T from (T0, N0) at `anchor`.
pub fn parallel_integrate(grid: &Grid1D, psi: &[Complex64], frame0: &Frame, anchor: f64) -> Result<FrameField> {
    if psi.len() != grid.len() {
        return invalid(format!("psi has {} samples, grid has {}", psi.len(), grid.len()));
    }
    if let Some(i) = psi.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return invalid(format!("psi is not finite at node {i}"));
    }
    frame0.validate()?;
    check_anchor(grid, anchor)?;
    Ok(integrate_skew(grid, frame0, anchor, |x, pos| {
        let z = interp(grid, psi, x, pos);
        (z.re, z.im, 0.0)
    }))
}

/// Parallel frame driven by a coefficient available pointwise.
pub fn parallel_integrate_fn<F>(grid: &Grid1D, psi: F, frame0: &Frame, anchor: f64) -> Result<FrameField>
where
    F: Fn(f64) -> Complex64,
{
    frame0.validate()?;
    check_anchor(grid, anchor)?;
    Ok(integrate_skew(grid, frame0, anchor, |x, _| {
        let z = psi(x);
        (z.re, z.im, 0.0)
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub grid: Grid1D,
    pub points: Vec<Vec3>,
}

impl SampledCurve {
    pub fn max_chord_defect(&self) -> f64 {
        let h = self.grid.h();
        self.points
            .windows(2)
            .map(|w| ((w[1] - w[0]).norm() / h - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn transformed(&self, m: &RigidMotion) -> Self {
        Self { grid: self.grid, points: self.points.iter().map(|p| m.apply(p)).collect() }
    }

    pub fn at(&self, x: f64) -> Vec3 {
        interp(&self.grid, &self.points, x, x > 0.0)
    }
}

/// chi(x) = basepoint + int_anchor^x T, cumulative 4th-order quadrature of the
/// branch-local cubic interpolant of T.
pub fn curve_from_tangent(grid: &Grid1D, t: &[Vec3], basepoint: Vec3, anchor: f64) -> Result<SampledCurve> {
    if t.len() != grid.len() {
        return invalid(format!("tangent has {} samples, grid has {}", t.len(), grid.len()));
    }
    if let Some(i) = t.iter().position(|v| !((v.norm() - 1.0).abs() < 1e-6)) {
        return invalid(format!("tangent is not unit length at node {i}"));
    }
    check_anchor(grid, anchor)?;
    Ok(integrate_vectors(grid, t, basepoint, anchor))
}

/// Same cumulative quadrature without the unit-length precondition.
pub fn integrate_vectors(grid: &Grid1D, f: &[Vec3], basepoint: Vec3, anchor: f64) -> SampledCurve {
    SampledCurve { grid: *grid, points: cumulative(grid, f, basepoint, anchor) }
}

/// base + int_anchor^x f at every node, one grid cell at a time.
pub fn cumulative<T>(grid: &Grid1D, f: &[T], base: T, anchor: f64) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let mut out = vec![base; grid.len()];
    let (right, left) = outward_steps(grid, anchor);
    for steps in [right, left] {
        let mut cur = base;
        for (i, xa, xb) in steps {
            if (xb - xa).abs() > 1e-12 * grid.h() {
                cur = cur + integrate_cell(grid, f, xa, xb, xa + xb > 0.0);
            }
            out[i] = cur;
        }
    }
    out
}

const D1: [[f64; 5]; 5] = [
    [-25.0, 48.0, -36.0, 16.0, -3.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0],
    [1.0, -8.0, 0.0, 8.0, -1.0],
    [-1.0, 6.0, -18.0, 10.0, 3.0],
    [3.0, -16.0, 36.0, -48.0, 25.0],
];

/// Fourth-order first derivative with five-point stencils kept on one side of
/// the origin.
pub fn differentiate<T>(grid: &Grid1D, f: &[T]) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let h = grid.h();
    (0..grid.len())
        .map(|i| {
            let (mut lo, mut hi) = grid.branch(grid.x(i) > 0.0);
            if hi - lo < 4 {
                (lo, hi) = (0, grid.len() - 1);
            }
            let s = (i as isize - 2).clamp(lo as isize, hi as isize - 4) as usize;
            let w = &D1[i - s];
            let mut acc = f[s] * (w[0] / (12.0 * h));
            for k in 1..5 {
                acc = acc + f[s + k] * (w[k] / (12.0 * h));
            }
            acc
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn rotation(r: Matrix3<f64>) -> Self {
        Self { rotation: r, translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn compose(&self, inner: &RigidMotion) -> Self {
        Self {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn orthogonality_defect(&self) -> f64 {
        (self.rotation * self.rotation.transpose() - Matrix3::identity()).abs().max()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.orthogonality_defect();
        if d > 1e-10 || self.rotation.determinant() < 0.0 {
            return invalid(format!("not a proper rotation (defect {d:.3e})"));
        }
        Ok(())
    }
}

/// Rotation by `angle` about the unit axis `k` (Rodrigues).
pub fn axis_rotation(k: &Vec3, angle: f64) -> Matrix3<f64> {
    let k = k.normalize();
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub motion: RigidMotion,
    pub rms: f64,
    pub max: f64,
    pub degenerate: bool,
}

/// Least-squares rigid motion carrying `a` onto `b` (Kabsch).
pub fn align_points(a: &[Vec3], b: &[Vec3]) -> Result<Alignment> {
    if a.len() != b.len() || a.is_empty() {
        return invalid("alignment needs two nonempty point sets of equal size");
    }
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vec3>() / n;
    let cb = b.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (p - ca) * (q - cb).transpose();
        cov += (p - ca) * (p - ca).transpose();
    }
    let spread = cov.symmetric_eigenvalues();
    let smax = spread.max();
    let mut sorted = [spread[0], spread[1], spread[2]];
    sorted.sort_by(|x, y| y.total_cmp(x));
    let degenerate = smax <= 0.0 || sorted[1] <= 1e-20 * smax.max(1e-300);
    let svd = h.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return numerical("SVD failed in alignment"),
    };
    let v = vt.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let k = svd.singular_values.imin();
        d[(k, k)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let motion = RigidMotion { rotation, translation: cb - rotation * ca };
    let (mut ss, mut mx) = (0.0, 0.0f64);
    for (p, q) in a.iter().zip(b) {
        let e = (motion.apply(p) - q).norm();
        ss += e * e;
        mx = mx.max(e);
    }
    Ok(Alignment { motion, rms: (ss / n).sqrt(), max: mx, degenerate })
}

pub fn align(a: &SampledCurve, b: &SampledCurve) -> Result<Alignment> {
    if !a.grid.same_as(&b.grid) {
        return invalid("curves are sampled on different grids");
    }
    align_points(&a.points, &b.points)
}

pub const CURVE_COLUMNS: [&str; 13] = [
    "x", "px", "py", "pz", "Tx", "Ty", "Tz", "ReNx", "ReNy", "ReNz", "ImNx", "ImNy", "ImNz",
];

pub fn write_curve_csv(path: &Path, curve: &SampledCurve, frame: &FrameField) -> Result<()> {
    if !curve.grid.same_as(&frame.grid) {
        return invalid("curve and frame are sampled on different grids");
    }
    let rows = (0..curve.grid.len()).map(|i| {
        let mut r = vec![curve.grid.x(i)];
        for v in [curve.points[i], frame.t[i], frame.n_re[i], frame.n_im[i]] {
            r.extend_from_slice(v.as_slice());
        }
        r
    });
    crate::io::write_csv(path, &CURVE_COLUMNS, rows)
}

pub fn read_curve_csv(path: &Path, grid: Grid1D) -> Result<(SampledCurve, FrameField)> {
    let rows = crate::io::read_csv(path, &CURVE_COLUMNS)?;
    if rows.len() != grid.len() {
        return invalid(format!("{} rows for a grid of {} nodes", rows.len(), grid.len()));
    }
    let v = |r: &Vec<f64>, k: usize| Vec3::new(r[k], r[k + 1], r[k + 2]);
    let curve = SampledCurve { grid, points: rows.iter().map(|r| v(r, 1)).collect() };
    let frame = FrameField {
        grid,
        t: rows.iter().map(|r| v(r, 4)).collect(),
        n_re: rows.iter().map(|r| v(r, 7)).collect(),
        n_im: rows.iter().map(|r| v(r, 10)).collect(),
    };
    Ok((curve, frame))
}
