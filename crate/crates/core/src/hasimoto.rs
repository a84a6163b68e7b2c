//! Filament function, pseudo-conformal transform and curve reconstruction.

use crate::error::{invalid, Result};
use crate::geometry::{
    cumulative, curve_from_tangent, differentiate, interp, parallel_integrate, Frame, FrameField, Grid1D,
    SampledCurve, Vec3,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Psi,
    V,
    U,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilamentField {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
    pub time: f64,
    pub kind: FieldKind,
}

impl FilamentField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>, time: f64, kind: FieldKind) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for a grid of {} nodes", values.len(), grid.len()));
        }
        if let Some(i) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return invalid(format!("field is not finite at node {i}"));
        }
        Ok(Self { grid, values, time, kind })
    }

    pub fn from_fn(grid: Grid1D, time: f64, kind: FieldKind, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.xs().into_iter().map(f).collect();
        Self { grid, values, time, kind }
    }

    pub fn at(&self, x: f64) -> Complex64 {
        interp(&self.grid, &self.values, x, x > 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.grid.len()).map(|i| vec![self.grid.x(i), self.values[i].re, self.values[i].im]);
        crate::io::write_csv(path, &["x", "Re", "Im"], rows)
    }

    pub fn read_csv(path: &Path, grid: Grid1D, time: f64, kind: FieldKind) -> Result<Self> {
        let rows = crate::io::read_csv(path, &["x", "Re", "Im"])?;
        Self::new(grid, rows.iter().map(|r| Complex64::new(r[1], r[2])).collect(), time, kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub time: f64,
    pub kind: FieldKind,
    pub grid: Grid1D,
    /// The A(t) pinned for the run, when the field belongs to one.
    pub a_of_t: Option<f64>,
}

/// psi = c e^{i int_0^x tau}.
pub fn filament_function(grid: &Grid1D, c: &[f64], tau: &[f64], time: f64) -> Result<FilamentField> {
    if c.len() != grid.len() || tau.len() != grid.len() {
        return invalid("curvature and torsion must be sampled on the grid");
    }
    if let Some(i) = c.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid(format!("curvature must be finite and nonnegative (node {i})"));
    }
    let phase = cumulative(grid, tau, 0.0, 0.0);
    let values = c.iter().zip(&phase).map(|(c, p)| Complex64::from_polar(*c, *p)).collect();
    FilamentField::new(*grid, values, time, FieldKind::Psi)
}

/// psi(t, x) = e^{i x^2/4t} / sqrt(t) conj(v(1/t, x/t)), sampled on `target`.
pub fn pseudo_conformal(v: &FilamentField, t: f64, target: &Grid1D) -> Result<FilamentField> {
    if !(t > 0.0) {
        return invalid(format!("pseudo-conformal map needs t > 0, got {t}"));
    }
    if (v.time * t - 1.0).abs() > 1e-9 {
        return invalid(format!("v is given at time {} but the map at t = {t} reads time {}", v.time, 1.0 / t));
    }
    let (lo, hi) = (v.grid.first(), v.grid.last());
    let slack = 1e-9 * v.grid.h();
    if target.first() / t < lo - slack || target.last() / t > hi + slack {
        return invalid("requested x/t lies outside the grid of v");
    }
    let rt = t.sqrt();
    let values = target
        .xs()
        .into_iter()
        .map(|x| Complex64::from_polar(1.0 / rt, x * x / (4.0 * t)) * v.at(x / t).conj())
        .collect();
    FilamentField::new(*target, values, t, FieldKind::Psi)
}

/// Inverse of [`pseudo_conformal`]: v(1/t, y) = conj(sqrt(t) e^{-i t y^2/4} psi(t, t y)).
pub fn inverse_pseudo_conformal(psi: &FilamentField, target: &Grid1D) -> Result<FilamentField> {
    let t = psi.time;
    if !(t > 0.0) {
        return invalid("psi must carry a positive time");
    }
    let slack = 1e-9 * psi.grid.h();
    if target.first() * t < psi.grid.first() - slack || target.last() * t > psi.grid.last() + slack {
        return invalid("requested t*y lies outside the grid of psi");
    }
    let rt = t.sqrt();
    let values = target
        .xs()
        .into_iter()
        .map(|y| (Complex64::from_polar(rt, -t * y * y / 4.0) * psi.at(t * y)).conj())
        .collect();
    FilamentField::new(*target, values, 1.0 / t, FieldKind::V)
}

/// i psi_t + psi_xx + psi/2 (|psi|^2 - A(t)) at the interior slices, by
/// centered differences; boundary nodes are set to zero.
pub fn nls_residual(slices: &[FilamentField], a_of_t: impl Fn(f64) -> f64) -> Result<Vec<FilamentField>> {
    if slices.len() < 3 {
        return invalid("the residual needs at least three time slices");
    }
    let grid = slices[0].grid;
    if slices.iter().any(|s| !s.grid.same_as(&grid)) {
        return invalid("slices are sampled on different grids");
    }
    let dt = slices[1].time - slices[0].time;
    if !(dt != 0.0) {
        return invalid("slices must have distinct times");
    }
    for w in slices.windows(2) {
        if ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt.abs() {
            return invalid("slices are not equispaced in time");
        }
    }
    let h2 = grid.h() * grid.h();
    let n = grid.len();
    let i = Complex64::i();
    Ok(slices
        .windows(3)
        .map(|w| {
            let (p, c, f) = (&w[0].values, &w[1].values, &w[2].values);
            let big_a = a_of_t(w[1].time);
            let mut r = vec![Complex64::new(0.0, 0.0); n];
            for k in 1..n - 1 {
                let psi_t = (f[k] - p[k]) / (2.0 * dt);
                let psi_xx = (c[k + 1] - c[k] * 2.0 + c[k - 1]) / h2;
                r[k] = i * psi_t + psi_xx + c[k] * 0.5 * (c[k].norm_sqr() - big_a);
            }
            FilamentField { grid, values: r, time: w[1].time, kind: FieldKind::Psi }
        })
        .collect())
}

/// Parallel frame then tangent integration; the curve passes through
/// `anchor_point` at x = `anchor`.
pub fn reconstruct_curve(
    psi: &FilamentField,
    anchor_frame: &Frame,
    anchor_point: Vec3,
    anchor: f64,
) -> Result<(SampledCurve, FrameField)> {
    let frame = parallel_integrate(&psi.grid, &psi.values, anchor_frame, anchor)?;
    let curve = curve_from_tangent(&psi.grid, &frame.t, anchor_point, anchor)?;
    Ok((curve, frame))
}

/// Unit tangent of a sampled curve (fourth-order differences, renormalized).
pub fn tangent_of(curve: &SampledCurve) -> Vec<Vec3> {
    differentiate(&curve.grid, &curve.points).into_iter().map(|v| v.normalize()).collect()
}

/// Curvature and torsion of a curve with nonvanishing curvature.
pub fn curvature_torsion(curve: &SampledCurve) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = &curve.grid;
    let t = tangent_of(curve);
    let tx = differentiate(grid, &t);
    let c: Vec<f64> = tx.iter().map(|v| v.norm()).collect();
    if let Some(i) = c.iter().position(|v| *v < 1e-8) {
        return invalid(format!("curvature vanishes near node {i}; use the parallel frame"));
    }
    let n: Vec<Vec3> = tx.iter().zip(&c).map(|(v, c)| v / *c).collect();
    let b: Vec<Vec3> = t.iter().zip(&n).map(|(t, n)| t.cross(n)).collect();
    let bx = differentiate(grid, &b);
    let tau = bx.iter().zip(&n).map(|(bx, n)| -bx.dot(n)).collect();
    Ok((c, tau))
}

/// Filament function of a tangent field through the parallel frame:
/// N' = -(T'.N) T from `n0` at `anchor`, then psi = T'.N (bilinear, no
/// conjugation). Works through points of zero curvature.
pub fn parallel_filament(grid: &Grid1D, t: &[Vec3], n0: (Vec3, Vec3), anchor: f64) -> Result<(Vec<Complex64>, FrameField)> {
    if t.len() != grid.len() {
        return invalid("tangent must be sampled on the grid");
    }
    let tx = differentiate(grid, t);
    let t0 = interp(grid, t, anchor, anchor > 0.0).normalize();
    let frame0 = Frame { t: t0, n_re: n0.0, n_im: n0.1 };
    frame0.validate()?;
    let frame = transport_normal(grid, t, &tx, &frame0, anchor);
    let psi = (0..grid.len())
        .map(|i| Complex64::new(tx[i].dot(&frame.n_re[i]), tx[i].dot(&frame.n_im[i])))
        .collect();
    Ok((psi, frame))
}

/// RK4 for R' = -(T'.R) T, I' = -(T'.I) T with T, T' interpolated from nodes.
pub fn transport_normal(grid: &Grid1D, t: &[Vec3], tx: &[Vec3], frame0: &Frame, anchor: f64) -> FrameField {
    let n = grid.len();
    let mut frames = vec![*frame0; n];
    let rhs = |x: f64, pos: bool, r: &Vec3, im: &Vec3| {
        let tt = interp(grid, t, x, pos);
        let txx = interp(grid, tx, x, pos);
        (-tt * txx.dot(r), -tt * txx.dot(im))
    };
    let tol = 1e-12 * grid.h();
    let ip = (0..n).find(|&i| grid.x(i) >= anchor - tol);
    let right: Vec<usize> = ip.map(|k| (k..n).collect()).unwrap_or_default();
    let left: Vec<usize> = (0..n).rev().filter(|&i| grid.x(i) < anchor - tol).collect();
    for idx in [right, left] {
        let (mut x, mut r, mut im) = (anchor, frame0.n_re, frame0.n_im);
        for i in idx {
            let xb = grid.x(i);
            let h = xb - x;
            if h.abs() > tol {
                let pos = x + xb > 0.0;
                let xm = 0.5 * (x + xb);
                let k1 = rhs(x, pos, &r, &im);
                let k2 = rhs(xm, pos, &(r + k1.0 * (0.5 * h)), &(im + k1.1 * (0.5 * h)));
                let k3 = rhs(xm, pos, &(r + k2.0 * (0.5 * h)), &(im + k2.1 * (0.5 * h)));
                let k4 = rhs(xb, pos, &(r + k3.0 * h), &(im + k3.1 * h));
                r += (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0);
                im += (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (h / 6.0);
            }
            let tt = t[i].normalize();
            r -= tt * tt.dot(&r);
            r = r.normalize();
            im -= tt * tt.dot(&im) + r * r.dot(&im);
            im = im.normalize();
            frames[i] = Frame { t: tt, n_re: r, n_im: im };
            x = xb;
        }
    }
    FrameField::from_frames(*grid, &frames)
}
