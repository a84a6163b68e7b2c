//! Continuation through t = 0: the rotation rho by pi about A+ - A-, the
//! planes and rotations around it, reflected coupling data, and gluing of a
//! reflected run onto negative times.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::binormal::{FlowTrajectory, Slice, TraceAtZero};
use crate::error::{invalid, numerical, Result};
use crate::geometry::{align_points, axis_rotation, CVec3, FrameField, Grid1D, RigidMotion, SampledCurve, Vec3};
use crate::trace_series::{fplus_from_g, CornerData, CouplingData};

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationFrame {
    pub rho: RigidMotion,
    /// Normal of the plane spanned by A+ and A-.
    pub pi_normal: Vec3,
    /// Normal of the plane through the axis of rho perpendicular to the first.
    pub pi_o_normal: Vec3,
    /// Rotation about A+ (resp. A-) taking Re B+ (resp. Re B-) to its mirror
    /// image in the plane of A+ and A-.
    pub r_plus: Matrix3<f64>,
    pub r_minus: Matrix3<f64>,
    /// Angles between Re B+- and that plane.
    pub theta_plus: f64,
    pub theta_minus: f64,
    /// rho B+ = c conj(B-) and rho B- = c conj(B+) with this unimodular c.
    pub phase: C,
}

fn reflection(n: &Vec3) -> Matrix3<f64> {
    Matrix3::identity() - n * n.transpose() * 2.0
}

fn apply_c(r: &Matrix3<f64>, v: &CVec3) -> CVec3 {
    let re = r * v.map(|z| z.re);
    let im = r * v.map(|z| z.im);
    crate::geometry::complex_vec(&re, &im)
}

fn signed_angle(from: &Vec3, to: &Vec3, axis: &Vec3) -> f64 {
    let k = axis.normalize();
    from.cross(to).dot(&k).atan2(from.dot(to))
}

/// Rotation about `axis` carrying Re B to its mirror image in the plane with
/// normal `n`, and the angle between Re B and that plane.
fn mirror_rotation(axis: &Vec3, re_b: &Vec3, n: &Vec3) -> (Matrix3<f64>, f64) {
    let mirrored = reflection(n) * re_b;
    let phi = signed_angle(re_b, &mirrored, axis);
    let theta = (re_b.dot(n) / re_b.norm()).clamp(-1.0, 1.0).asin().abs();
    if theta == 0.0 {
        return (Matrix3::identity(), 0.0);
    }
    (axis_rotation(axis, phi), theta)
}

pub fn build_continuation(corner: &CornerData) -> Result<ContinuationFrame> {
    let (ap, am) = (corner.a_plus.normalize(), corner.a_minus.normalize());
    let cross = ap.cross(&am);
    if cross.norm() < 1e-10 {
        return invalid("A+ and A- are colinear: there is no corner");
    }
    let u = (ap - am).normalize();
    let rho = u * u.transpose() * 2.0 - Matrix3::identity();
    let pi_normal = cross.normalize();
    let pi_o_normal = u.cross(&pi_normal).normalize();
    let (r_plus, theta_plus) = mirror_rotation(&ap, &corner.b_plus.map(|z| z.re), &pi_normal);
    let (r_minus, theta_minus) = mirror_rotation(&am, &corner.b_minus.map(|z| z.re), &pi_normal);
    let phase = apply_c(&rho, &corner.b_plus).dot(&corner.b_minus) / 2.0;
    let phase = phase / phase.norm();
    Ok(ContinuationFrame {
        rho: RigidMotion::rotation(rho),
        pi_normal,
        pi_o_normal,
        r_plus,
        r_minus,
        theta_plus,
        theta_minus,
        phase,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ContinuationIdentities {
    /// |rho^2 - I|.
    pub involution: f64,
    /// |rho - S_Pi S_Pi°|.
    pub factorization: f64,
    /// max |rho A+- + A-+|.
    pub a_swap: f64,
    /// max |rho B+- - R-+ conj(B-+)|.
    pub b_swap: f64,
    /// max |rho B+- - c conj(B-+)|.
    pub b_phase: f64,
    /// Angles between Re B+- and Im B+-, minus pi/2.
    pub b_orthogonality: [f64; 2],
}

impl ContinuationFrame {
    pub fn identities(&self, corner: &CornerData) -> ContinuationIdentities {
        let r = self.rho.rotation;
        let id = Matrix3::identity();
        let fact = reflection(&self.pi_normal) * reflection(&self.pi_o_normal);
        let a_swap = (r * corner.a_plus + corner.a_minus).norm().max((r * corner.a_minus + corner.a_plus).norm());
        let (bp, bm) = (corner.b_plus, corner.b_minus);
        let b_swap = (apply_c(&r, &bp) - apply_c(&self.r_minus, &bm.conjugate()))
            .norm()
            .max((apply_c(&r, &bm) - apply_c(&self.r_plus, &bp.conjugate())).norm());
        let c = self.phase;
        let b_phase = (apply_c(&r, &bp) - bm.conjugate() * c).norm().max((apply_c(&r, &bm) - bp.conjugate() * c).norm());
        let orth = |b: &CVec3| {
            let (re, im) = (b.map(|z| z.re), b.map(|z| z.im));
            (re.dot(&im) / (re.norm() * im.norm())).clamp(-1.0, 1.0).acos() - std::f64::consts::FRAC_PI_2
        };
        ContinuationIdentities {
            involution: (r * r - id).abs().max(),
            factorization: (r - fact).abs().max(),
            a_swap,
            b_swap,
            b_phase,
            b_orthogonality: [orth(&bp), orth(&bm)],
        }
    }

    /// Corner data of the reversed datum: rho applied to (A+-, B+-).
    pub fn reflected_corner(&self, corner: &CornerData) -> CornerData {
        let r = self.rho.rotation;
        CornerData {
            a: corner.a,
            a_plus: r * corner.a_plus,
            a_minus: r * corner.a_minus,
            b_plus: apply_c(&r, &corner.b_plus),
            b_minus: apply_c(&r, &corner.b_minus),
        }
    }
}

/// Coupling of the reversed datum x -> chi0(-x). With N~*(x) = c conj(N~(-x))
/// the frame stays parallel along T*(x) = -T(-x) and starts from rho B+-,
/// which forces g*(x) = conj(c) conj(g(-x)).
pub fn reflect_coupling(coupling: &CouplingData, frame: &ContinuationFrame) -> Result<CouplingData> {
    let grid = coupling.grid;
    let mirrored = grid.first() + grid.last();
    if mirrored.abs() > 1e-9 * grid.h() {
        return invalid("the coupling grid must be symmetric about 0");
    }
    let n = grid.len();
    let cb = frame.phase.conj();
    let g: Vec<C> = (0..n).map(|i| cb * coupling.g[n - 1 - i].conj()).collect();
    let f_plus = fplus_from_g(&grid, &g, coupling.corner.a, &coupling.f_plus.grid)?;
    Ok(CouplingData { grid, g, f_plus, corner: frame.reflected_corner(&coupling.corner) })
}

/// Reflected coupling read through the literal rule N*(x) = R-+ conj(N~(-x)),
/// rotating the whole normal by the 3D rotation of its branch. Returns the
/// largest |T*(x) . N*(x)| over the grid, which vanishes only if the rule
/// preserves the frame.
pub fn literal_rule_defect(datum: &FrameField, frame: &ContinuationFrame) -> f64 {
    let g = datum.grid;
    let n = g.len();
    (0..n)
        .map(|i| {
            let j = n - 1 - i;
            let t_star = -datum.t[j];
            let r = if g.x(i) > 0.0 { &frame.r_minus } else { &frame.r_plus };
            let nstar = apply_c(r, &datum.n(j).conjugate());
            let d = nstar.map(|z| z.re).dot(&t_star).abs().max(nstar.map(|z| z.im).dot(&t_star).abs());
            d
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NegativeExtension {
    /// Slices at t < 0, ordered by decreasing |t|.
    pub trajectory: FlowTrajectory,
    pub far: Option<FlowTrajectory>,
    /// chi(-s, x) = motion(chi*(s, -x)).
    pub motion: RigidMotion,
    /// sup |chi(0-, x) - chi(0+, x)|.
    pub mismatch: f64,
    /// Trace seen from t < 0 on the near grid.
    pub trace: TraceAtZero,
}

fn reverse_slice(s: &Slice, m: &RigidMotion) -> Slice {
    let n = s.curve.points.len();
    let r = &m.rotation;
    let rev = |v: &[Vec3], f: &dyn Fn(&Vec3) -> Vec3| -> Vec<Vec3> { (0..n).map(|i| f(&v[n - 1 - i])).collect() };
    Slice {
        t: -s.t,
        curve: SampledCurve { grid: s.curve.grid, points: rev(&s.curve.points, &|p| m.apply(p)) },
        frame: FrameField {
            grid: s.frame.grid,
            t: rev(&s.frame.t, &|v| -(r * v)),
            n_re: rev(&s.frame.n_re, &|v| r * v),
            n_im: rev(&s.frame.n_im, &|v| -(r * v)),
        },
        kb: rev(&s.kb, &|v| -(r * v)),
        kb_cum: rev(&s.kb_cum, &|v| r * v),
    }
}

fn symmetric(g: &Grid1D) -> bool {
    (g.first() + g.last()).abs() <= 1e-9 * g.h()
}

/// Glue the run chi* of the reversed datum onto negative times:
/// chi(-s, x) = M chi*(s, -x), with M the rigid motion matching the two
/// traces at t = 0.
pub fn extend_negative(
    star: &FlowTrajectory,
    star_far: Option<&FlowTrajectory>,
    star_trace: &TraceAtZero,
    trace: &TraceAtZero,
) -> Result<NegativeExtension> {
    let grid = trace.curve.grid;
    if !star_trace.curve.grid.same_as(&grid) || !symmetric(&grid) {
        return invalid("the traces must share one grid symmetric about 0");
    }
    let n = grid.len();
    let reversed: Vec<Vec3> = (0..n).map(|i| star_trace.curve.points[n - 1 - i]).collect();
    let al = align_points(&reversed, &trace.curve.points)?;
    let m = al.motion;
    if al.max > 1e-2 {
        return numerical(format!("traces from the two sides of t = 0 differ by {:.3e} after alignment", al.max));
    }
    let rev_trace = reverse_slice(
        &Slice {
            t: 0.0,
            curve: star_trace.curve.clone(),
            frame: star_trace.frame.clone(),
            kb: vec![Vec3::zeros(); n],
            kb_cum: vec![Vec3::zeros(); n],
        },
        &m,
    );
    let rev = |s: &[f64]| -> Vec<f64> { (0..n).map(|i| s[n - 1 - i]).collect() };
    let neg_trace = TraceAtZero {
        curve: rev_trace.curve,
        frame: rev_trace.frame,
        exponent: rev(&star_trace.exponent),
        spread: rev(&star_trace.spread),
        x_valid: star_trace.x_valid,
        t_last: -star_trace.t_last,
    };
    let glue = |tr: &FlowTrajectory| -> Result<FlowTrajectory> {
        if tr.slices.iter().any(|s| !symmetric(s.grid()) || !(s.t > 0.0)) {
            return invalid("the reflected run must hold positive times on symmetric grids");
        }
        Ok(FlowTrajectory { route: tr.route, a: tr.a, slices: tr.slices.iter().map(|s| reverse_slice(s, &m)).collect() })
    };
    Ok(NegativeExtension {
        trajectory: glue(star)?,
        far: star_far.map(glue).transpose()?,
        motion: m,
        mismatch: al.max,
        trace: neg_trace,
    })
}
