//! Curve evaluation, tangents, arc length, and planar helpers.

use super::{ArcCurve, BoundingBox, Curve, Surface, VgError};
use crate::scalar::{Point, Scalar, Vec3};

/// 16-point Gauss–Legendre abscissae and weights on [-1, 1].
const GL16: [(f64, f64); 16] = [
    (-0.989_400_934_991_649_9, 0.027_152_459_411_754_037),
    (-0.944_575_023_073_232_6, 0.062_253_523_938_647_706),
    (-0.865_631_202_387_831_8, 0.095_158_511_682_492_59),
    (-0.755_404_408_355_003, 0.124_628_971_255_534_03),
    (-0.617_876_244_402_643_8, 0.149_595_988_816_576_76),
    (-0.458_016_777_657_227_37, 0.169_156_519_395_002_62),
    (-0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (-0.095_012_509_837_637_45, 0.189_450_610_455_068_59),
    (0.095_012_509_837_637_45, 0.189_450_610_455_068_59),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_37, 0.169_156_519_395_002_62),
    (0.617_876_244_402_643_8, 0.149_595_988_816_576_76),
    (0.755_404_408_355_003, 0.124_628_971_255_534_03),
    (0.865_631_202_387_831_8, 0.095_158_511_682_492_59),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_706),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_037),
];

const QUAD_PANEL_TOL: f64 = 1e-8;
const QUAD_MAX_DEPTH: u32 = 24;

fn gl16_panel<S: Scalar>(f: &impl Fn(S) -> S, a: S, b: S) -> S {
    let half = (b - a) * S::lit(0.5);
    let mid = (a + b) * S::lit(0.5);
    let mut acc = S::zero();
    for &(x, w) in GL16.iter() {
        acc += S::lit(w) * f(mid + half * S::lit(x));
    }
    acc * half
}

fn adaptive<S: Scalar>(f: &impl Fn(S) -> S, a: S, b: S, whole: S, depth: u32) -> S {
    let mid = (a + b) * S::lit(0.5);
    let left = gl16_panel(f, a, mid);
    let right = gl16_panel(f, mid, b);
    let refined = left + right;
    let tol = S::lit(QUAD_PANEL_TOL).max(S::epsilon() * S::lit(64.0));
    if depth >= QUAD_MAX_DEPTH
        || (refined - whole).abs() <= tol * refined.abs() + S::min_positive_value()
    {
        refined
    } else {
        adaptive(f, a, mid, left, depth + 1) + adaptive(f, mid, b, right, depth + 1)
    }
}

/// Adaptive Gauss–Legendre quadrature of `f` over `[a, b]`.
pub fn integrate<S: Scalar>(f: impl Fn(S) -> S, a: S, b: S) -> S {
    if b <= a {
        return S::zero();
    }
    let whole = gl16_panel(&f, a, b);
    adaptive(&f, a, b, whole, 0)
}

impl<S: Scalar> ArcCurve<S> {
    #[inline]
    pub fn angle_at(&self, t: S) -> S {
        self.start + t * self.sweep
    }

    #[inline]
    pub fn point_at_angle(&self, theta: S) -> Point<S> {
        self.center + (self.ax * theta.cos() + self.ay * theta.sin()) * self.radius
    }
}

impl<S: Scalar> Curve<S> {
    pub fn start_point(&self) -> Point<S> {
        self.point(S::zero())
    }

    pub fn end_point(&self) -> Point<S> {
        self.point(S::one())
    }

    /// Point at parameter `t` without domain checking.
    pub fn point(&self, t: S) -> Point<S> {
        let one = S::one();
        match self {
            Curve::Line { p0, p1 } => *p0 * (one - t) + *p1 * t,
            Curve::Arc(a) => a.point_at_angle(a.angle_at(t)),
            Curve::QuadBezier { p0, p1, p2 } => {
                let s = one - t;
                *p0 * (s * s) + *p1 * (S::lit(2.0) * s * t) + *p2 * (t * t)
            }
        }
    }

    pub fn derivative(&self, t: S) -> Vec3<S> {
        let two = S::lit(2.0);
        match self {
            Curve::Line { p0, p1 } => *p1 - *p0,
            Curve::Arc(a) => {
                let th = a.angle_at(t);
                (a.ay * th.cos() - a.ax * th.sin()) * (a.radius * a.sweep)
            }
            Curve::QuadBezier { p0, p1, p2 } => {
                (*p1 - *p0) * (two * (S::one() - t)) + (*p2 - *p1) * (two * t)
            }
        }
    }

    /// Unit tangent in traversal direction; degenerate Bézier endpoints fall
    /// back to the chord direction.
    pub fn tangent(&self, t: S) -> Vec3<S> {
        let d = self.derivative(t);
        let scale = match self {
            Curve::QuadBezier { p0, p1, p2 } => (*p1 - *p0).norm() + (*p2 - *p1).norm(),
            _ => S::one(),
        };
        if d.norm() > S::lit(1e-12) * scale {
            if let Some(u) = d.normalized() {
                return u;
            }
        }
        match self {
            Curve::QuadBezier { p0, p1, p2 } => (*p2 - *p0)
                .normalized()
                .or_else(|| (*p1 - *p0).normalized())
                .unwrap_or(Vec3::new(S::one(), S::zero(), S::zero())),
            _ => Vec3::new(S::one(), S::zero(), S::zero()),
        }
    }

    pub fn length(&self) -> S {
        self.length_between(S::zero(), S::one())
    }

    /// Arc length over `[t0, t1]` (no domain checking).
    pub fn length_between(&self, t0: S, t1: S) -> S {
        match self {
            Curve::Line { p0, p1 } => (*p1 - *p0).norm() * (t1 - t0),
            Curve::Arc(a) => a.radius * a.sweep.abs() * (t1 - t0),
            Curve::QuadBezier { .. } => integrate(|t| self.derivative(t).norm(), t0, t1),
        }
    }

    /// Parameter at which the arc length from 0 equals `s` (no domain checking).
    pub fn param_at_length(&self, s: S) -> S {
        let total = self.length();
        if s <= S::zero() {
            return S::zero();
        }
        if s >= total {
            return S::one();
        }
        match self {
            Curve::Line { .. } | Curve::Arc(_) => s / total,
            Curve::QuadBezier { .. } => {
                let tol = S::lit(0.25e-9) * total;
                let (mut lo, mut hi) = (S::zero(), S::one());
                let mut mid = s / total;
                for _ in 0..80 {
                    mid = (lo + hi) * S::lit(0.5);
                    let f = self.length_between(S::zero(), mid) - s;
                    if f.abs() <= tol {
                        break;
                    }
                    if f < S::zero() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                mid
            }
        }
    }
}

fn check_unit<S: Scalar>(t: S) -> Result<(), VgError> {
    if t >= S::zero() && t <= S::one() {
        Ok(())
    } else {
        Err(VgError::Domain {
            value: t.to_f64().unwrap_or(f64::NAN),
            lo: 0.0,
            hi: 1.0,
        })
    }
}

pub fn eval_curve<S: Scalar>(curve: &Curve<S>, t: S) -> Result<Point<S>, VgError> {
    check_unit(t)?;
    Ok(curve.point(t))
}

pub fn curve_tangent<S: Scalar>(curve: &Curve<S>, t: S) -> Result<Vec3<S>, VgError> {
    check_unit(t)?;
    Ok(curve.tangent(t))
}

pub fn arc_length<S: Scalar>(curve: &Curve<S>, t0: S, t1: S) -> Result<S, VgError> {
    check_unit(t0)?;
    check_unit(t1)?;
    if t1 < t0 {
        return Err(VgError::Domain {
            value: t1.as_f64(),
            lo: t0.as_f64(),
            hi: 1.0,
        });
    }
    Ok(curve.length_between(t0, t1))
}

pub fn arc_length_inverse<S: Scalar>(curve: &Curve<S>, s: S) -> Result<S, VgError> {
    let total = curve.length();
    if !(s >= S::zero() && s <= total) {
        return Err(VgError::Domain {
            value: s.as_f64(),
            lo: 0.0,
            hi: total.as_f64(),
        });
    }
    Ok(curve.param_at_length(s))
}

/// Whether angle `theta` lies within the swept range of the arc.
fn arc_covers<S: Scalar>(a: &ArcCurve<S>, theta: S) -> bool {
    let tau = S::TAU();
    let rel = if a.sweep >= S::zero() {
        theta - a.start
    } else {
        a.start - theta
    };
    let rel = rel - (rel / tau).floor() * tau;
    rel <= a.sweep.abs()
}

/// Exact axis-aligned bounds of a curve.
pub fn curve_bbox<S: Scalar>(c: &Curve<S>) -> BoundingBox<S> {
    let mut bb = BoundingBox::of_point(c.start_point());
    bb.include(c.end_point());
    match c {
        Curve::Line { .. } => {}
        Curve::Arc(a) => {
            for axis in 0..3 {
                let (u, v) = (a.ax.get(axis), a.ay.get(axis));
                if u == S::zero() && v == S::zero() {
                    continue;
                }
                let base = v.atan2(u);
                for th in [base, base + S::PI()] {
                    if arc_covers(a, th) {
                        bb.include(a.point_at_angle(th));
                    }
                }
            }
        }
        Curve::QuadBezier { p0, p1, p2 } => {
            for axis in 0..3 {
                let den = p0.get(axis) - S::lit(2.0) * p1.get(axis) + p2.get(axis);
                if den != S::zero() {
                    let t = (p0.get(axis) - p1.get(axis)) / den;
                    if t > S::zero() && t < S::one() {
                        bb.include(c.point(t));
                    }
                }
            }
        }
    }
    bb
}

pub fn surface_bbox<S: Scalar>(s: &Surface<S>) -> BoundingBox<S> {
    match s {
        Surface::Polygon { ring } => {
            let mut bb = BoundingBox::of_point(ring[0]);
            for p in ring {
                bb.include(*p);
            }
            bb
        }
        Surface::Disk(d) => {
            let ext = Vec3::new(
                (d.ax.x * d.ax.x + d.ay.x * d.ay.x).sqrt(),
                (d.ax.y * d.ax.y + d.ay.y * d.ay.y).sqrt(),
                (d.ax.z * d.ax.z + d.ay.z * d.ay.z).sqrt(),
            ) * d.radius;
            BoundingBox {
                min: d.center - ext,
                max: d.center + ext,
            }
        }
        Surface::Rect { origin, u, v } => {
            let mut bb = BoundingBox::of_point(*origin);
            bb.include(*origin + *u);
            bb.include(*origin + *v);
            bb.include(*origin + *u + *v);
            bb
        }
    }
}

/// Orthonormal frame of a plane embedded in 3-space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFrame<S> {
    pub origin: Point<S>,
    pub e1: Vec3<S>,
    pub e2: Vec3<S>,
    pub normal: Vec3<S>,
}

impl<S: Scalar> PlaneFrame<S> {
    pub fn local(&self, p: Point<S>) -> (S, S) {
        let d = p - self.origin;
        (d.dot(self.e1), d.dot(self.e2))
    }

    pub fn offset(&self, p: Point<S>) -> S {
        (p - self.origin).dot(self.normal)
    }

    pub fn world(&self, u: S, v: S) -> Point<S> {
        self.origin + self.e1 * u + self.e2 * v
    }
}

/// Frame anchored at the first vertex with `e1` along the first edge and
/// the normal from the ring's vector area. `None` for zero-area rings.
pub fn polygon_frame<S: Scalar>(ring: &[Point<S>]) -> Option<PlaneFrame<S>> {
    let o = ring[0];
    let mut area = Vec3::zero();
    for i in 0..ring.len() {
        let a = ring[i] - o;
        let b = ring[(i + 1) % ring.len()] - o;
        area += a.cross(b);
    }
    let scale = ring
        .iter()
        .map(|p| (*p - o).norm_sq())
        .fold(S::zero(), S::max);
    if !(area.norm() > S::lit(1e-12) * scale) {
        return None;
    }
    let normal = area.normalized()?;
    let first = ring[1..]
        .iter()
        .map(|p| *p - o)
        .find(|d| d.norm() > S::zero())?;
    let e1 = (first - normal * first.dot(normal)).normalized()?;
    let e2 = normal.cross(e1);
    Some(PlaneFrame {
        origin: o,
        e1,
        e2,
        normal,
    })
}

#[inline]
pub fn orient2d<S: Scalar>(a: (S, S), b: (S, S), c: (S, S)) -> S {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment<S: Scalar>(a: (S, S), b: (S, S), p: (S, S)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection test.
pub fn segments_touch<S: Scalar>(a: (S, S), b: (S, S), c: (S, S), d: (S, S)) -> bool {
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    let z = S::zero();
    if ((o1 > z && o2 < z) || (o1 < z && o2 > z)) && ((o3 > z && o4 < z) || (o3 < z && o4 > z)) {
        return true;
    }
    (o1 == z && on_segment(a, b, c))
        || (o2 == z && on_segment(a, b, d))
        || (o3 == z && on_segment(c, d, a))
        || (o4 == z && on_segment(c, d, b))
}

/// First pair of ring edges that intersect improperly, if any.
pub fn ring_self_intersection<S: Scalar>(ring: &[(S, S)]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Some((i, i));
        }
    }
    // Consecutive edges folding back onto each other.
    for i in 0..n {
        let (prev, cur, next) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
        let back = (cur.0 - prev.0) * (next.0 - cur.0) + (cur.1 - prev.1) * (next.1 - cur.1);
        if orient2d(prev, cur, next) == S::zero() && back < S::zero() {
            return Some(((i + n - 1) % n, i));
        }
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_touch(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Distance from `p` to segment `[a, b]` in the plane.
pub fn segment_distance2d<S: Scalar>(a: (S, S), b: (S, S), p: (S, S)) -> S {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > S::zero() {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2)
            .max(S::zero())
            .min(S::one())
    } else {
        S::zero()
    };
    let (qx, qy) = (a.0 + dx * t - p.0, a.1 + dy * t - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Closed point-in-polygon test: interior, or within `tol` of the boundary.
pub fn point_in_ring<S: Scalar>(ring: &[(S, S)], p: (S, S), tol: S) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if segment_distance2d(a, b, p) <= tol {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64) -> Point<f64> {
        Vec3::xy(x, y)
    }

    fn quad() -> Curve<f64> {
        Curve::QuadBezier {
            p0: p(0.0, 0.0),
            p1: p(1.0, 2.0),
            p2: p(2.0, 0.0),
        }
    }

    fn polyline_length(c: &Curve<f64>, segments: usize) -> f64 {
        (0..segments)
            .map(|i| {
                let a = c.point(i as f64 / segments as f64);
                let b = c.point((i + 1) as f64 / segments as f64);
                a.dist(b)
            })
            .sum()
    }

    #[test]
    fn eval_examples() {
        let line = Curve::Line {
            p0: p(0.0, 0.0),
            p1: p(2.0, 0.0),
        };
        assert_eq!(eval_curve(&line, 0.5).unwrap(), p(1.0, 0.0));
        assert_eq!(eval_curve(&quad(), 0.5).unwrap(), p(1.0, 1.0));
        let arc = Curve::Arc(ArcCurve::planar(p(0.0, 0.0), 1.0, 0.0, PI));
        let m = eval_curve(&arc, 0.5).unwrap();
        assert!(m.dist(p(0.0, 1.0)) < 1e-15);
        assert!(matches!(
            eval_curve(&line, 1.5),
            Err(VgError::Domain { .. })
        ));
    }

    #[test]
    fn endpoints_are_exact() {
        let line = Curve::Line {
            p0: p(0.1, 0.7),
            p1: p(-3.3, 2.9),
        };
        assert_eq!(line.point(0.0), p(0.1, 0.7));
        assert_eq!(line.point(1.0), p(-3.3, 2.9));
        let q = Curve::QuadBezier {
            p0: p(0.3, 0.1),
            p1: p(1.7, 2.2),
            p2: p(2.9, -0.4),
        };
        assert_eq!(q.point(0.0), p(0.3, 0.1));
        assert_eq!(q.point(1.0), p(2.9, -0.4));
    }

    #[test]
    fn tangent_examples() {
        let line = Curve::Line {
            p0: p(0.0, 0.0),
            p1: p(3.0, 4.0),
        };
        let t = curve_tangent(&line, 0.3).unwrap();
        assert!((t.x - 0.6).abs() < 1e-15 && (t.y - 0.8).abs() < 1e-15);
        let arc = Curve::Arc(ArcCurve::planar(p(0.0, 0.0), 1.0, 0.0, 1.0));
        let t = curve_tangent(&arc, 0.0).unwrap();
        assert!(t.dist(p(0.0, 1.0)) < 1e-15);
        let t = curve_tangent(&quad(), 0.0).unwrap();
        let s5 = 5f64.sqrt();
        assert!(t.dist(p(1.0 / s5, 2.0 / s5)) < 1e-15);
    }

    #[test]
    fn degenerate_bezier_falls_back_to_chord() {
        let q = Curve::QuadBezier {
            p0: p(0.0, 0.0),
            p1: p(0.0, 0.0),
            p2: p(2.0, 2.0),
        };
        let t = q.tangent(0.0);
        let h = 0.5f64.sqrt();
        assert!(t.dist(p(h, h)) < 1e-15);
    }

    #[test]
    fn closed_form_lengths() {
        let line = Curve::Line {
            p0: p(0.0, 0.0),
            p1: p(3.0, 4.0),
        };
        assert_eq!(arc_length(&line, 0.0, 1.0).unwrap(), 5.0);
        let arc = Curve::Arc(ArcCurve::planar(p(0.0, 0.0), 2.0, 0.0, PI / 2.0));
        assert!((arc_length(&arc, 0.0, 1.0).unwrap() - PI).abs() < 1e-15);
    }

    #[test]
    fn bezier_length_matches_dense_polyline() {
        let oracle = polyline_length(&quad(), 4096);
        let got = arc_length(&quad(), 0.0, 1.0).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-4, "{got} vs {oracle}");
        // Richardson-extrapolated polyline is a much sharper reference.
        let fine = polyline_length(&quad(), 1 << 14);
        let extrap = (4.0 * fine - polyline_length(&quad(), 1 << 13)) / 3.0;
        assert!(((got - extrap) / extrap).abs() < 1e-9);
    }

    #[test]
    fn inverse_examples() {
        let line = Curve::Line {
            p0: p(0.0, 0.0),
            p1: p(3.0, 4.0),
        };
        assert_eq!(arc_length_inverse(&line, 2.5).unwrap(), 0.5);
        assert_eq!(arc_length_inverse(&quad(), 0.0).unwrap(), 0.0);
        let q = quad();
        let total = q.length();
        let t = arc_length_inverse(&q, total / 2.0).unwrap();
        assert!((q.length_between(0.0, t) - total / 2.0).abs() <= 1e-9 * total);
        assert!((t - 0.5).abs() < 1e-9, "symmetric curve bisects at t=0.5");
        assert!(arc_length_inverse(&q, total * 1.01).is_err());
    }

    #[test]
    fn arc_bbox_is_exact() {
        let arc = Curve::Arc(ArcCurve::planar(p(1.0, 1.0), 2.0, -PI / 4.0, PI / 2.0));
        let bb = curve_bbox(&arc);
        assert!((bb.max.x - 3.0).abs() < 1e-15);
        assert!((bb.min.x - (1.0 + 2.0 * (PI / 4.0).cos())).abs() < 1e-15);
    }

    #[test]
    fn point_in_ring_closed() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert!(point_in_ring(&sq, (0.5, 0.5), 1e-9));
        assert!(point_in_ring(&sq, (1.0, 0.5), 1e-9));
        assert!(!point_in_ring(&sq, (1.1, 0.5), 1e-9));
    }

    #[test]
    fn works_in_single_precision() {
        let q = Curve::QuadBezier {
            p0: Vec3::<f32>::xy(0.0, 0.0),
            p1: Vec3::xy(1.0, 2.0),
            p2: Vec3::xy(2.0, 0.0),
        };
        let oracle = polyline_length(&quad(), 4096) as f32;
        assert!((q.length() - oracle).abs() / oracle < 1e-4);
    }
}
