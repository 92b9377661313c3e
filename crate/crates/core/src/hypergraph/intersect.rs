//! Pairwise curve intersection.
//!
//! Line and arc pairs use closed forms; any pair involving a quadratic
//! Bézier goes through recursive bounding-box subdivision followed by a
//! short Gauss-Newton polish.

use crate::scalar::{Point, Scalar, Vec3};
use crate::vgdoc::geom::curve_bbox;
use crate::vgdoc::{ArcCurve, BoundingBox, Curve};

/// Maximum subdivision depth for the Bézier route.
pub const MAX_SUBDIVISION_DEPTH: u32 = 40;

/// Box pairs visited before a Bézier pair is declared coincident.
const VISIT_BUDGET: usize = 1_000_000;

/// Intersection parameters of a curve pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Intersections<S> {
    /// `(ta, tb)` pairs sorted by `ta`.
    pub params: Vec<(S, S)>,
    /// The curves share a support over a positive length; only endpoints
    /// that lie on the other curve are reported.
    pub coincident: bool,
}

fn second_derivative<S: Scalar>(c: &Curve<S>, t: S) -> Vec3<S> {
    match c {
        Curve::Line { .. } => Vec3::zero(),
        Curve::Arc(a) => (c.point(t) - a.center) * (-a.sweep * a.sweep),
        Curve::QuadBezier { p0, p1, p2 } => (*p0 - *p1 * S::lit(2.0) + *p2) * S::lit(2.0),
    }
}

/// Newton iterations on `|c(t) − p|²` starting at `t`, clamped to `[0, 1]`.
pub(crate) fn refine_param<S: Scalar>(c: &Curve<S>, mut t: S, p: Point<S>) -> S {
    for _ in 0..12 {
        let r = c.point(t) - p;
        let d1 = c.derivative(t);
        let g = d1.dot(r);
        let h = d1.norm_sq() + second_derivative(c, t).dot(r);
        if !(h > S::zero()) {
            break;
        }
        let next = (t - g / h).max(S::zero()).min(S::one());
        if next == t {
            break;
        }
        t = next;
    }
    t
}

/// Parameter of the point of `c` closest to `p`.
pub fn project_param<S: Scalar>(c: &Curve<S>, p: Point<S>) -> S {
    match c {
        Curve::Line { p0, p1 } => {
            let d = *p1 - *p0;
            ((p - *p0).dot(d) / d.norm_sq())
                .max(S::zero())
                .min(S::one())
        }
        Curve::Arc(a) => {
            let t = arc_param_unclamped(a, p);
            t.max(S::zero()).min(S::one())
        }
        Curve::QuadBezier { .. } => {
            let n = 32;
            let mut best = (S::zero(), S::infinity());
            for i in 0..=n {
                let t = S::from_usize_lossy(i) / S::from_usize_lossy(n);
                let d = c.point(t).dist(p);
                if d < best.1 {
                    best = (t, d);
                }
            }
            refine_param(c, best.0, p)
        }
    }
}

/// Arc parameter of the angular position of `p`; angles outside the sweep
/// map to the nearer side (below 0 or above 1).
fn arc_param_unclamped<S: Scalar>(a: &ArcCurve<S>, p: Point<S>) -> S {
    let tau = S::TAU();
    let d = p - a.center;
    let theta = d.dot(a.ay).atan2(d.dot(a.ax));
    let sweep = a.sweep.abs();
    let rel = if a.sweep >= S::zero() {
        theta - a.start
    } else {
        a.start - theta
    };
    let w = rel - (rel / tau).floor() * tau;
    if w <= sweep {
        w / sweep
    } else if tau - w < w - sweep {
        -(tau - w) / sweep
    } else {
        w / sweep
    }
}

/// Accepts `t` if it lies within `tol` arc length of `[0, 1]`.
fn accept_param<S: Scalar>(t: S, len: S, tol: S) -> Option<S> {
    let slack = tol / len;
    if t >= -slack && t <= S::one() + slack {
        Some(t.max(S::zero()).min(S::one()))
    } else {
        None
    }
}

fn param_of<S: Scalar>(c: &Curve<S>, p: Point<S>, tol: S) -> Option<S> {
    let len = c.length();
    match c {
        Curve::Line { p0, p1 } => {
            let d = *p1 - *p0;
            accept_param((p - *p0).dot(d) / d.norm_sq(), len, tol)
        }
        Curve::Arc(a) => accept_param(arc_param_unclamped(a, p), len, tol),
        Curve::QuadBezier { .. } => Some(project_param(c, p)),
    }
}

fn plane_normal<S: Scalar>(a: &ArcCurve<S>) -> Vec3<S> {
    a.ax.cross(a.ay)
}

/// Closest points of two segments as parameters `(s, t)`.
fn segment_closest<S: Scalar>(p1: Point<S>, q1: Point<S>, p2: Point<S>, q2: Point<S>) -> (S, S) {
    let (d1, d2, r) = (q1 - p1, q2 - p2, p1 - p2);
    let (a, e) = (d1.norm_sq(), d2.norm_sq());
    let clamp = |x: S| x.max(S::zero()).min(S::one());
    if a <= S::zero() && e <= S::zero() {
        return (S::zero(), S::zero());
    }
    if a <= S::zero() {
        return (S::zero(), clamp(d2.dot(r) / e));
    }
    if e <= S::zero() {
        return (clamp(-d1.dot(r) / a), S::zero());
    }
    let (b, c, f) = (d1.dot(d2), d1.dot(r), d2.dot(r));
    let denom = a * e - b * b;
    let mut s = if denom > S::zero() {
        clamp((b * f - c * e) / denom)
    } else {
        S::zero()
    };
    let mut t = (b * s + f) / e;
    if t < S::zero() {
        t = S::zero();
        s = clamp(-c / a);
    } else if t > S::one() {
        t = S::one();
        s = clamp((b - c) / a);
    }
    (s, t)
}

fn line_line<S: Scalar>(
    p1: Point<S>,
    q1: Point<S>,
    p2: Point<S>,
    q2: Point<S>,
    tol: S,
    out: &mut Vec<(S, S)>,
) -> bool {
    let (d1, d2) = (q1 - p1, q2 - p2);
    if d1.cross(d2).norm() <= S::lit(1e-12) * (d1.norm_sq() * d2.norm_sq()).sqrt() {
        // Parallel: coincident when the supports are within tol.
        return (p1 - p2).cross(d2).norm() / d2.norm() <= tol;
    }
    let (s, t) = segment_closest(p1, q1, p2, q2);
    if (p1 + d1 * s).dist(p2 + d2 * t) <= tol {
        out.push((s, t));
    }
    false
}

/// Candidate points where a line meets the circle supporting `arc`.
fn line_circle_points<S: Scalar>(
    p0: Point<S>,
    p1: Point<S>,
    arc: &ArcCurve<S>,
    tol: S,
) -> Vec<Point<S>> {
    let n = plane_normal(arc);
    let d = p1 - p0;
    let dn = d.dot(n);
    let on = (p0 - arc.center).dot(n);
    let mut pts = Vec::new();
    if dn.abs() > S::lit(1e-9) * d.norm() {
        let s = -on / dn;
        pts.push(p0 + d * s);
        return pts;
    }
    if on.abs() > tol {
        return pts;
    }
    // In-plane: solve in the arc frame.
    let c2 = |p: Point<S>| {
        let q = p - arc.center;
        (q.dot(arc.ax), q.dot(arc.ay))
    };
    let (ox, oy) = c2(p0);
    let (dx, dy) = (d.dot(arc.ax), d.dot(arc.ay));
    let dd = dx * dx + dy * dy;
    let s0 = -(ox * dx + oy * dy) / dd;
    let (hx, hy) = (ox + dx * s0, oy + dy * s0);
    let h = (hx * hx + hy * hy).sqrt();
    let r = arc.radius;
    if h > r + tol {
        return pts;
    }
    if h >= r - tol {
        pts.push(p0 + d * s0);
    } else {
        let w = ((r * r - h * h) / dd).sqrt();
        pts.push(p0 + d * (s0 - w));
        pts.push(p0 + d * (s0 + w));
    }
    pts
}

fn arc_arc_points<S: Scalar>(a: &ArcCurve<S>, b: &ArcCurve<S>, tol: S) -> (Vec<Point<S>>, bool) {
    let (na, nb) = (plane_normal(a), plane_normal(b));
    let mut pts = Vec::new();
    if na.cross(nb).norm() <= S::lit(1e-9) {
        if (b.center - a.center).dot(na).abs() > tol {
            return (pts, false);
        }
        let q = b.center - a.center;
        let (bx, by) = (q.dot(a.ax), q.dot(a.ay));
        let dist = (bx * bx + by * by).sqrt();
        let (r1, r2) = (a.radius, b.radius);
        if dist <= tol && (r1 - r2).abs() <= tol {
            return (pts, true);
        }
        if dist <= tol || dist > r1 + r2 + tol || dist < (r1 - r2).abs() - tol {
            return (pts, false);
        }
        let along = (dist * dist + r1 * r1 - r2 * r2) / (S::lit(2.0) * dist);
        let h2 = r1 * r1 - along * along;
        let (ux, uy) = (bx / dist, by / dist);
        let at = |lx: S, ly: S| a.center + a.ax * lx + a.ay * ly;
        let h = h2.max(S::zero()).sqrt();
        if h <= tol {
            pts.push(at(ux * along, uy * along));
        } else {
            pts.push(at(ux * along - uy * h, uy * along + ux * h));
            pts.push(at(ux * along + uy * h, uy * along - ux * h));
        }
        return (pts, false);
    }
    // Circle of `a` against the plane of `b`.
    let ca = (a.center - b.center).dot(nb);
    let (ka, kb) = (a.radius * a.ax.dot(nb), a.radius * a.ay.dot(nb));
    let rr = (ka * ka + kb * kb).sqrt();
    if rr <= S::zero() || ca.abs() > rr + tol {
        return (pts, false);
    }
    let base = kb.atan2(ka);
    let spread = (-ca / rr).max(-S::one()).min(S::one()).acos();
    for th in [base - spread, base + spread] {
        let p = a.center + (a.ax * th.cos() + a.ay * th.sin()) * a.radius;
        if ((p - b.center).norm() - b.radius).abs() <= tol {
            pts.push(p);
        }
        if spread == S::zero() {
            break;
        }
    }
    (pts, false)
}

/// Restriction of `c` to `[t0, t1]`, reparametrized over `[0, 1]`.
pub(crate) fn sub_curve<S: Scalar>(c: &Curve<S>, t0: S, t1: S) -> Curve<S> {
    match c {
        Curve::Line { .. } => Curve::Line {
            p0: c.point(t0),
            p1: c.point(t1),
        },
        Curve::Arc(a) => Curve::Arc(ArcCurve {
            start: a.angle_at(t0),
            sweep: a.sweep * (t1 - t0),
            ..*a
        }),
        Curve::QuadBezier { p0, p1, p2 } => {
            let one = S::one();
            let blossom = (*p0 * ((one - t0) * (one - t1)))
                + (*p1 * ((one - t0) * t1 + t0 * (one - t1)))
                + (*p2 * (t0 * t1));
            Curve::QuadBezier {
                p0: c.point(t0),
                p1: blossom,
                p2: c.point(t1),
            }
        }
    }
}

fn boxes_meet<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>, tol: S) -> bool {
    (0..3).all(|k| a.min.get(k) - tol <= b.max.get(k) && b.min.get(k) - tol <= a.max.get(k))
}

/// Upper bound on the distance between a curve and its chord.
fn flatness<S: Scalar>(c: &Curve<S>) -> S {
    match c {
        Curve::Line { .. } => S::zero(),
        Curve::Arc(a) => {
            let half = a.sweep.abs() * S::lit(0.5);
            if half >= S::FRAC_PI_2() {
                a.radius
            } else {
                a.radius * (S::one() - half.cos())
            }
        }
        Curve::QuadBezier { p0, p1, p2 } => (*p1 - (*p0 + *p2) * S::lit(0.5)).norm() * S::lit(0.5),
    }
}

/// Parameter intervals of a candidate contact plus a parameter guess.
type Leaf<S> = ((S, S), (S, S), (S, S));

struct Subdivider<'a, S> {
    a: &'a Curve<S>,
    b: &'a Curve<S>,
    tol: S,
    visits: usize,
    leaves: Vec<Leaf<S>>,
}

impl<S: Scalar> Subdivider<'_, S> {
    fn run(&mut self, ia: (S, S), ib: (S, S), depth: u32) -> bool {
        self.visits += 1;
        if self.visits > VISIT_BUDGET {
            return false;
        }
        let (ca, cb) = (sub_curve(self.a, ia.0, ia.1), sub_curve(self.b, ib.0, ib.1));
        let (ba, bb) = (curve_bbox(&ca), curve_bbox(&cb));
        if !boxes_meet(&ba, &bb, self.tol) {
            return true;
        }
        let (fa, fb) = (flatness(&ca), flatness(&cb));
        let flat = S::lit(0.25) * self.tol;
        if (fa <= flat && fb <= flat) || depth >= MAX_SUBDIVISION_DEPTH {
            // Both pieces are chords to within tol/4: decide on the chords.
            let (s, t) = segment_closest(
                ca.start_point(),
                ca.end_point(),
                cb.start_point(),
                cb.end_point(),
            );
            let gap = ca.point(s).dist(cb.point(t));
            if gap <= self.tol + fa + fb {
                let lerp = |iv: (S, S), u: S| iv.0 + (iv.1 - iv.0) * u;
                self.leaves.push((ia, ib, (lerp(ia, s), lerp(ib, t))));
            }
            return true;
        }
        let half = S::lit(0.5);
        let split = |iv: (S, S)| {
            let m = (iv.0 + iv.1) * half;
            [(iv.0, m), (m, iv.1)]
        };
        let parts_a = if fa > flat {
            split(ia).to_vec()
        } else {
            vec![ia]
        };
        let parts_b = if fb > flat {
            split(ib).to_vec()
        } else {
            vec![ib]
        };
        for pa in &parts_a {
            for pb in &parts_b {
                if !self.run(*pa, *pb, depth + 1) {
                    return false;
                }
            }
        }
        true
    }
}

/// Gauss-Newton on `|a(s) − b(t)|²` with clamping to the unit square.
fn polish<S: Scalar>(a: &Curve<S>, b: &Curve<S>, mut s: S, mut t: S) -> (S, S) {
    let clamp = |x: S| x.max(S::zero()).min(S::one());
    for _ in 0..16 {
        let r = a.point(s) - b.point(t);
        let (ja, jb) = (a.derivative(s), -b.derivative(t));
        let (m11, m12, m22) = (ja.norm_sq(), ja.dot(jb), jb.norm_sq());
        let (g1, g2) = (ja.dot(r), jb.dot(r));
        let det = m11 * m22 - m12 * m12;
        if !(det > S::lit(1e-14) * m11 * m22) {
            break;
        }
        let ns = clamp(s - (m22 * g1 - m12 * g2) / det);
        let nt = clamp(t - (m11 * g2 - m12 * g1) / det);
        if a.point(ns).dist(b.point(nt)) > r.norm() {
            break;
        }
        if ns == s && nt == t {
            break;
        }
        s = ns;
        t = nt;
    }
    (s, t)
}

/// Intersections by recursive bounding-box subdivision; valid for any pair.
///
/// Returns `None` when the visit budget runs out, which happens when the
/// curves coincide over a positive length.
pub fn intersect_by_subdivision<S: Scalar>(
    a: &Curve<S>,
    b: &Curve<S>,
    tol: S,
) -> Option<Vec<(S, S)>> {
    let unit = (S::zero(), S::one());
    let mut sub = Subdivider {
        a,
        b,
        tol,
        visits: 0,
        leaves: Vec::new(),
    };
    if !sub.run(unit, unit, 0) {
        return None;
    }
    let mut leaves = sub.leaves;
    leaves.sort_by(|x, y| {
        x.0 .0
            .partial_cmp(&y.0 .0)
            .unwrap()
            .then(x.1 .0.partial_cmp(&y.1 .0).unwrap())
    });

    // Connected components of touching leaf boxes in parameter space.
    let n = leaves.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        let (ia, ib, _) = leaves[i];
        for j in (i + 1)..n {
            let (ja, jb, _) = leaves[j];
            if ja.0 > ia.1 {
                break;
            }
            if jb.0 <= ib.1 && ib.0 <= jb.1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[rj.max(ri)] = ri.min(rj);
            }
        }
    }
    let mut best: Vec<Option<(S, S, S)>> = vec![None; n];
    for (i, &(_, _, (s, t))) in leaves.iter().enumerate() {
        let root = find(&mut parent, i);
        let d = a.point(s).dist(b.point(t));
        if best[root].map_or(true, |(_, _, bd)| d < bd) {
            best[root] = Some((s, t, d));
        }
    }
    let mut out = Vec::new();
    for (s, t, d) in best.into_iter().flatten() {
        let (ps, pt) = polish(a, b, s, t);
        let pd = a.point(ps).dist(b.point(pt));
        let (s, t, d) = if pd <= d { (ps, pt, pd) } else { (s, t, d) };
        if d <= tol {
            out.push((s, t));
        }
    }
    out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Some(out)
}

/// Two consecutive samples of `a` and their midpoint all lying on `b`.
fn shares_support<S: Scalar>(a: &Curve<S>, b: &Curve<S>, tol: S) -> bool {
    let n = 16;
    let on_b = |t: S| {
        let p = a.point(t);
        b.point(project_param(b, p)).dist(p) <= tol
    };
    let at = |i: usize| S::from_usize_lossy(i) / S::from_usize_lossy(n);
    let mut prev = on_b(S::zero());
    for i in 1..=n {
        let cur = on_b(at(i));
        if prev && cur && on_b((at(i - 1) + at(i)) * S::lit(0.5)) {
            return true;
        }
        prev = cur;
    }
    false
}

fn snap_ends<S: Scalar>(t: S, len: S, tol: S) -> S {
    if t * len <= tol {
        S::zero()
    } else if (S::one() - t) * len <= tol {
        S::one()
    } else {
        t
    }
}

fn endpoint_contacts<S: Scalar>(a: &Curve<S>, b: &Curve<S>, tol: S, out: &mut Vec<(S, S)>) {
    for ta in [S::zero(), S::one()] {
        let p = a.point(ta);
        let tb = project_param(b, p);
        if b.point(tb).dist(p) <= tol {
            out.push((ta, tb));
        }
    }
    for tb in [S::zero(), S::one()] {
        let p = b.point(tb);
        let ta = project_param(a, p);
        if a.point(ta).dist(p) <= tol {
            out.push((ta, tb));
        }
    }
}

/// All parameter pairs where the two curves come within `tol` of each other.
pub fn intersect_curves<S: Scalar>(a: &Curve<S>, b: &Curve<S>, tol: S) -> Intersections<S> {
    let mut params = Vec::new();
    let mut coincident = false;
    if !boxes_meet(&curve_bbox(a), &curve_bbox(b), tol) {
        return Intersections { params, coincident };
    }
    let mut candidates = Vec::new();
    match (a, b) {
        (Curve::Line { p0, p1 }, Curve::Line { p0: q0, p1: q1 }) => {
            coincident = line_line(*p0, *p1, *q0, *q1, tol, &mut params);
        }
        (Curve::Line { p0, p1 }, Curve::Arc(arc)) | (Curve::Arc(arc), Curve::Line { p0, p1 }) => {
            candidates = line_circle_points(*p0, *p1, arc, tol);
        }
        (Curve::Arc(x), Curve::Arc(y)) => {
            let (pts, same) = arc_arc_points(x, y, tol);
            candidates = pts;
            coincident = same;
        }
        _ if shares_support(a, b, tol) || shares_support(b, a, tol) => coincident = true,
        _ => match intersect_by_subdivision(a, b, tol) {
            Some(found) => params = found,
            None => coincident = true,
        },
    }
    for p in candidates {
        if let (Some(ta), Some(tb)) = (param_of(a, p, tol), param_of(b, p, tol)) {
            if a.point(ta).dist(b.point(tb)) <= tol {
                params.push((ta, tb));
            }
        }
    }
    if coincident {
        params.clear();
        endpoint_contacts(a, b, tol, &mut params);
    }
    let (la, lb) = (a.length(), b.length());
    for p in params.iter_mut() {
        *p = (snap_ends(p.0, la, tol), snap_ends(p.1, lb, tol));
    }
    params.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap()
            .then(x.1.partial_cmp(&y.1).unwrap())
    });
    let mut merged: Vec<(S, S)> = Vec::with_capacity(params.len());
    for p in params {
        if !merged
            .iter()
            .any(|q| (q.0 - p.0).abs() <= tol && (q.1 - p.1).abs() <= tol)
        {
            merged.push(p);
        }
    }
    Intersections {
        params: merged,
        coincident,
    }
}
