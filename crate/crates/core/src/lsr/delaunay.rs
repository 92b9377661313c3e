//! Bowyer-Watson triangulation in the plane.
//!
//! After removing the super-triangle, pockets left along the convex hull
//! are filled with ears and the result is legalized with Lawson flips, so
//! the output always covers the hull and satisfies the empty-circumcircle
//! property. Cocircular ties prefer the diagonal touching the lowest index.

use std::collections::HashMap;

use super::LsrError;
use crate::scalar::Scalar;

/// Relative tolerance of the in-circle and orientation predicates.
const PREDICATE_EPS: f64 = 1e-12;

#[inline]
fn orient<S: Scalar>(a: [S; 2], b: [S; 2], c: [S; 2]) -> S {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` is strictly inside the circumcircle of CCW `(a, b, c)`.
#[inline]
pub fn incircle<S: Scalar>(a: [S; 2], b: [S; 2], c: [S; 2], d: [S; 2]) -> S {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

struct Mesh<'a, S> {
    pts: &'a [[S; 2]],
    tris: Vec<[usize; 3]>,
    eps: S,
}

impl<S: Scalar> Mesh<'_, S> {
    fn p(&self, i: usize) -> [S; 2] {
        self.pts[i]
    }

    fn in_circle(&self, t: &[usize; 3], d: usize) -> S {
        incircle(self.p(t[0]), self.p(t[1]), self.p(t[2]), self.p(d))
    }

    /// Bowyer-Watson insertion. The cavity grows from the triangles holding
    /// the point across edges whose far triangle has it in its circumcircle,
    /// then shrinks until every boundary edge sees the point strictly on its
    /// left, which keeps the re-triangulation valid under round-off.
    fn insert(&mut self, i: usize) {
        let p = self.p(i);
        let owner: HashMap<(usize, usize), usize> = self
            .tris
            .iter()
            .enumerate()
            .flat_map(|(ti, t)| (0..3).map(move |k| ((t[k], t[(k + 1) % 3]), ti)))
            .collect();
        let holds = |t: &[usize; 3]| {
            (0..3).all(|k| orient(self.p(t[k]), self.p(t[(k + 1) % 3]), p) >= S::zero())
        };
        let mut in_cavity = vec![false; self.tris.len()];
        let mut stack: Vec<usize> = (0..self.tris.len())
            .filter(|&ti| holds(&self.tris[ti]))
            .collect();
        let seeds = stack.clone();
        for &s in &seeds {
            in_cavity[s] = true;
        }
        while let Some(ti) = stack.pop() {
            let t = self.tris[ti];
            for k in 0..3 {
                let Some(&nb) = owner.get(&(t[(k + 1) % 3], t[k])) else {
                    continue;
                };
                if !in_cavity[nb] && self.in_circle(&self.tris[nb], i) > S::zero() {
                    in_cavity[nb] = true;
                    stack.push(nb);
                }
            }
        }
        loop {
            let mut shrunk = false;
            for ti in 0..self.tris.len() {
                if !in_cavity[ti] || seeds.contains(&ti) {
                    continue;
                }
                let t = self.tris[ti];
                let bad_edge = (0..3).any(|k| {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    let across = owner.get(&(b, a)).is_some_and(|&nb| in_cavity[nb]);
                    !across && orient(self.p(a), self.p(b), p) <= S::zero()
                });
                if bad_edge {
                    in_cavity[ti] = false;
                    shrunk = true;
                }
            }
            if !shrunk {
                break;
            }
        }
        let mut boundary = Vec::new();
        for (ti, t) in self.tris.iter().enumerate() {
            if !in_cavity[ti] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if !owner.get(&(b, a)).is_some_and(|&nb| in_cavity[nb]) {
                    boundary.push([a, b, i]);
                }
            }
        }
        let mut keep: Vec<[usize; 3]> = self
            .tris
            .iter()
            .enumerate()
            .filter(|(ti, _)| !in_cavity[*ti])
            .map(|(_, t)| *t)
            .collect();
        keep.extend(
            boundary
                .into_iter()
                .filter(|t| orient(self.p(t[0]), self.p(t[1]), p) > S::zero()),
        );
        self.tris = keep;
    }

    fn boundary(&self) -> HashMap<usize, usize> {
        let mut directed = std::collections::HashSet::new();
        for t in &self.tris {
            for k in 0..3 {
                directed.insert((t[k], t[(k + 1) % 3]));
            }
        }
        directed
            .iter()
            .filter(|(a, b)| !directed.contains(&(*b, *a)))
            .map(|&(a, b)| (a, b))
            .collect()
    }

    fn contains_any(&self, t: [usize; 3], n: usize) -> bool {
        let (a, b, c) = (self.p(t[0]), self.p(t[1]), self.p(t[2]));
        (0..n).any(|i| {
            !t.contains(&i) && {
                let q = self.p(i);
                orient(a, b, q) >= S::zero()
                    && orient(b, c, q) >= S::zero()
                    && orient(c, a, q) >= S::zero()
            }
        })
    }

    /// Adds ears at reflex boundary vertices until the boundary is convex.
    fn fill_hull(&mut self, n: usize) {
        loop {
            let next = self.boundary();
            let mut starts: Vec<usize> = next.keys().copied().collect();
            starts.sort_unstable();
            let mut added = false;
            for a in starts {
                let b = next[&a];
                let Some(&c) = next.get(&b) else { continue };
                if c == a {
                    continue;
                }
                if orient(self.p(a), self.p(b), self.p(c)) < -self.eps
                    && !self.contains_any([a, c, b], n)
                {
                    self.tris.push([a, c, b]);
                    added = true;
                    break;
                }
            }
            if !added {
                return;
            }
        }
    }

    /// Lawson flips until every interior edge is locally Delaunay.
    fn legalize(&mut self, n: usize) {
        let cap = 100 * n * n + 100;
        for _ in 0..cap {
            let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
            for (ti, t) in self.tris.iter().enumerate() {
                for k in 0..3 {
                    owner.insert((t[k], t[(k + 1) % 3]), (ti, t[(k + 2) % 3]));
                }
            }
            let mut keys: Vec<(usize, usize)> =
                owner.keys().copied().filter(|(a, b)| a < b).collect();
            keys.sort_unstable();
            let mut flipped = false;
            for (a, b) in keys {
                let (Some(&(t1, c)), Some(&(t2, d))) = (owner.get(&(a, b)), owner.get(&(b, a)))
                else {
                    continue;
                };
                let det = self.in_circle(&self.tris[t1], d);
                let tie_break = det.abs() <= self.eps && c.min(d) < a.min(b);
                if !(det > self.eps || tie_break) {
                    continue;
                }
                // The flip is valid only for a strictly convex quad.
                let (pa, pb, pc, pd) = (self.p(a), self.p(b), self.p(c), self.p(d));
                if !(orient(pc, pd, pb) > S::zero() && orient(pd, pc, pa) > S::zero()) {
                    continue;
                }
                self.tris[t1] = [c, a, d];
                self.tris[t2] = [d, b, c];
                flipped = true;
                break;
            }
            if !flipped {
                return;
            }
        }
    }
}

/// Delaunay triangulation of the convex hull of `points`.
///
/// Triangles are CCW index triples into `points`. Exact duplicates are
/// ignored. Fewer than three distinct points or an all-collinear input is
/// reported as [`LsrError::DegenerateInput`].
pub fn delaunay_2d<S: Scalar>(points: &[[S; 2]]) -> Result<Vec<[usize; 3]>, LsrError> {
    let n = points.len();
    if n < 3 {
        return Err(LsrError::DegenerateInput);
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if !(extent > S::zero()) {
        return Err(LsrError::DegenerateInput);
    }
    let scale2 = extent * extent;
    let collinear = (0..n).all(|i| {
        (0..n).all(|j| {
            (0..n).all(|k| {
                orient(points[i], points[j], points[k]).abs() <= S::lit(PREDICATE_EPS) * scale2
            })
        })
    });
    if collinear {
        return Err(LsrError::DegenerateInput);
    }

    let mid = [(lo[0] + hi[0]) * S::lit(0.5), (lo[1] + hi[1]) * S::lit(0.5)];
    let big = extent * S::lit(100.0);
    let mut pts = points.to_vec();
    pts.push([mid[0] - big, mid[1] - big]);
    pts.push([mid[0] + big, mid[1] - big]);
    pts.push([mid[0], mid[1] + big]);
    let mut mesh = Mesh {
        pts: &pts,
        tris: vec![[n, n + 1, n + 2]],
        eps: S::lit(PREDICATE_EPS) * scale2 * scale2,
    };
    let mut seen: Vec<[S; 2]> = Vec::with_capacity(n);
    for i in 0..n {
        if seen.contains(&points[i]) {
            continue;
        }
        seen.push(points[i]);
        mesh.insert(i);
    }
    mesh.tris.retain(|t| t.iter().all(|&v| v < n));
    mesh.eps = S::lit(PREDICATE_EPS) * scale2;
    mesh.fill_hull(n);
    mesh.eps = S::lit(PREDICATE_EPS) * scale2 * scale2;
    mesh.legalize(n);
    let mut tris = mesh.tris;
    tris.sort_unstable();
    Ok(tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let t = delaunay_2d(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(t, vec![[0, 1, 2]]);
    }

    #[test]
    fn square_uses_lowest_index_diagonal() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = delaunay_2d(&pts).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|tri| tri.contains(&0) && tri.contains(&2)));
        let pts = [[1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = delaunay_2d(&pts).unwrap();
        assert!(t.iter().all(|tri| tri.contains(&0) && tri.contains(&3)));
    }

    #[test]
    fn collinear_rejected() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert_eq!(delaunay_2d(&pts), Err(LsrError::DegenerateInput));
        assert_eq!(delaunay_2d(&pts[..2]), Err(LsrError::DegenerateInput));
    }

    #[test]
    fn regular_polygon_covers_hull() {
        let n = 12;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        let t = delaunay_2d(&pts).unwrap();
        assert_eq!(t.len(), n - 2);
        let area: f64 = t
            .iter()
            .map(|tri| orient(pts[tri[0]], pts[tri[1]], pts[tri[2]]) * 0.5)
            .sum();
        let expect = 0.5 * n as f64 * (std::f64::consts::TAU / n as f64).sin();
        assert!((area - expect).abs() < 1e-12);
    }
}
