use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use super::knn::SpatialGrid;
use super::{Fragment, LsrError, Source};
use crate::hypergraph::{HEdge, HSurface, SurfaceChart};
use crate::scalar::{Point, Scalar};
use crate::vgdoc::Curve;

/// Fragments along one edge at equal arc length, endpoints included.
///
/// Weights are linear in arc length between the edge's endpoint nodes.
pub fn sample_curve_fragments<S: Scalar>(
    curve: &Curve<S>,
    edge: &HEdge<S>,
    spacing: S,
) -> Vec<Fragment<S>> {
    let (t0, t1) = edge.t_range;
    let s0 = curve.length_between(S::zero(), t0);
    let len = curve.length_between(t0, t1);
    let n = (len / spacing).ceil().to_usize().unwrap_or(1).max(1);
    let step = len / S::from_usize_lossy(n);
    (0..=n)
        .map(|k| {
            let t = match k {
                0 => t0,
                _ if k == n => t1,
                _ => curve.param_at_length(s0 + step * S::from_usize_lossy(k)),
            };
            let w = S::from_usize_lossy(k) / S::from_usize_lossy(n);
            Fragment::segment(
                curve.point(t),
                Source::Edge(edge.id),
                [edge.nodes.0, edge.nodes.1],
                [S::one() - w, w],
            )
        })
        .collect()
}

/// Fragments along a straight node path, used when a surface's chart
/// coordinates are collinear and cannot be triangulated.
pub fn sample_node_path<S: Scalar>(
    surface: usize,
    path: &[usize],
    positions: &[Point<S>],
    spacing: S,
) -> Vec<Fragment<S>> {
    let mut out = Vec::new();
    for w in path.windows(2) {
        let (a, b) = (positions[w[0]], positions[w[1]]);
        let n = (a.dist(b) / spacing).ceil().to_usize().unwrap_or(1).max(1);
        for k in 0..=n {
            let t = S::from_usize_lossy(k) / S::from_usize_lossy(n);
            out.push(Fragment::segment(
                a.lerp(b, t),
                Source::Surface(surface),
                [w[0], w[1]],
                [S::one() - t, t],
            ));
        }
    }
    out
}

/// Drops triangles whose chart-space centroid lies outside the region.
/// Triangles index into `surface.params`.
pub fn clip_triangles<S: Scalar>(
    chart: &SurfaceChart<S>,
    surface: &HSurface<S>,
    triangles: Vec<[usize; 3]>,
) -> Vec<[usize; 3]> {
    let third = S::one() / S::lit(3.0);
    triangles
        .into_iter()
        .filter(|t| {
            let c = [0, 1].map(|k| {
                (surface.params[t[0]][k] + surface.params[t[1]][k] + surface.params[t[2]][k])
                    * third
            });
            chart.contains_param(c)
        })
        .collect()
}

fn triangle_area<S: Scalar>(a: Point<S>, b: Point<S>, c: Point<S>) -> S {
    (b - a).cross(c - a).norm() * S::lit(0.5)
}

#[derive(PartialEq)]
struct Crowding<S> {
    weight: S,
    index: usize,
}

impl<S: Scalar> Eq for Crowding<S> {}

impl<S: Scalar> Ord for Crowding<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on weight; equal weights pop the lower index first.
        self.weight
            .partial_cmp(&other.weight)
            .unwrap_or(Ordering::Equal)
            .then(other.index.cmp(&self.index))
    }
}

impl<S: Scalar> PartialOrd for Crowding<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted sample elimination: removes the most crowded candidate until
/// `target` remain. Returns surviving indices in ascending order.
pub fn eliminate<S: Scalar>(
    candidates: &[Point<S>],
    target: usize,
    r_max: S,
    exponent: i32,
) -> Vec<usize> {
    let m = candidates.len();
    if target >= m {
        return (0..m).collect();
    }
    let reach = r_max * S::lit(2.0);
    let grid = SpatialGrid::new(candidates, reach);
    let neighbors: Vec<Vec<(usize, S)>> = candidates
        .iter()
        .enumerate()
        .map(|(i, p)| {
            grid.within(*p, reach)
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| {
                    (
                        j,
                        (S::one() - candidates[j].dist(*p) / reach).powi(exponent),
                    )
                })
                .collect()
        })
        .collect();
    let mut weight: Vec<S> = neighbors
        .iter()
        .map(|nb| nb.iter().map(|x| x.1).sum())
        .collect();
    let mut alive = vec![true; m];
    let mut heap: BinaryHeap<Crowding<S>> = (0..m)
        .map(|i| Crowding {
            weight: weight[i],
            index: i,
        })
        .collect();
    let mut remaining = m;
    while remaining > target {
        let Some(top) = heap.pop() else { break };
        if !alive[top.index] || top.weight != weight[top.index] {
            continue;
        }
        alive[top.index] = false;
        remaining -= 1;
        for &(j, w) in &neighbors[top.index] {
            if alive[j] {
                weight[j] -= w;
                heap.push(Crowding {
                    weight: weight[j],
                    index: j,
                });
            }
        }
    }
    (0..m).filter(|&i| alive[i]).collect()
}

/// Sampling parameters for [`sample_surface_fragments`].
#[derive(Clone, Copy, Debug)]
pub struct SurfaceSampling<S> {
    /// Target fragments per unit area.
    pub density: S,
    /// Candidates generated per kept fragment.
    pub oversample: usize,
    /// Exponent of the elimination weight.
    pub exponent: i32,
}

/// Approximate Poisson-disk fragments over the retained triangles of a
/// surface; triangles hold node ids.
pub fn sample_surface_fragments<S: Scalar, R: Rng>(
    surface: usize,
    triangles: &[[usize; 3]],
    positions: &[Point<S>],
    params: &SurfaceSampling<S>,
    rng: &mut R,
) -> Result<Vec<Fragment<S>>, LsrError> {
    let areas: Vec<S> = triangles
        .iter()
        .map(|t| triangle_area(positions[t[0]], positions[t[1]], positions[t[2]]))
        .collect();
    let total: S = areas.iter().copied().sum();
    if !(total > S::zero()) {
        return Err(LsrError::DegenerateSurface);
    }
    let target = (params.density * total)
        .round()
        .to_usize()
        .unwrap_or(0)
        .max(8);
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = S::zero();
    for a in &areas {
        acc += *a;
        cumulative.push(acc);
    }
    let count = target * params.oversample.max(1);
    let mut cands = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = S::lit(rng.gen::<f64>()) * total;
        let ti = cumulative
            .partition_point(|c| *c <= pick)
            .min(triangles.len() - 1);
        let s = S::lit(rng.gen::<f64>()).sqrt();
        let r2 = S::lit(rng.gen::<f64>());
        let w = [S::one() - s, s * (S::one() - r2), s * r2];
        let t = triangles[ti];
        let pos = positions[t[0]] * w[0] + positions[t[1]] * w[1] + positions[t[2]] * w[2];
        cands.push(Fragment::triangle(pos, Source::Surface(surface), t, w));
    }
    let r_max = (total / (S::from_usize_lossy(target) * S::lit(3.0).sqrt())).sqrt();
    let pts: Vec<Point<S>> = cands.iter().map(|f| f.position).collect();
    let keep = eliminate(&pts, target, r_max, params.exponent);
    Ok(keep.into_iter().map(|i| cands[i].clone()).collect())
}
