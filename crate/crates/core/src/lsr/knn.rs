use std::collections::HashMap;

use super::LsrError;
use crate::scalar::{Point, Scalar};

type Cell = (i64, i64, i64);

/// Uniform hash grid over a point set.
pub struct SpatialGrid<'a, S> {
    points: &'a [Point<S>],
    origin: Point<S>,
    cell: S,
    cells: HashMap<Cell, Vec<usize>>,
    /// Squared distances closer than this count as tied.
    tie: S,
    /// Cell index of the upper corner of the point bounds.
    span: Cell,
}

impl<'a, S: Scalar> SpatialGrid<'a, S> {
    pub fn new(points: &'a [Point<S>], cell: S) -> Self {
        let mut origin = points.first().copied().unwrap_or_default();
        let mut hi = origin;
        for p in points {
            origin = origin.min_by_axis(*p);
            hi = hi.max_by_axis(*p);
        }
        let cell = if cell > S::zero() { cell } else { S::one() };
        let tie = (hi - origin).norm_sq() * S::epsilon() * S::lit(1e4);
        let mut grid = Self {
            points,
            origin,
            cell,
            cells: HashMap::new(),
            tie,
            span: (0, 0, 0),
        };
        grid.span = grid.key(hi);
        for (i, p) in points.iter().enumerate() {
            grid.cells.entry(grid.key(*p)).or_default().push(i);
        }
        grid
    }

    fn key(&self, p: Point<S>) -> Cell {
        let f = |v: S, o: S| ((v - o) / self.cell).floor().to_i64().unwrap_or(0);
        (
            f(p.x, self.origin.x),
            f(p.y, self.origin.y),
            f(p.z, self.origin.z),
        )
    }

    /// Ring radius around `c` beyond which no cell is occupied.
    fn last_ring(&self, c: Cell) -> i64 {
        let f = |v: i64, hi: i64| v.abs().max((v - hi).abs());
        f(c.0, self.span.0)
            .max(f(c.1, self.span.1))
            .max(f(c.2, self.span.2))
    }

    fn shell(&self, c: Cell, r: i64, out: &mut Vec<usize>) {
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    if let Some(v) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
    }

    /// Indices of all points within `radius` of `q`, ascending.
    pub fn within(&self, q: Point<S>, radius: S) -> Vec<usize> {
        let c = self.key(q);
        let rings = (radius / self.cell).ceil().to_i64().unwrap_or(0);
        let mut cand = Vec::new();
        for r in 0..=rings.min(self.last_ring(c)) {
            self.shell(c, r, &mut cand);
        }
        let r2 = radius * radius;
        let mut out: Vec<usize> = cand
            .into_iter()
            .filter(|&i| (self.points[i] - q).norm_sq() <= r2)
            .collect();
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `q`, ties broken by lower index. Distances
    /// equal up to rounding are ties, so the choice survives similarity
    /// transforms of the cloud.
    pub fn nearest(&self, q: Point<S>, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        let c = self.key(q);
        let mut cand: Vec<(S, usize)> = Vec::new();
        let mut buf = Vec::new();
        let last = self.last_ring(c);
        let mut r = 0;
        loop {
            buf.clear();
            self.shell(c, r, &mut buf);
            cand.extend(buf.iter().map(|&i| ((self.points[i] - q).norm_sq(), i)));
            // Every point within r·cell of q has been collected.
            let covered = self.cell * S::from_usize_lossy(r as usize);
            if cand.len() >= k {
                cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                if cand[k - 1].0 + self.tie < covered * covered || r >= last {
                    break;
                }
            }
            if r >= last {
                break;
            }
            r += 1;
        }
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if k == 0 {
            return Vec::new();
        }
        // Group runs of near-equal distances and order each run by index.
        let mut out: Vec<usize> = Vec::with_capacity(k);
        let mut start = 0;
        while out.len() < k {
            let mut end = start + 1;
            while end < cand.len() && cand[end].0 - cand[end - 1].0 <= self.tie {
                end += 1;
            }
            let mut run: Vec<usize> = cand[start..end].iter().map(|c| c.1).collect();
            run.sort_unstable();
            out.extend(run.into_iter().take(k - out.len()));
            start = end;
        }
        out
    }
}

/// For each query, the `min(k, #fragments)` nearest fragment indices in
/// ascending distance order (ties by lower index).
pub fn knn_neighborhoods<S: Scalar>(
    fragments: &[Point<S>],
    queries: &[Point<S>],
    k: usize,
) -> Result<Vec<Vec<usize>>, LsrError> {
    if fragments.is_empty() {
        return Err(LsrError::EmptyFragments);
    }
    let mut lo = fragments[0];
    let mut hi = fragments[0];
    for p in fragments {
        lo = lo.min_by_axis(*p);
        hi = hi.max_by_axis(*p);
    }
    let diag = (hi - lo).norm();
    // About one fragment per cell for a curve- or surface-like cloud.
    let cell = diag / S::from_usize_lossy(fragments.len()).sqrt().max(S::one());
    let grid = SpatialGrid::new(fragments, cell);
    Ok(queries.iter().map(|q| grid.nearest(*q, k.max(1))).collect())
}
