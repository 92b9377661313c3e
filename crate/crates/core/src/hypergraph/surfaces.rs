use log::warn;

use super::{HNode, HSurface};
use crate::scalar::{Point, Scalar};
use crate::vgdoc::geom::{point_in_ring, polygon_frame, PlaneFrame};
use crate::vgdoc::{Surface, VgDocument};

/// Parameter chart of a surface: membership test plus 2D coordinates.
pub enum SurfaceChart<S> {
    Rect {
        origin: Point<S>,
        u: Point<S>,
        v: Point<S>,
    },
    Disk {
        center: Point<S>,
        radius: S,
        ax: Point<S>,
        ay: Point<S>,
    },
    Polygon {
        frame: PlaneFrame<S>,
        ring: Vec<(S, S)>,
        lo: (S, S),
        hi: (S, S),
    },
}

impl<S: Scalar> SurfaceChart<S> {
    pub fn new(surface: &Surface<S>) -> Self {
        match surface {
            Surface::Rect { origin, u, v } => SurfaceChart::Rect {
                origin: *origin,
                u: *u,
                v: *v,
            },
            Surface::Disk(d) => SurfaceChart::Disk {
                center: d.center,
                radius: d.radius,
                ax: d.ax,
                ay: d.ay,
            },
            Surface::Polygon { ring } => {
                let frame = polygon_frame(ring).expect("validated polygon");
                let ring: Vec<(S, S)> = ring.iter().map(|p| frame.local(*p)).collect();
                let mut lo = ring[0];
                let mut hi = ring[0];
                for &(x, y) in &ring {
                    lo = (lo.0.min(x), lo.1.min(y));
                    hi = (hi.0.max(x), hi.1.max(y));
                }
                SurfaceChart::Polygon {
                    frame,
                    ring,
                    lo,
                    hi,
                }
            }
        }
    }

    /// Chart coordinates of `p` if it lies in the closed region within `tol`.
    pub fn locate(&self, p: Point<S>, tol: S) -> Option<[S; 2]> {
        let clamp01 = |x: S| x.max(S::zero()).min(S::one());
        match self {
            SurfaceChart::Rect { origin, u, v } => {
                let d = p - *origin;
                let (uu, uv, vv) = (u.dot(*u), u.dot(*v), v.dot(*v));
                let (du, dv) = (d.dot(*u), d.dot(*v));
                let det = uu * vv - uv * uv;
                let a = (du * vv - dv * uv) / det;
                let b = (dv * uu - du * uv) / det;
                let off = (d - *u * a - *v * b).norm();
                let (su, sv) = (tol / uu.sqrt(), tol / vv.sqrt());
                let inside =
                    off <= tol && a >= -su && a <= S::one() + su && b >= -sv && b <= S::one() + sv;
                inside.then(|| [clamp01(a), clamp01(b)])
            }
            SurfaceChart::Disk {
                center,
                radius,
                ax,
                ay,
            } => {
                let d = p - *center;
                let (x, y) = (d.dot(*ax), d.dot(*ay));
                let off = (d - *ax * x - *ay * y).norm();
                let r = (x * x + y * y).sqrt();
                if off > tol || r > *radius + tol {
                    return None;
                }
                let scale = if r > *radius {
                    S::one() / r
                } else {
                    S::one() / *radius
                };
                Some([x * scale, y * scale])
            }
            SurfaceChart::Polygon {
                frame,
                ring,
                lo,
                hi,
            } => {
                if frame.offset(p).abs() > tol {
                    return None;
                }
                let q = frame.local(p);
                if !point_in_ring(ring, q, tol) {
                    return None;
                }
                Some([
                    clamp01((q.0 - lo.0) / (hi.0 - lo.0)),
                    clamp01((q.1 - lo.1) / (hi.1 - lo.1)),
                ])
            }
        }
    }

    /// Whether a chart-space point lies in the region (used for clipping).
    pub fn contains_param(&self, c: [S; 2]) -> bool {
        match self {
            SurfaceChart::Rect { .. } => true,
            SurfaceChart::Disk { .. } => c[0] * c[0] + c[1] * c[1] <= S::one() + S::lit(1e-12),
            SurfaceChart::Polygon { ring, lo, hi, .. } => {
                let q = (lo.0 + c[0] * (hi.0 - lo.0), lo.1 + c[1] * (hi.1 - lo.1));
                point_in_ring(ring, q, S::zero())
            }
        }
    }
}

/// Surface hyperedges: every node in the closed region of each surface.
pub fn attach_surfaces<S: Scalar>(
    doc: &VgDocument<S>,
    nodes: &[HNode<S>],
    tol: S,
) -> Vec<HSurface<S>> {
    let mut out = Vec::new();
    for (si, surface) in doc.surfaces.iter().enumerate() {
        let chart = SurfaceChart::new(surface);
        let mut members = Vec::new();
        let mut params = Vec::new();
        for n in nodes {
            if let Some(c) = chart.locate(n.position, tol) {
                members.push(n.id);
                params.push(c);
            }
        }
        if members.len() < 3 {
            warn!("surface {si} has {} member nodes; dropped", members.len());
            continue;
        }
        out.push(HSurface {
            id: out.len(),
            surface: si,
            kind: surface.kind(),
            members,
            params,
        });
    }
    out
}
