use super::intersect::{intersect_curves, refine_param};
use super::{HEdge, HNode};
use crate::scalar::{Point, Scalar};
use crate::vgdoc::{Curve, CurveKind, VgDocument};

/// Upper bound on farthest-point insertions per curve.
const MAX_FPS_STEPS: usize = 64;

struct NodeSet<S> {
    nodes: Vec<HNode<S>>,
    curves_len: Vec<S>,
    tol: S,
}

impl<S: Scalar> NodeSet<S> {
    /// Adds an anchored point, merging with the first node within `tol`.
    fn insert(&mut self, curves: &[Curve<S>], pos: Point<S>, anchors: &[(usize, S)]) -> usize {
        let tol = self.tol;
        let id = match self.nodes.iter().position(|n| n.position.dist(pos) <= tol) {
            Some(id) => id,
            None => {
                self.nodes.push(HNode {
                    id: self.nodes.len(),
                    position: pos,
                    anchors: Vec::new(),
                });
                self.nodes.len() - 1
            }
        };
        for &(c, t) in anchors {
            let node = &mut self.nodes[id];
            let len = self.curves_len[c];
            if node
                .anchors
                .iter()
                .any(|&(c2, t2)| c2 == c && (t2 - t).abs() * len <= tol)
            {
                continue;
            }
            let curve = &curves[c];
            let t = if curve.point(t).dist(node.position) > tol {
                refine_param(curve, t, node.position)
            } else {
                t
            };
            node.anchors.push((c, t));
        }
        id
    }

    fn nodes_on(&self, c: usize) -> Vec<(S, usize)> {
        let mut out: Vec<(S, usize)> = self
            .nodes
            .iter()
            .flat_map(|n| {
                n.anchors
                    .iter()
                    .filter(move |a| a.0 == c)
                    .map(move |a| (a.1, n.id))
            })
            .collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out
    }
}

/// Nodes of the hypergraph: curve endpoints, pairwise intersections, and
/// farthest-point samples so that every non-line curve carries at least
/// `min_curve_nodes` distinct nodes.
pub fn select_nodes<S: Scalar>(
    doc: &VgDocument<S>,
    tol: S,
    min_curve_nodes: usize,
) -> Vec<HNode<S>> {
    let curves = &doc.curves;
    let mut set = NodeSet {
        nodes: Vec::new(),
        curves_len: curves.iter().map(|c| c.length()).collect(),
        tol,
    };
    for (i, c) in curves.iter().enumerate() {
        set.insert(curves, c.start_point(), &[(i, S::zero())]);
        set.insert(curves, c.end_point(), &[(i, S::one())]);
    }
    for i in 0..curves.len() {
        for j in (i + 1)..curves.len() {
            for (ta, tb) in intersect_curves(&curves[i], &curves[j], tol).params {
                let pos = curves[i].point(ta);
                set.insert(curves, pos, &[(i, ta), (j, tb)]);
            }
        }
    }
    for (i, c) in curves.iter().enumerate() {
        if c.kind() == CurveKind::Line {
            continue;
        }
        let len = set.curves_len[i];
        for _ in 0..MAX_FPS_STEPS {
            let on = set.nodes_on(i);
            let mut distinct: Vec<usize> = on.iter().map(|x| x.1).collect();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() >= min_curve_nodes {
                break;
            }
            // Midpoint of the widest arc-length gap; ties go to the first.
            let s: Vec<S> = on
                .iter()
                .map(|&(t, _)| c.length_between(S::zero(), t))
                .collect();
            let mut best = (S::zero(), S::zero());
            for w in s.windows(2) {
                let gap = w[1] - w[0];
                if gap > best.0 {
                    best = (gap, (w[0] + w[1]) * S::lit(0.5));
                }
            }
            if !(best.0 > tol) {
                break;
            }
            let t = c.param_at_length(best.1.min(len));
            set.insert(curves, c.point(t), &[(i, t)]);
        }
    }
    set.nodes
}

/// Splits each curve at its anchored nodes into edges.
pub fn split_curves<S: Scalar>(doc: &VgDocument<S>, nodes: &[HNode<S>]) -> Vec<HEdge<S>> {
    let mut per_curve: Vec<Vec<(S, usize)>> = vec![Vec::new(); doc.curves.len()];
    for n in nodes {
        for &(c, t) in &n.anchors {
            per_curve[c].push((t, n.id));
        }
    }
    let mut edges = Vec::new();
    for (ci, (curve, mut anchors)) in doc.curves.iter().zip(per_curve).enumerate() {
        anchors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        assert!(anchors.len() >= 2, "curve {ci} has fewer than two anchors");
        for w in anchors.windows(2) {
            let ((t0, n0), (t1, n1)) = (w[0], w[1]);
            if !(t1 > t0) {
                continue;
            }
            edges.push(HEdge {
                id: edges.len(),
                nodes: (n0, n1),
                curve: ci,
                t_range: (t0, t1),
                start_dir: curve.tangent(t0),
                end_dir: curve.tangent(t1),
                kind: curve.kind(),
            });
        }
    }
    edges
}
