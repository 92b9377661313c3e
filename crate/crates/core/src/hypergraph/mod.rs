//! Hypergraph view of a vector-graphics document.
//!
//! Nodes are curve endpoints, curve intersections and farthest-point
//! samples; each curve is split at its nodes into edges; each filled
//! surface becomes a hyperedge over the nodes lying in its closed region.

pub mod intersect;
pub mod nodes;
pub mod surfaces;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scalar::{Point, Scalar, Vec3};
use crate::vgdoc::{normalize_document, CurveKind, SurfaceKind, Transform, VgDocument, VgError};

pub use intersect::{intersect_curves, Intersections};
pub use nodes::{select_nodes, split_curves};
pub use surfaces::{attach_surfaces, SurfaceChart};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypergraphConfig {
    /// Merge tolerance in normalized units.
    pub tol: f64,
    /// Map the document to a centered box of diagonal 2 first.
    pub normalize: bool,
    /// Minimum distinct nodes on every non-line curve.
    pub min_curve_nodes: usize,
}

impl Default for HypergraphConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            normalize: true,
            min_curve_nodes: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HNode<S> {
    pub id: usize,
    pub position: Point<S>,
    /// `(curve index, parameter)` pairs locating the node on its curves.
    pub anchors: Vec<(usize, S)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HEdge<S> {
    pub id: usize,
    /// Endpoints in curve order, `nodes.0` at `t_range.0`.
    pub nodes: (usize, usize),
    pub curve: usize,
    pub t_range: (S, S),
    pub start_dir: Vec3<S>,
    pub end_dir: Vec3<S>,
    pub kind: CurveKind,
}

impl<S: Scalar> HEdge<S> {
    /// Width of [`HEdge::features`] for a document of dimension `dim`.
    pub fn feature_len(dim: usize) -> usize {
        2 * dim + CurveKind::COUNT
    }

    /// `[start dir, end dir, type one-hot]` for traversal from `nodes.0` to
    /// `nodes.1`; the reverse traversal is `[−end dir, −start dir, type]`.
    pub fn features(&self, dim: usize, reversed: bool) -> Vec<S> {
        let (a, b) = if reversed {
            (-self.end_dir, -self.start_dir)
        } else {
            (self.start_dir, self.end_dir)
        };
        let mut f: Vec<S> = a.components(dim).chain(b.components(dim)).collect();
        f.extend((0..CurveKind::COUNT).map(|k| {
            if k == self.kind.index() {
                S::one()
            } else {
                S::zero()
            }
        }));
        f
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HSurface<S> {
    pub id: usize,
    /// Index of the source surface in the document.
    pub surface: usize,
    pub kind: SurfaceKind,
    /// Member node ids, ascending.
    pub members: Vec<usize>,
    /// Chart coordinates per member, aligned with `members`.
    pub params: Vec<[S; 2]>,
}

impl<S: Scalar> HSurface<S> {
    pub fn type_one_hot(&self) -> [S; SurfaceKind::COUNT] {
        let mut out = [S::zero(); SurfaceKind::COUNT];
        out[self.kind.index()] = S::one();
        out
    }
}

/// Edge incident to a node, seen from that node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
    /// The edge is traversed against its stored orientation.
    pub reversed: bool,
}

#[derive(Clone, Debug)]
pub struct Hypergraph<S> {
    pub dim: usize,
    pub nodes: Vec<HNode<S>>,
    pub edges: Vec<HEdge<S>>,
    pub surfaces: Vec<HSurface<S>>,
    /// Per node: edge neighbors in edge order.
    pub adjacency: Vec<Vec<Neighbor>>,
    /// Per node: ids of the hyperedges containing it.
    pub incidence: Vec<Vec<usize>>,
    /// The (possibly normalized) document the graph was built from.
    pub document: VgDocument<S>,
    pub transform: Transform<S>,
}

impl<S: Scalar> Hypergraph<S> {
    pub fn node_features(&self) -> Vec<Vec<S>> {
        self.nodes
            .iter()
            .map(|n| n.position.components(self.dim).collect())
            .collect()
    }

    /// Text dump: `N id x y [z]`, `E id n0 n1 type`, `S id type n0..nk`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let coords: Vec<String> = n
                .position
                .components(self.dim)
                .map(|c| c.to_string())
                .collect();
            let _ = writeln!(out, "N {} {}", n.id, coords.join(" "));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "E {} {} {} {}",
                e.id,
                e.nodes.0,
                e.nodes.1,
                e.kind.name()
            );
        }
        for s in &self.surfaces {
            let members: Vec<String> = s.members.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(out, "S {} {} {}", s.id, s.kind.name(), members.join(" "));
        }
        out
    }

    /// Same graph with node `i` renamed to `perm[i]`; edge and hyperedge
    /// ids are kept.
    pub fn relabel_nodes(&self, perm: &[usize]) -> Self {
        let mut nodes = self.nodes.clone();
        for n in &self.nodes {
            nodes[perm[n.id]] = HNode {
                id: perm[n.id],
                ..n.clone()
            };
        }
        let edges = self
            .edges
            .iter()
            .map(|e| HEdge {
                nodes: (perm[e.nodes.0], perm[e.nodes.1]),
                ..e.clone()
            })
            .collect::<Vec<_>>();
        let surfaces = self
            .surfaces
            .iter()
            .map(|s| {
                let mut pairs: Vec<(usize, [S; 2])> = s
                    .members
                    .iter()
                    .map(|&m| perm[m])
                    .zip(s.params.iter().copied())
                    .collect();
                pairs.sort_by_key(|p| p.0);
                HSurface {
                    members: pairs.iter().map(|p| p.0).collect(),
                    params: pairs.iter().map(|p| p.1).collect(),
                    ..s.clone()
                }
            })
            .collect::<Vec<_>>();
        let (adjacency, incidence) = build_indices(nodes.len(), &edges, &surfaces);
        Self {
            nodes,
            edges,
            surfaces,
            adjacency,
            incidence,
            ..self.clone()
        }
    }
}

fn build_indices<S>(
    n: usize,
    edges: &[HEdge<S>],
    surfaces: &[HSurface<S>],
) -> (Vec<Vec<Neighbor>>, Vec<Vec<usize>>) {
    let mut adjacency = vec![Vec::new(); n];
    for e in edges {
        let (a, b) = e.nodes;
        adjacency[a].push(Neighbor {
            node: b,
            edge: e.id,
            reversed: false,
        });
        adjacency[b].push(Neighbor {
            node: a,
            edge: e.id,
            reversed: true,
        });
    }
    let mut incidence = vec![Vec::new(); n];
    for s in surfaces {
        for &m in &s.members {
            incidence[m].push(s.id);
        }
    }
    (adjacency, incidence)
}

/// Validates, optionally normalizes, and converts `doc` into a hypergraph.
pub fn build_hypergraph<S: Scalar>(
    doc: &VgDocument<S>,
    config: &HypergraphConfig,
) -> Result<Hypergraph<S>, VgError> {
    doc.validate()?;
    let (document, transform) = if config.normalize {
        normalize_document(doc)?
    } else {
        (doc.clone(), Transform::identity())
    };
    let tol = S::lit(config.tol);
    let nodes = select_nodes(&document, tol, config.min_curve_nodes);
    let edges = split_curves(&document, &nodes);
    let surfaces = attach_surfaces(&document, &nodes, tol);
    let (adjacency, incidence) = build_indices(nodes.len(), &edges, &surfaces);
    Ok(Hypergraph {
        dim: document.dim,
        nodes,
        edges,
        surfaces,
        adjacency,
        incidence,
        document,
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgdoc::{ArcCurve, Curve, DiskSurface, Surface};
    use std::f64::consts::PI;

    fn p(x: f64, y: f64) -> Point<f64> {
        Vec3::xy(x, y)
    }

    fn square(filled: bool) -> VgDocument<f64> {
        let c = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let curves = (0..4)
            .map(|i| Curve::Line {
                p0: p(c[i].0, c[i].1),
                p1: p(c[(i + 1) % 4].0, c[(i + 1) % 4].1),
            })
            .collect();
        let surfaces = if filled {
            vec![Surface::Rect {
                origin: p(0.0, 0.0),
                u: p(1.0, 0.0),
                v: p(0.0, 1.0),
            }]
        } else {
            vec![]
        };
        VgDocument {
            dim: 2,
            curves,
            surfaces,
            label: None,
        }
    }

    #[test]
    fn square_outline() {
        let g = build_hypergraph(&square(false), &HypergraphConfig::default()).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len(), g.surfaces.len()), (4, 4, 0));
        assert!(g.adjacency.iter().all(|a| a.len() == 2));
    }

    #[test]
    fn filled_square() {
        let g = build_hypergraph(&square(true), &HypergraphConfig::default()).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len(), g.surfaces.len()), (4, 4, 1));
        assert_eq!(g.surfaces[0].members, vec![0, 1, 2, 3]);
        assert_eq!(
            g.surfaces[0].params,
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
        );
        assert!(g.incidence.iter().all(|s| s == &vec![0]));
    }

    #[test]
    fn x_shape_counts() {
        let doc = VgDocument {
            dim: 2,
            curves: vec![
                Curve::Line {
                    p0: p(0.0, 0.0),
                    p1: p(2.0, 2.0),
                },
                Curve::Line {
                    p0: p(0.0, 2.0),
                    p1: p(2.0, 0.0),
                },
            ],
            surfaces: vec![],
            label: None,
        };
        let g = build_hypergraph(&doc, &HypergraphConfig::default()).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len()), (5, 4));
        assert_eq!(g.adjacency[4].len(), 4);
    }

    #[test]
    fn edge_features_layout() {
        let g = build_hypergraph(&square(false), &HypergraphConfig::default()).unwrap();
        let f = g.edges[0].features(2, false);
        assert_eq!(f, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let r = g.edges[0].features(2, true);
        assert_eq!(r, vec![-1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.len(), HEdge::<f64>::feature_len(2));
    }

    #[test]
    fn dump_format() {
        let g = build_hypergraph(
            &square(true),
            &HypergraphConfig {
                normalize: false,
                ..Default::default()
            },
        )
        .unwrap();
        let text = g.dump();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "N 0 0 0");
        assert_eq!(lines[4], "E 0 0 1 line");
        assert_eq!(lines[8], "S 0 rect 0 1 2 3");
    }

    #[test]
    fn disk_with_semicircle_boundary() {
        let doc = VgDocument {
            dim: 2,
            curves: vec![
                Curve::Arc(ArcCurve::planar(p(0.0, 0.0), 1.0, 0.0, PI)),
                Curve::Arc(ArcCurve::planar(p(0.0, 0.0), 1.0, PI, PI)),
            ],
            surfaces: vec![Surface::Disk(DiskSurface::planar(p(0.0, 0.0), 1.0))],
            label: None,
        };
        let g = build_hypergraph(&doc, &HypergraphConfig::default()).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len()), (6, 6));
        assert_eq!(g.surfaces[0].members.len(), 6);
        for c in &g.surfaces[0].params {
            assert!((c[0].hypot(c[1]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_document_rejected() {
        let doc = VgDocument::<f64> {
            dim: 2,
            curves: vec![],
            surfaces: vec![],
            label: None,
        };
        assert!(build_hypergraph(&doc, &HypergraphConfig::default()).is_err());
    }
}
