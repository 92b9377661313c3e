//! Latent space rasterization.
//!
//! Curves and surfaces are turned into a point cloud of fragments. Each
//! fragment remembers the simplex it came from and its barycentric weights,
//! so node attributes reach fragments through a fixed sparse linear map.

pub mod delaunay;
pub mod knn;
pub mod sampling;

use log::warn;
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, SurfaceChart};
use crate::scalar::{Point, Scalar};
use crate::vgdoc::{Curve, Surface, VgDocument};

pub use delaunay::delaunay_2d;
pub use knn::knn_neighborhoods;
pub use sampling::{clip_triangles, sample_curve_fragments, sample_surface_fragments};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LsrError {
    #[error("degenerate input: fewer than three points or all collinear")]
    DegenerateInput,
    #[error("degenerate surface")]
    DegenerateSurface,
    #[error("dimension mismatch: expected {expected} rows, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty fragment set")]
    EmptyFragments,
}

/// Primitive a fragment was generated from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Edge(usize),
    /// Hyperedge id.
    Surface(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fragment<S> {
    pub position: Point<S>,
    pub source: Source,
    /// Simplex vertices (node ids); only the first `arity` are used.
    pub nodes: [usize; 3],
    pub weights: [S; 3],
    pub arity: usize,
}

impl<S: Scalar> Fragment<S> {
    pub fn segment(position: Point<S>, source: Source, nodes: [usize; 2], weights: [S; 2]) -> Self {
        Self {
            position,
            source,
            nodes: [nodes[0], nodes[1], nodes[1]],
            weights: [weights[0], weights[1], S::zero()],
            arity: 2,
        }
    }

    pub fn triangle(
        position: Point<S>,
        source: Source,
        nodes: [usize; 3],
        weights: [S; 3],
    ) -> Self {
        Self {
            position,
            source,
            nodes,
            weights,
            arity: 3,
        }
    }

    /// `(node, weight)` pairs of the provenance.
    pub fn provenance(&self) -> impl Iterator<Item = (usize, S)> + '_ {
        (0..self.arity).map(|k| (self.nodes[k], self.weights[k]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    /// Arc-length spacing of curve fragments.
    pub spacing: f64,
    /// Surface fragments per unit area.
    pub density: f64,
    /// Neighborhood size per node.
    pub knn: usize,
    /// Candidates per kept surface fragment.
    pub oversample: usize,
    pub seed: u64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            spacing: 2.0 / 256.0,
            density: 512.0,
            knn: 16,
            oversample: 4,
            seed: 0,
        }
    }
}

/// Simplices used for interpolation, all in node ids.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexTable {
    /// One 1-simplex per curve edge.
    pub segments: Vec<[usize; 2]>,
    /// Per hyperedge: clipped parameter-space triangulation. Empty when the
    /// chart was collinear; see `paths`.
    pub triangles: Vec<Vec<[usize; 3]>>,
    /// Per hyperedge: node chain used instead of triangles for collinear charts.
    pub paths: Vec<Vec<usize>>,
}

/// Sparse fragment × node interpolation matrix in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpMap<S> {
    pub n_nodes: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<S>,
}

impl<S: Scalar> InterpMap<S> {
    pub fn from_fragments(fragments: &[Fragment<S>], n_nodes: usize) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for f in fragments {
            for (i, w) in f.provenance() {
                cols.push(i);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n_nodes,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// `F[p] = Σ w · H[i]`.
    pub fn forward(&self, h: ArrayView2<S>) -> Result<Array2<S>, LsrError> {
        if h.nrows() != self.n_nodes {
            return Err(LsrError::DimensionMismatch {
                expected: self.n_nodes,
                got: h.nrows(),
            });
        }
        let mut out = Array2::zeros((self.rows(), h.ncols()));
        for (p, mut row) in out.rows_mut().into_iter().enumerate() {
            for k in self.row_ptr[p]..self.row_ptr[p + 1] {
                row.scaled_add(self.vals[k], &h.row(self.cols[k]));
            }
        }
        Ok(out)
    }

    /// Transpose of [`InterpMap::forward`], accumulated in fragment order.
    pub fn backward(&self, df: ArrayView2<S>) -> Result<Array2<S>, LsrError> {
        if df.nrows() != self.rows() {
            return Err(LsrError::DimensionMismatch {
                expected: self.rows(),
                got: df.nrows(),
            });
        }
        let mut out = Array2::zeros((self.n_nodes, df.ncols()));
        for p in 0..self.rows() {
            for k in self.row_ptr[p]..self.row_ptr[p + 1] {
                out.row_mut(self.cols[k])
                    .scaled_add(self.vals[k], &df.row(p));
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RasterPlan<S> {
    pub dim: usize,
    pub fragments: Vec<Fragment<S>>,
    pub simplices: SimplexTable,
    pub interp: InterpMap<S>,
    /// Per node: nearest fragment indices, closest first.
    pub neighborhoods: Vec<Vec<usize>>,
}

impl<S: Scalar> RasterPlan<S> {
    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    /// Fragment coordinates as a `fragments × dim` matrix.
    pub fn positions(&self) -> Array2<S> {
        Array2::from_shape_fn((self.fragments.len(), self.dim), |(p, k)| {
            self.fragments[p].position.get(k)
        })
    }

    pub fn interpolate_forward(&self, h: ArrayView2<S>) -> Result<Array2<S>, LsrError> {
        self.interp.forward(h)
    }

    pub fn interpolate_backward(&self, df: ArrayView2<S>) -> Result<Array2<S>, LsrError> {
        self.interp.backward(df)
    }

    /// Same plan with node `i` renamed to `perm[i]`.
    pub fn relabel_nodes(&self, perm: &[usize]) -> Self {
        let mut fragments = self.fragments.clone();
        for f in &mut fragments {
            for k in 0..f.arity {
                f.nodes[k] = perm[f.nodes[k]];
            }
        }
        let mut neighborhoods = vec![Vec::new(); self.neighborhoods.len()];
        for (i, m) in self.neighborhoods.iter().enumerate() {
            neighborhoods[perm[i]] = m.clone();
        }
        let map = |v: &mut usize| *v = perm[*v];
        let mut simplices = self.simplices.clone();
        simplices.segments.iter_mut().flatten().for_each(map);
        simplices
            .triangles
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(map);
        simplices.paths.iter_mut().flatten().for_each(map);
        let interp = InterpMap::from_fragments(&fragments, self.interp.n_nodes);
        Self {
            dim: self.dim,
            fragments,
            simplices,
            interp,
            neighborhoods,
        }
    }

    /// Same plan with fragment `p` moved to position `perm[p]`.
    pub fn permute_fragments(&self, perm: &[usize]) -> Self {
        let mut fragments = self.fragments.clone();
        for (p, f) in self.fragments.iter().enumerate() {
            fragments[perm[p]] = f.clone();
        }
        let neighborhoods = self
            .neighborhoods
            .iter()
            .map(|m| m.iter().map(|&p| perm[p]).collect())
            .collect();
        let interp = InterpMap::from_fragments(&fragments, self.interp.n_nodes);
        Self {
            dim: self.dim,
            fragments,
            simplices: self.simplices.clone(),
            interp,
            neighborhoods,
        }
    }
}

fn put<S: Scalar>(h: &mut Sha256, v: S) {
    let q = (v.as_f64() * 1e6).round() as i64;
    h.update(q.to_le_bytes());
}

fn put_point<S: Scalar>(h: &mut Sha256, p: Point<S>) {
    put(h, p.x);
    put(h, p.y);
    put(h, p.z);
}

/// Digest of a document's geometry with coordinates quantized to 1e-6, so
/// that round-off from normalization does not change the sampling stream.
pub fn document_digest<S: Scalar>(doc: &VgDocument<S>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((doc.dim as u64).to_le_bytes());
    for c in &doc.curves {
        h.update([c.kind().index() as u8]);
        match c {
            Curve::Line { p0, p1 } => [*p0, *p1].into_iter().for_each(|p| put_point(&mut h, p)),
            Curve::QuadBezier { p0, p1, p2 } => [*p0, *p1, *p2]
                .into_iter()
                .for_each(|p| put_point(&mut h, p)),
            Curve::Arc(a) => {
                [a.center, a.ax, a.ay]
                    .into_iter()
                    .for_each(|p| put_point(&mut h, p));
                [a.radius, a.start, a.sweep]
                    .into_iter()
                    .for_each(|v| put(&mut h, v));
            }
        }
    }
    for s in &doc.surfaces {
        h.update([0x80 | s.kind().index() as u8]);
        match s {
            Surface::Polygon { ring } => ring.iter().for_each(|p| put_point(&mut h, *p)),
            Surface::Disk(d) => {
                [d.center, d.ax, d.ay]
                    .into_iter()
                    .for_each(|p| put_point(&mut h, p));
                put(&mut h, d.radius);
            }
            Surface::Rect { origin, u, v } => [*origin, *u, *v]
                .into_iter()
                .for_each(|p| put_point(&mut h, p)),
        }
    }
    h.finalize().into()
}

fn plan_seed(digest: &[u8; 32], seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(digest);
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

/// Orders member indices along the principal direction of their charts.
fn collinear_order<S: Scalar>(params: &[[S; 2]]) -> Vec<usize> {
    let (mut lo, mut hi) = (params[0], params[0]);
    for p in params {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    let mut idx: Vec<usize> = (0..params.len()).collect();
    idx.sort_by(|&a, &b| {
        params[a][axis]
            .partial_cmp(&params[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.dedup_by(|a, b| params[*a] == params[*b]);
    idx
}

/// Fragments, simplices, interpolation map and neighborhoods for a graph.
pub fn build_raster_plan<S: Scalar>(
    graph: &Hypergraph<S>,
    cfg: &RasterConfig,
) -> Result<RasterPlan<S>, LsrError> {
    let spacing = S::lit(cfg.spacing);
    let positions: Vec<Point<S>> = graph.nodes.iter().map(|n| n.position).collect();
    let mut fragments = Vec::new();
    let mut segments = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        segments.push([e.nodes.0, e.nodes.1]);
        fragments.extend(sample_curve_fragments(
            &graph.document.curves[e.curve],
            e,
            spacing,
        ));
    }

    let seed = plan_seed(&document_digest(&graph.document), cfg.seed);
    let sampling = sampling::SurfaceSampling {
        density: S::lit(cfg.density),
        oversample: cfg.oversample,
        exponent: 8,
    };
    let mut triangles = Vec::with_capacity(graph.surfaces.len());
    let mut paths = Vec::with_capacity(graph.surfaces.len());
    for hs in &graph.surfaces {
        let chart = SurfaceChart::new(&graph.document.surfaces[hs.surface]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(hs.id as u64);
        match delaunay_2d(&hs.params) {
            Ok(local) => {
                let kept = clip_triangles(&chart, hs, local);
                let tris: Vec<[usize; 3]> = kept.iter().map(|t| t.map(|k| hs.members[k])).collect();
                if tris.is_empty() {
                    warn!(
                        "surface {}: every triangle clipped; no surface fragments",
                        hs.id
                    );
                } else {
                    fragments.extend(sample_surface_fragments(
                        hs.id, &tris, &positions, &sampling, &mut rng,
                    )?);
                }
                triangles.push(tris);
                paths.push(Vec::new());
            }
            Err(LsrError::DegenerateInput) => {
                let path: Vec<usize> = collinear_order(&hs.params)
                    .into_iter()
                    .map(|k| hs.members[k])
                    .collect();
                warn!(
                    "surface {}: collinear chart; sampling along {} nodes",
                    hs.id,
                    path.len()
                );
                fragments.extend(sampling::sample_node_path(
                    hs.id, &path, &positions, spacing,
                ));
                triangles.push(Vec::new());
                paths.push(path);
            }
            Err(e) => return Err(e),
        }
    }

    let cloud: Vec<Point<S>> = fragments.iter().map(|f| f.position).collect();
    let neighborhoods = knn_neighborhoods(&cloud, &positions, cfg.knn)?;
    let interp = InterpMap::from_fragments(&fragments, graph.nodes.len());
    Ok(RasterPlan {
        dim: graph.dim,
        fragments,
        simplices: SimplexTable {
            segments,
            triangles,
            paths,
        },
        interp,
        neighborhoods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{build_hypergraph, HypergraphConfig};
    use crate::scalar::Vec3;
    use ndarray::array;

    fn square(filled: bool) -> VgDocument<f64> {
        let c = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let curves = (0..4)
            .map(|i| Curve::Line {
                p0: Vec3::xy(c[i].0, c[i].1),
                p1: Vec3::xy(c[(i + 1) % 4].0, c[(i + 1) % 4].1),
            })
            .collect();
        let surfaces = if filled {
            vec![Surface::Rect {
                origin: Vec3::xy(0.0, 0.0),
                u: Vec3::xy(1.0, 0.0),
                v: Vec3::xy(0.0, 1.0),
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
    fn outline_count_by_formula() {
        let g = build_hypergraph(&square(false), &HypergraphConfig::default()).unwrap();
        let cfg = RasterConfig {
            spacing: 2.0 / 8.0,
            ..Default::default()
        };
        let plan = build_raster_plan(&g, &cfg).unwrap();
        // Side sqrt(2) after normalization.
        let per_edge = (2f64.sqrt() / 0.25).ceil() as usize + 1;
        assert_eq!(plan.len(), 4 * per_edge);
        assert!(plan.fragments.iter().all(|f| f.arity == 2));
        assert!(plan.neighborhoods.iter().all(|m| m.len() == 16));
    }

    #[test]
    fn deterministic() {
        let g = build_hypergraph(&square(true), &HypergraphConfig::default()).unwrap();
        let a = build_raster_plan(&g, &RasterConfig::default()).unwrap();
        let b = build_raster_plan(&g, &RasterConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = build_raster_plan(
            &g,
            &RasterConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vertex_and_midpoint_interpolation() {
        let frags = vec![
            Fragment::segment(Vec3::xy(0.0, 0.0), Source::Edge(0), [0, 1], [1.0, 0.0]),
            Fragment::segment(Vec3::xy(0.5, 0.0), Source::Edge(0), [0, 1], [0.5, 0.5]),
        ];
        let m = InterpMap::from_fragments(&frags, 2);
        let h = array![[1.0, 2.0], [3.0, 6.0]];
        let f = m.forward(h.view()).unwrap();
        assert_eq!(f, array![[1.0, 2.0], [2.0, 4.0]]);
        assert!(m.forward(array![[1.0]].view()).is_err());
        assert_eq!(
            m.backward(Array2::zeros((2, 3)).view()).unwrap(),
            Array2::<f64>::zeros((2, 3))
        );
    }

    #[test]
    fn surface_fragments_present() {
        let g = build_hypergraph(&square(true), &HypergraphConfig::default()).unwrap();
        let plan = build_raster_plan(&g, &RasterConfig::default()).unwrap();
        let n = plan.fragments.iter().filter(|f| f.arity == 3).count();
        assert_eq!(n, (512.0f64 * 2.0).round() as usize);
        assert_eq!(plan.simplices.triangles[0].len(), 2);
    }
}
