use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};

use super::{ModelConfig, NetError};
use crate::hypergraph::{build_hypergraph, Hypergraph};
use crate::lsr::{build_raster_plan, InterpMap, RasterPlan};
use crate::vgdoc::VgDocument;

/// Index arrays and constant inputs of one document, ready to batch.
#[derive(Clone, Debug)]
pub struct Sample {
    pub dim: usize,
    pub label: Option<usize>,
    /// Node coordinates, `nodes × dim`.
    pub x: Array2<f64>,
    /// Directed curve messages `src → dst` with their edge features.
    pub msg_src: Vec<usize>,
    pub msg_dst: Vec<usize>,
    pub msg_feat: Array2<f64>,
    /// Hyperedge membership pairs with `[type one-hot, chart coords]`.
    pub hyperedges: usize,
    pub pair_node: Vec<usize>,
    pub pair_edge: Vec<usize>,
    pub pair_feat: Array2<f64>,
    /// Fragment coordinates and interpolation map.
    pub frag_x: Array2<f64>,
    pub interp: InterpMap<f64>,
    /// Neighborhood pairs `(fragment, node)` with offset `x_p − x_i`.
    pub rast_frag: Vec<usize>,
    /// Rows of `interp` for each pair's fragment.
    pub rast_interp: InterpMap<f64>,
    pub rast_node: Vec<usize>,
    pub rast_off: Array2<f64>,
}

impl Sample {
    pub fn nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn fragments(&self) -> usize {
        self.frag_x.nrows()
    }

    pub fn from_parts(
        graph: &Hypergraph<f64>,
        plan: &RasterPlan<f64>,
        label: Option<usize>,
    ) -> Self {
        let d = graph.dim;
        let x = Array2::from_shape_fn((graph.nodes.len(), d), |(i, k)| {
            graph.nodes[i].position.get(k)
        });

        let (mut msg_src, mut msg_dst, mut feats) = (Vec::new(), Vec::new(), Vec::new());
        for (i, adj) in graph.adjacency.iter().enumerate() {
            for nb in adj {
                msg_src.push(nb.node);
                msg_dst.push(i);
                // Traversal j → i runs against the i → j orientation.
                feats.extend(graph.edges[nb.edge].features(d, !nb.reversed));
            }
        }
        let ef = crate::hypergraph::HEdge::<f64>::feature_len(d);
        let msg_feat = Array2::from_shape_vec((msg_src.len(), ef), feats).expect("row length");

        let (mut pair_node, mut pair_edge, mut pfeat) = (Vec::new(), Vec::new(), Vec::new());
        for s in &graph.surfaces {
            for (&m, t) in s.members.iter().zip(&s.params) {
                pair_node.push(m);
                pair_edge.push(s.id);
                pfeat.extend(s.type_one_hot());
                pfeat.extend(t);
            }
        }
        let sf = crate::vgdoc::SurfaceKind::COUNT + 2;
        let pair_feat = Array2::from_shape_vec((pair_node.len(), sf), pfeat).expect("row length");

        let frag_x = plan.positions();
        let (mut rast_frag, mut rast_node, mut off) = (Vec::new(), Vec::new(), Vec::new());
        for (i, m) in plan.neighborhoods.iter().enumerate() {
            for &p in m {
                rast_frag.push(p);
                rast_node.push(i);
                off.extend((0..d).map(|k| frag_x[[p, k]] - x[[i, k]]));
            }
        }
        let rast_off = Array2::from_shape_vec((rast_frag.len(), d), off).expect("row length");
        let rast_interp = select_rows(&plan.interp, &rast_frag);
        Self {
            dim: d,
            label,
            x,
            msg_src,
            msg_dst,
            msg_feat,
            hyperedges: graph.surfaces.len(),
            pair_node,
            pair_edge,
            pair_feat,
            frag_x,
            interp: plan.interp.clone(),
            rast_frag,
            rast_interp,
            rast_node,
            rast_off,
        }
    }

    /// Builds hypergraph and raster plan with the model's settings.
    pub fn from_document(doc: &VgDocument<f64>, cfg: &ModelConfig) -> Result<Self, NetError> {
        if doc.dim != cfg.dim {
            return Err(NetError::Dimension {
                expected: cfg.dim,
                got: doc.dim,
            });
        }
        let graph = build_hypergraph(doc, &cfg.hypergraph)?;
        let plan = build_raster_plan(&graph, &cfg.raster)?;
        Ok(Self::from_parts(&graph, &plan, doc.label))
    }
}

fn select_rows(map: &InterpMap<f64>, rows: &[usize]) -> InterpMap<f64> {
    let mut out = InterpMap {
        n_nodes: map.n_nodes,
        row_ptr: vec![0],
        cols: Vec::new(),
        vals: Vec::new(),
    };
    for &r in rows {
        let span = map.row_ptr[r]..map.row_ptr[r + 1];
        out.cols.extend_from_slice(&map.cols[span.clone()]);
        out.vals.extend_from_slice(&map.vals[span]);
        out.row_ptr.push(out.cols.len());
    }
    out
}

fn append(dst: &mut InterpMap<f64>, src: &InterpMap<f64>, node_off: usize) {
    let base = dst.cols.len();
    dst.row_ptr
        .extend(src.row_ptr[1..].iter().map(|r| r + base));
    dst.cols.extend(src.cols.iter().map(|c| c + node_off));
    dst.vals.extend_from_slice(&src.vals);
}

/// Disjoint union of samples with offset indices.
#[derive(Clone, Debug)]
pub struct Batch {
    pub graphs: usize,
    pub x: Array2<f64>,
    pub node_graph: Arc<Vec<usize>>,
    pub msg_src: Arc<Vec<usize>>,
    pub msg_dst: Arc<Vec<usize>>,
    pub msg_feat: Array2<f64>,
    pub hyperedges: usize,
    pub pair_node: Arc<Vec<usize>>,
    pub pair_edge: Arc<Vec<usize>>,
    pub pair_feat: Array2<f64>,
    pub frag_x: Array2<f64>,
    pub frag_graph: Arc<Vec<usize>>,
    pub interp: Arc<InterpMap<f64>>,
    pub rast_frag: Arc<Vec<usize>>,
    pub rast_interp: Arc<InterpMap<f64>>,
    pub rast_node: Arc<Vec<usize>>,
    pub rast_off: Array2<f64>,
    pub labels: Vec<Option<usize>>,
}

fn stack(parts: Vec<&Array2<f64>>, cols: usize) -> Array2<f64> {
    if parts.is_empty() {
        return Array2::zeros((0, cols));
    }
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    concatenate(Axis(0), &views).expect("equal column counts")
}

impl Batch {
    pub fn collate(samples: &[&Sample]) -> Self {
        let d = samples.first().map_or(2, |s| s.dim);
        let (mut node_off, mut frag_off, mut he_off) = (0, 0, 0);
        let mut node_graph = Vec::new();
        let mut frag_graph = Vec::new();
        let (mut msg_src, mut msg_dst, mut pair_node, mut pair_edge) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut rast_frag, mut rast_node) = (Vec::new(), Vec::new());
        let empty = || InterpMap {
            n_nodes: 0,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        };
        let (mut interp, mut rast_interp) = (empty(), empty());
        for (g, s) in samples.iter().enumerate() {
            node_graph.extend(std::iter::repeat_n(g, s.nodes()));
            frag_graph.extend(std::iter::repeat_n(g, s.fragments()));
            msg_src.extend(s.msg_src.iter().map(|i| i + node_off));
            msg_dst.extend(s.msg_dst.iter().map(|i| i + node_off));
            pair_node.extend(s.pair_node.iter().map(|i| i + node_off));
            pair_edge.extend(s.pair_edge.iter().map(|i| i + he_off));
            rast_frag.extend(s.rast_frag.iter().map(|p| p + frag_off));
            rast_node.extend(s.rast_node.iter().map(|i| i + node_off));
            append(&mut interp, &s.interp, node_off);
            append(&mut rast_interp, &s.rast_interp, node_off);
            node_off += s.nodes();
            frag_off += s.fragments();
            he_off += s.hyperedges;
        }
        interp.n_nodes = node_off;
        rast_interp.n_nodes = node_off;
        let ef = samples.first().map_or(0, |s| s.msg_feat.ncols());
        let sf = samples.first().map_or(0, |s| s.pair_feat.ncols());
        Self {
            graphs: samples.len(),
            x: stack(samples.iter().map(|s| &s.x).collect(), d),
            node_graph: Arc::new(node_graph),
            msg_src: Arc::new(msg_src),
            msg_dst: Arc::new(msg_dst),
            msg_feat: stack(samples.iter().map(|s| &s.msg_feat).collect(), ef),
            hyperedges: he_off,
            pair_node: Arc::new(pair_node),
            pair_edge: Arc::new(pair_edge),
            pair_feat: stack(samples.iter().map(|s| &s.pair_feat).collect(), sf),
            frag_x: stack(samples.iter().map(|s| &s.frag_x).collect(), d),
            frag_graph: Arc::new(frag_graph),
            interp: Arc::new(interp),
            rast_frag: Arc::new(rast_frag),
            rast_interp: Arc::new(rast_interp),
            rast_node: Arc::new(rast_node),
            rast_off: stack(samples.iter().map(|s| &s.rast_off).collect(), d),
            labels: samples.iter().map(|s| s.label).collect(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.x.nrows()
    }
}
