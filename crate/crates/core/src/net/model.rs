use indexmap::IndexMap;
use ndarray::{Array1, Array2, Axis};

use super::{Batch, Mode, ModelConfig, NetError, Sample};
use crate::gradkit::{AdamConfig, BnMode, BnStats, ParamStore, Tape, Var};
use crate::vgdoc::VgDocument;

/// Which messages enter the residual sum, and how the graph is read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    pub curve: bool,
    pub surface: bool,
    pub raster: bool,
    /// Curve messages conditioned on edge features; otherwise plain mean
    /// aggregation followed by a shared linear map.
    pub edge_features: bool,
    /// Global point-cloud readout; otherwise max over node embeddings.
    pub final_block: bool,
    /// Concatenate a coordinate-only point-cloud encoder before the head.
    pub ensemble: bool,
}

impl Streams {
    pub fn for_mode(mode: Mode) -> Self {
        let all = Streams {
            curve: true,
            surface: true,
            raster: true,
            edge_features: true,
            final_block: true,
            ensemble: false,
        };
        match mode {
            Mode::Full => all,
            Mode::VectorOnly => Streams {
                raster: false,
                ..all
            },
            Mode::RasterOnly => Streams {
                curve: false,
                surface: false,
                ..all
            },
            Mode::NoEdgeFeatures => Streams {
                edge_features: false,
                ..all
            },
            Mode::NoFinalBlock => Streams {
                final_block: false,
                ..all
            },
            Mode::Ensemble => Streams {
                raster: false,
                final_block: false,
                ensemble: true,
                ..all
            },
        }
    }
}

/// Per-block intermediate values.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub input: Var,
    pub curve: Option<Var>,
    pub surface: Option<Var>,
    pub raster: Option<Var>,
    /// `H + C + D + E` before activation.
    pub sum: Var,
    pub output: Var,
}

pub struct Forward {
    pub tape: Tape,
    pub logits: Var,
    /// Parameter name → tape leaf, for the parameters actually used.
    pub bound: IndexMap<String, Var>,
    pub bn_stats: Vec<(usize, BnStats)>,
    pub blocks: Vec<BlockTrace>,
    /// Per-fragment outputs of the global readout MLP, before the max.
    pub fragment_features: Option<Var>,
    /// Per-graph input of the classifier head.
    pub readout: Var,
}

struct Ctx<'a> {
    tape: Tape,
    store: &'a ParamStore,
    bound: IndexMap<String, Var>,
    trainable: bool,
}

impl Ctx<'_> {
    fn p(&mut self, name: &str) -> Result<Var, NetError> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let t = self.store.get(name)?.clone();
        let v = if self.trainable {
            self.tape.param(t)
        } else {
            self.tape.constant(t)
        };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    fn mlp(&mut self, name: &str, layers: usize, mut x: Var) -> Result<Var, NetError> {
        for k in 0..layers {
            let (w, b) = (
                self.p(&format!("{name}.w{k}"))?,
                self.p(&format!("{name}.b{k}"))?,
            );
            x = self.tape.linear(x, w, Some(b))?;
            if k + 1 < layers {
                x = self.tape.relu(x);
            }
        }
        Ok(x)
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.tape.constant(Array2::zeros((rows, cols)))
    }
}

/// Runs the network on a batch. `bn` selects batch or running statistics;
/// parameters are trainable leaves only in train mode.
pub fn forward(
    store: &ParamStore,
    cfg: &ModelConfig,
    batch: &Batch,
    bn: BnMode,
    streams: Streams,
) -> Result<Forward, NetError> {
    let (n, h, layers) = (batch.nodes(), cfg.hidden, cfg.mlp_layers);
    let mut cx = Ctx {
        tape: Tape::new(),
        store,
        bound: IndexMap::new(),
        trainable: bn == BnMode::Train,
    };
    let x = cx.tape.constant(batch.x.clone());
    let (ew, eb) = (cx.p("embed.w")?, cx.p("embed.b")?);
    let mut hcur = cx.tape.linear(x, ew, Some(eb))?;
    let msg_feat = cx.tape.constant(batch.msg_feat.clone());
    let pair_feat = cx.tape.constant(batch.pair_feat.clone());
    let rast_off = cx.tape.constant(batch.rast_off.clone());
    let mut bn_stats = Vec::new();
    let mut blocks = Vec::new();

    for l in 0..cfg.blocks {
        let input = hcur;
        let mut terms = vec![input];
        let curve = if streams.curve {
            let c = if batch.msg_src.is_empty() {
                cx.zeros(n, h)
            } else {
                let hj = cx.tape.gather(input, batch.msg_src.clone())?;
                if streams.edge_features {
                    let m = cx.mlp(&format!("block{l}.f1"), layers, msg_feat)?;
                    let prod = cx.tape.edge_bilinear(hj, m)?;
                    cx.tape.segment_mean(prod, batch.msg_dst.clone(), n)?
                } else {
                    let mean = cx.tape.segment_mean(hj, batch.msg_dst.clone(), n)?;
                    let w = cx.p(&format!("block{l}.conv.w"))?;
                    cx.tape.linear(mean, w, None)?
                }
            };
            terms.push(c);
            Some(c)
        } else {
            None
        };
        let surface = if streams.surface {
            let d = if batch.pair_node.is_empty() {
                cx.zeros(n, h)
            } else {
                let hi = cx.tape.gather(input, batch.pair_node.clone())?;
                let z = cx.tape.concat(&[hi, pair_feat])?;
                let f = cx.mlp(&format!("block{l}.f2"), layers, z)?;
                let hs = cx.tape.segment_max(f, &batch.pair_edge, batch.hyperedges)?;
                let back = cx.tape.gather(hs, batch.pair_edge.clone())?;
                cx.tape.segment_mean(back, batch.pair_node.clone(), n)?
            };
            terms.push(d);
            Some(d)
        } else {
            None
        };
        let raster = if streams.raster {
            let sel = cx.tape.sparse(input, batch.rast_interp.clone())?;
            let z = cx.tape.concat(&[sel, rast_off])?;
            let g = cx.mlp(&format!("block{l}.g"), layers, z)?;
            let e = cx.tape.segment_max(g, &batch.rast_node, n)?;
            terms.push(e);
            Some(e)
        } else {
            None
        };
        let sum = cx.tape.add(&terms)?;
        let act = cx.tape.relu(sum);
        let (gamma, beta) = (
            cx.p(&format!("block{l}.bn.gamma"))?,
            cx.p(&format!("block{l}.bn.beta"))?,
        );
        let mean: Array1<f64> = store
            .buffer(&format!("block{l}.bn.mean"))?
            .row(0)
            .to_owned();
        let var: Array1<f64> = store.buffer(&format!("block{l}.bn.var"))?.row(0).to_owned();
        let (out, stats) = cx
            .tape
            .batch_norm(act, gamma, beta, bn, (&mean, &var), cfg.bn_eps)?;
        if let Some(s) = stats {
            bn_stats.push((l, s));
        }
        blocks.push(BlockTrace {
            input,
            curve,
            surface,
            raster,
            sum,
            output: out,
        });
        hcur = out;
    }

    let mut fragment_features = None;
    let (readout, logits) = if streams.ensemble {
        let vg = cx.tape.segment_max(hcur, &batch.node_graph, batch.graphs)?;
        let fx = cx.tape.constant(batch.frag_x.clone());
        let pf = cx.mlp("ensemble.pointnet", layers, fx)?;
        let pn = cx.tape.segment_max(pf, &batch.frag_graph, batch.graphs)?;
        let z = cx.tape.concat(&[vg, pn])?;
        (z, cx.mlp("ensemble.head", 2, z)?)
    } else {
        let readout = if streams.final_block {
            let hp = cx.tape.sparse(hcur, batch.interp.clone())?;
            let fx = cx.tape.constant(batch.frag_x.clone());
            let z = cx.tape.concat(&[hp, fx])?;
            let g = cx.mlp("final.g", layers, z)?;
            fragment_features = Some(g);
            cx.tape.segment_max(g, &batch.frag_graph, batch.graphs)?
        } else {
            cx.tape.segment_max(hcur, &batch.node_graph, batch.graphs)?
        };
        let (w, b) = (cx.p("head.w")?, cx.p("head.b")?);
        (readout, cx.tape.linear(readout, w, Some(b))?)
    };
    Ok(Forward {
        tape: cx.tape,
        logits,
        bound: cx.bound,
        bn_stats,
        blocks,
        fragment_features,
        readout,
    })
}

/// Loss and correct-prediction count of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
}

fn labels(batch: &Batch) -> Result<Vec<usize>, NetError> {
    batch
        .labels
        .iter()
        .map(|l| l.ok_or_else(|| NetError::Config("training sample without label".into())))
        .collect()
}

pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// One Adam step on the cross-entropy of `batch`; also folds the batch
/// statistics into the normalization running averages.
pub fn train_step(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    batch: &Batch,
    adam: &AdamConfig,
) -> Result<StepStats, NetError> {
    let targets = labels(batch)?;
    let fwd = forward(
        store,
        cfg,
        batch,
        BnMode::Train,
        Streams::for_mode(cfg.mode),
    )?;
    let mut tape = fwd.tape;
    let loss = tape.softmax_cross_entropy(fwd.logits, &targets)?;
    let value = tape.value(loss)[[0, 0]];
    if !value.is_finite() {
        return Err(NetError::Config(format!("non-finite loss {value}")));
    }
    let correct = argmax_rows(tape.value(fwd.logits))
        .iter()
        .zip(&targets)
        .filter(|(a, b)| a == b)
        .count();
    let mut grads = tape.backward(loss)?;
    let named: IndexMap<String, Array2<f64>> = fwd
        .bound
        .iter()
        .filter_map(|(name, v)| grads.take(*v).map(|g| (name.clone(), g)))
        .collect();
    store.adam_step(&named, adam)?;
    let m = cfg.bn_momentum;
    for (l, s) in fwd.bn_stats {
        let mean = store.buffer_mut(&format!("block{l}.bn.mean"))?;
        *mean = &*mean * (1.0 - m) + &(s.mean.insert_axis(Axis(0)) * m);
        let var = store.buffer_mut(&format!("block{l}.bn.var"))?;
        *var = &*var * (1.0 - m) + &(s.var.insert_axis(Axis(0)) * m);
    }
    Ok(StepStats {
        loss: value,
        correct,
    })
}

/// Eval-mode logits, one row per graph.
pub fn predict(
    store: &ParamStore,
    cfg: &ModelConfig,
    batch: &Batch,
) -> Result<Array2<f64>, NetError> {
    let fwd = forward(store, cfg, batch, BnMode::Eval, Streams::for_mode(cfg.mode))?;
    Ok(fwd.tape.value(fwd.logits).clone())
}

/// Eval-mode logits of one document.
pub fn classify(
    doc: &VgDocument<f64>,
    store: &ParamStore,
    cfg: &ModelConfig,
) -> Result<Array1<f64>, NetError> {
    let sample = Sample::from_document(doc, cfg)?;
    let logits = predict(store, cfg, &Batch::collate(&[&sample]))?;
    Ok(logits.row(0).to_owned())
}

/// Wraps a sample set so that batches share their index arrays.
pub fn batch_of(samples: &[Sample], idx: &[usize]) -> Batch {
    let refs: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
    Batch::collate(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_document, Symbol};
    use crate::hypergraph::build_hypergraph;
    use crate::lsr::{build_raster_plan, RasterConfig};
    use crate::net::init_params;
    use crate::vgdoc::VgDocument;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            raster: RasterConfig {
                spacing: 0.05,
                density: 64.0,
                knn: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn doc(symbol: Symbol) -> VgDocument<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        generate_document(symbol, 0, 2, &mut rng)
    }

    fn batch(d: &VgDocument<f64>, cfg: &ModelConfig) -> Batch {
        Batch::collate(&[&Sample::from_document(d, cfg).unwrap()])
    }

    fn only(curve: bool, surface: bool, raster: bool) -> Streams {
        Streams {
            curve,
            surface,
            raster,
            ..Streams::for_mode(Mode::Full)
        }
    }

    #[test]
    fn residual_identity_with_all_streams_off() {
        let cfg = small();
        let store = init_params(&cfg, 1).unwrap();
        let f = forward(
            &store,
            &cfg,
            &batch(&doc(Symbol::House), &cfg),
            BnMode::Eval,
            only(false, false, false),
        )
        .unwrap();
        for b in &f.blocks {
            assert_eq!(f.tape.value(b.sum), f.tape.value(b.input));
        }
    }

    #[test]
    fn single_stream_sum_is_input_plus_message() {
        let cfg = small();
        let store = init_params(&cfg, 2).unwrap();
        let bt = batch(&doc(Symbol::House), &cfg);
        for (c, s, r) in [
            (true, false, false),
            (false, true, false),
            (false, false, true),
        ] {
            let f = forward(&store, &cfg, &bt, BnMode::Eval, only(c, s, r)).unwrap();
            for b in &f.blocks {
                let msg = b.curve.or(b.surface).or(b.raster).unwrap();
                let want = f.tape.value(b.input) + f.tape.value(msg);
                assert_eq!(f.tape.value(b.sum), &want);
                let diff = f.tape.value(b.sum) - f.tape.value(b.input) - f.tape.value(msg);
                assert!(diff.iter().all(|v| v.abs() <= 1e-12));
            }
        }
    }

    #[test]
    fn identity_coefficients_average_neighbors() {
        let cfg = small();
        let h = cfg.hidden;
        let mut store = init_params(&cfg, 4).unwrap();
        let last = cfg.mlp_layers - 1;
        store
            .get_mut(&format!("block0.f1.w{last}"))
            .unwrap()
            .fill(0.0);
        let eye =
            Array2::from_shape_fn((1, h * h), |(_, k)| if k / h == k % h { 1.0 } else { 0.0 });
        *store.get_mut(&format!("block0.f1.b{last}")).unwrap() = eye;

        let d = doc(Symbol::Wheel);
        let graph = build_hypergraph(&d, &cfg.hypergraph).unwrap();
        let plan = build_raster_plan(&graph, &cfg.raster).unwrap();
        let bt = Batch::collate(&[&Sample::from_parts(&graph, &plan, None)]);
        let f = forward(&store, &cfg, &bt, BnMode::Eval, only(true, false, false)).unwrap();
        let (input, c) = (
            f.tape.value(f.blocks[0].input),
            f.tape.value(f.blocks[0].curve.unwrap()),
        );
        for (i, adj) in graph.adjacency.iter().enumerate() {
            assert!(!adj.is_empty());
            for k in 0..h {
                let want = adj.iter().map(|nb| input[[nb.node, k]]).sum::<f64>() / adj.len() as f64;
                assert!((c[[i, k]] - want).abs() <= 1e-12, "node {i}");
            }
        }
    }

    #[test]
    fn surface_message_is_zero_outside_surfaces() {
        let cfg = small();
        let store = init_params(&cfg, 5).unwrap();
        let d = doc(Symbol::TeeGap);
        let graph = build_hypergraph(&d, &cfg.hypergraph).unwrap();
        let plan = build_raster_plan(&graph, &cfg.raster).unwrap();
        let bt = Batch::collate(&[&Sample::from_parts(&graph, &plan, None)]);
        let f = forward(&store, &cfg, &bt, BnMode::Eval, only(false, true, false)).unwrap();
        let dv = f.tape.value(f.blocks[0].surface.unwrap());
        let outside: Vec<usize> = (0..graph.nodes.len())
            .filter(|&i| graph.incidence[i].is_empty())
            .collect();
        assert_eq!(outside.len(), 2, "stem nodes lie outside the bar");
        for i in 0..graph.nodes.len() {
            if outside.contains(&i) {
                assert!(dv.row(i).iter().all(|&v| v == 0.0));
            } else {
                // One surface: every member receives the same pooled vector.
                let first = graph.surfaces[0].members[0];
                assert_eq!(dv.row(i), dv.row(first));
            }
        }
    }

    #[test]
    fn readout_dominates_fragment_features() {
        let cfg = small();
        let store = init_params(&cfg, 6).unwrap();
        let f = forward(
            &store,
            &cfg,
            &batch(&doc(Symbol::Arch), &cfg),
            BnMode::Eval,
            Streams::for_mode(Mode::Full),
        )
        .unwrap();
        let (g, r) = (
            f.tape.value(f.fragment_features.unwrap()),
            f.tape.value(f.readout),
        );
        for k in 0..g.ncols() {
            let col = g.column(k);
            assert!(col.iter().all(|&v| v <= r[[0, k]]));
            assert!(col.iter().any(|&v| v == r[[0, k]]));
        }
    }

    #[test]
    fn train_step_rejects_unlabelled_batches() {
        let cfg = small();
        let mut store = init_params(&cfg, 7).unwrap();
        let mut d = doc(Symbol::Hexagon);
        d.label = None;
        let bt = batch(&d, &cfg);
        assert!(train_step(&mut store, &cfg, &bt, &AdamConfig::default()).is_err());
    }
}
