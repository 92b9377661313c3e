//! Tape-based reverse-mode autodiff over 64-bit row-major matrices.
//!
//! Every value is a 2D array; scalars are `1 × 1`. Nodes are appended in
//! evaluation order, so a reverse sweep over the tape is a valid backward
//! schedule.

pub mod check;
pub mod optim;

use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis, Zip};
use thiserror::Error;

use crate::lsr::InterpMap;

pub use check::{grad_check, relative_error};
pub use optim::{AdamConfig, ParamStore};

pub type Tensor = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("batch normalization in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("loss must be 1 x 1, got {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
}

fn shape_err(op: &'static str, expected: &[usize], got: &[usize]) -> GradError {
    GradError::Shape {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Batch statistics from a train-mode normalization, for running averages.
#[derive(Clone, Debug)]
pub struct BnStats {
    pub mean: Array1<f64>,
    /// Unbiased variance.
    pub var: Array1<f64>,
}

enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Vec<Var>),
    Relu(Var),
    Concat(Vec<Var>),
    Gather {
        x: Var,
        idx: Arc<Vec<usize>>,
    },
    SegmentMax {
        x: Var,
        argmax: Array2<usize>,
    },
    SegmentMean {
        x: Var,
        seg: Arc<Vec<usize>>,
        counts: Vec<usize>,
    },
    Sparse {
        x: Var,
        map: Arc<InterpMap<f64>>,
    },
    EdgeBilinear {
        h: Var,
        m: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Array1<f64>,
        mode: BnMode,
    },
    SoftmaxCe {
        probs: Tensor,
        targets: Vec<usize>,
        logits: Var,
    },
    Dot {
        x: Var,
        w: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        let d = self.nodes[v.0].value.dim();
        [d.0, d.1]
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// `x · w + b`, with `b` a `1 × out` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, GradError> {
        let ([n, a], [a2, o]) = (self.shape(x), self.shape(w));
        if a != a2 {
            return Err(shape_err("linear", &[n, a2], &[n, a]));
        }
        let mut y = self.value(x).dot(self.value(w));
        if let Some(b) = b {
            if self.shape(b) != [1, o] {
                return Err(shape_err("linear bias", &[1, o], &self.shape(b)));
            }
            y += self.value(b);
        }
        let inputs: Vec<Var> = [x, w].into_iter().chain(b).collect();
        Ok(self.push(y, Op::Linear { x, w, b }, &inputs))
    }

    /// Elementwise sum of equally shaped inputs.
    pub fn add(&mut self, xs: &[Var]) -> Result<Var, GradError> {
        let shape = self.shape(xs[0]);
        let mut y = self.value(xs[0]).clone();
        for &x in &xs[1..] {
            if self.shape(x) != shape {
                return Err(shape_err("add", &shape, &self.shape(x)));
            }
            y += self.value(x);
        }
        Ok(self.push(y, Op::Add(xs.to_vec()), xs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(|v| v.max(0.0));
        self.push(y, Op::Relu(x), &[x])
    }

    /// Concatenation along columns.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, GradError> {
        let n = self.shape(xs[0])[0];
        if let Some(&bad) = xs.iter().find(|&&x| self.shape(x)[0] != n) {
            return Err(shape_err("concat", &[n], &[self.shape(bad)[0]]));
        }
        let views: Vec<_> = xs.iter().map(|&x| self.value(x).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        Ok(self.push(y, Op::Concat(xs.to_vec()), xs))
    }

    /// Rows `x[idx[r]]`.
    pub fn gather(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var, GradError> {
        let [n, c] = self.shape(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err("gather", &[n], &[bad]));
        }
        let src = self.value(x);
        let mut y = Array2::zeros((idx.len(), c));
        for (r, &i) in idx.iter().enumerate() {
            y.row_mut(r).assign(&src.row(i));
        }
        Ok(self.push(y, Op::Gather { x, idx }, &[x]))
    }

    /// Columnwise max per group; `seg[r]` is the group of row `r`.
    pub fn segment_max(&mut self, x: Var, seg: &[usize], groups: usize) -> Result<Var, GradError> {
        let [n, c] = self.shape(x);
        if seg.len() != n {
            return Err(shape_err("segment_max", &[n], &[seg.len()]));
        }
        let v = self.value(x);
        let mut y = Array2::from_elem((groups, c), f64::NEG_INFINITY);
        let mut argmax = Array2::from_elem((groups, c), usize::MAX);
        for (r, &g) in seg.iter().enumerate() {
            for k in 0..c {
                if argmax[[g, k]] == usize::MAX || v[[r, k]] > y[[g, k]] {
                    y[[g, k]] = v[[r, k]];
                    argmax[[g, k]] = r;
                }
            }
        }
        if let Some(g) = (0..groups).find(|&g| c > 0 && argmax[[g, 0]] == usize::MAX) {
            return Err(GradError::EmptySegment(g));
        }
        Ok(self.push(y, Op::SegmentMax { x, argmax }, &[x]))
    }

    /// Mean per group; empty groups give zero rows.
    pub fn segment_mean(
        &mut self,
        x: Var,
        seg: Arc<Vec<usize>>,
        groups: usize,
    ) -> Result<Var, GradError> {
        let [n, c] = self.shape(x);
        if seg.len() != n {
            return Err(shape_err("segment_mean", &[n], &[seg.len()]));
        }
        let mut counts = vec![0usize; groups];
        let mut y = Array2::zeros((groups, c));
        let v = self.value(x);
        for (r, &g) in seg.iter().enumerate() {
            counts[g] += 1;
            y.row_mut(g).scaled_add(1.0, &v.row(r));
        }
        for (g, &k) in counts.iter().enumerate() {
            if k > 0 {
                y.row_mut(g).mapv_inplace(|t| t / k as f64);
            }
        }
        Ok(self.push(y, Op::SegmentMean { x, seg, counts }, &[x]))
    }

    /// Interpolation `F = W · H` through a fixed sparse map.
    pub fn sparse(&mut self, x: Var, map: Arc<InterpMap<f64>>) -> Result<Var, GradError> {
        let y = map
            .forward(self.value(x).view())
            .map_err(|_| shape_err("sparse", &[map.n_nodes], &[self.shape(x)[0]]))?;
        Ok(self.push(y, Op::Sparse { x, map }, &[x]))
    }

    /// Per row `e`: `h[e] · reshape(m[e], d × d)`.
    pub fn edge_bilinear(&mut self, h: Var, m: Var) -> Result<Var, GradError> {
        let ([e, d], [e2, dd]) = (self.shape(h), self.shape(m));
        if e != e2 || dd != d * d {
            return Err(shape_err("edge_bilinear", &[e, d * d], &[e2, dd]));
        }
        let (hv, mv) = (self.value(h), self.value(m));
        let mut y = Array2::zeros((e, d));
        for r in 0..e {
            let mat = mv
                .row(r)
                .into_shape_with_order((d, d))
                .expect("row is contiguous");
            y.row_mut(r).assign(&hv.row(r).dot(&mat));
        }
        Ok(self.push(y, Op::EdgeBilinear { h, m }, &[h, m]))
    }

    /// Per-column normalization over rows. In eval mode the running
    /// statistics are used; in train mode the batch statistics are returned.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode,
        running: (&Array1<f64>, &Array1<f64>),
        eps: f64,
    ) -> Result<(Var, Option<BnStats>), GradError> {
        let [n, c] = self.shape(x);
        for p in [gamma, beta] {
            if self.shape(p) != [1, c] {
                return Err(shape_err("batch_norm", &[1, c], &self.shape(p)));
            }
        }
        let v = self.value(x);
        let (mean, var, stats) = match mode {
            BnMode::Train => {
                if n < 2 {
                    return Err(GradError::BatchTooSmall(n));
                }
                let mean = v.mean_axis(Axis(0)).expect("n >= 2");
                let var = v.var_axis(Axis(0), 0.0);
                let unbiased = &var * (n as f64 / (n - 1) as f64);
                (
                    mean.clone(),
                    var,
                    Some(BnStats {
                        mean,
                        var: unbiased,
                    }),
                )
            }
            BnMode::Eval => (running.0.clone(), running.1.clone(), None),
        };
        let inv_std = var.mapv(|s| 1.0 / (s + eps).sqrt());
        let xhat = (v - &mean.view().insert_axis(Axis(0))) * &inv_std.view().insert_axis(Axis(0));
        let y = &xhat * self.value(gamma) + self.value(beta);
        let out = self.push(
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            },
            &[x, gamma, beta],
        );
        Ok((out, stats))
    }

    /// Mean negative log-likelihood of `targets` under row softmax.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
    ) -> Result<Var, GradError> {
        let [n, c] = self.shape(logits);
        if targets.len() != n {
            return Err(shape_err("softmax_cross_entropy", &[n], &[targets.len()]));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(GradError::TargetOutOfRange {
                target: t,
                classes: c,
            });
        }
        let mut probs = self.value(logits).clone();
        let mut loss = 0.0;
        for (mut row, &t) in probs.rows_mut().into_iter().zip(targets) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            row.mapv_inplace(|v| (v - lse).exp());
        }
        let y = Array2::from_elem((1, 1), loss / n as f64);
        Ok(self.push(
            y,
            Op::SoftmaxCe {
                probs,
                targets: targets.to_vec(),
                logits,
            },
            &[logits],
        ))
    }

    /// `Σ x ⊙ w` for a constant `w`.
    pub fn dot(&mut self, x: Var, w: Tensor) -> Result<Var, GradError> {
        if self.shape(x) != [w.nrows(), w.ncols()] {
            return Err(shape_err("dot", &[w.nrows(), w.ncols()], &self.shape(x)));
        }
        let y = Array2::from_elem((1, 1), (self.value(x) * &w).sum());
        Ok(self.push(y, Op::Dot { x, w }, &[x]))
    }

    /// Reverse sweep from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, GradError> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(GradError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, d: Tensor| match &mut grads[v.0] {
            Some(t) => *t += &d,
            slot @ None => *slot = Some(d),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                if needs(*x) {
                    acc(*x, g.dot(&self.value(*w).t()));
                }
                if needs(*w) {
                    acc(*w, self.value(*x).t().dot(g));
                }
                if let Some(b) = b {
                    if needs(*b) {
                        acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                }
            }
            Op::Add(xs) => {
                for &x in xs {
                    if needs(x) {
                        acc(x, g.clone());
                    }
                }
            }
            Op::Relu(x) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                });
                acc(*x, d);
            }
            Op::Concat(xs) => {
                let mut off = 0;
                for &x in xs {
                    let w = self.shape(x)[1];
                    if needs(x) {
                        acc(x, g.slice(s![.., off..off + w]).to_owned());
                    }
                    off += w;
                }
            }
            Op::Gather { x, idx } => {
                let mut d = Array2::zeros(self.value(*x).raw_dim());
                for (r, &i) in idx.iter().enumerate() {
                    d.row_mut(i).scaled_add(1.0, &g.row(r));
                }
                acc(*x, d);
            }
            Op::SegmentMax { x, argmax } => {
                let mut d = Array2::zeros(self.value(*x).raw_dim());
                for ((grp, k), &r) in argmax.indexed_iter() {
                    d[[r, k]] += g[[grp, k]];
                }
                acc(*x, d);
            }
            Op::SegmentMean { x, seg, counts } => {
                let mut d = Array2::zeros(self.value(*x).raw_dim());
                for (r, &grp) in seg.iter().enumerate() {
                    d.row_mut(r)
                        .scaled_add(1.0 / counts[grp] as f64, &g.row(grp));
                }
                acc(*x, d);
            }
            Op::Sparse { x, map } => {
                acc(*x, map.backward(g.view()).expect("shape fixed at forward"));
            }
            Op::EdgeBilinear { h, m } => {
                let (hv, mv) = (self.value(*h), self.value(*m));
                let d = hv.ncols();
                if needs(*h) {
                    let mut dh = Array2::zeros(hv.raw_dim());
                    for r in 0..hv.nrows() {
                        let mat = mv.row(r).into_shape_with_order((d, d)).expect("contiguous");
                        dh.row_mut(r).assign(&mat.dot(&g.row(r)));
                    }
                    acc(*h, dh);
                }
                if needs(*m) {
                    let mut dm = Array2::zeros(mv.raw_dim());
                    for r in 0..hv.nrows() {
                        let mut out = dm
                            .row_mut(r)
                            .into_shape_with_order((d, d))
                            .expect("contiguous");
                        for a in 0..d {
                            out.row_mut(a).scaled_add(hv[[r, a]], &g.row(r));
                        }
                    }
                    acc(*m, dm);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            } => {
                let gam = self.value(*gamma);
                if needs(*gamma) {
                    acc(*gamma, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if needs(*beta) {
                    acc(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if needs(*x) {
                    let dxhat = g * gam;
                    let d = match mode {
                        BnMode::Eval => dxhat * &inv_std.view().insert_axis(Axis(0)),
                        BnMode::Train => {
                            let n = g.nrows() as f64;
                            let s1 = dxhat.sum_axis(Axis(0));
                            let s2 = (&dxhat * xhat).sum_axis(Axis(0));
                            let inner = dxhat * n
                                - &s1.insert_axis(Axis(0))
                                - xhat * &s2.insert_axis(Axis(0));
                            inner * &(inv_std / n).insert_axis(Axis(0))
                        }
                    };
                    acc(*x, d);
                }
            }
            Op::SoftmaxCe {
                probs,
                targets,
                logits,
            } => {
                let n = targets.len() as f64;
                let mut d = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    d[[r, t]] -= 1.0;
                }
                d *= g[[0, 0]] / n;
                acc(*logits, d);
            }
            Op::Dot { x, w } => {
                acc(*x, w * g[[0, 0]]);
            }
        }
    }
}

#[cfg(test)]
mod tests;
