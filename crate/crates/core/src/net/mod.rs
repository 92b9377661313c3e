//! The two-stream network: input embedding, residual blocks mixing curve
//! messages, hyperedge messages and rasterized point-cloud messages, a
//! global point-cloud readout, and a linear classifier.

pub mod batch;
pub mod model;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gradkit::{GradError, ParamStore};
use crate::hypergraph::{HEdge, HypergraphConfig};
use crate::lsr::{LsrError, RasterConfig};
use crate::vgdoc::{SurfaceKind, VgError};

pub use batch::{Batch, Sample};
pub use model::{
    argmax_rows, batch_of, classify, forward, predict, train_step, BlockTrace, Forward, StepStats,
    Streams,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Document(#[from] VgError),
    #[error(transparent)]
    Raster(#[from] LsrError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("document dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Model variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    VectorOnly,
    RasterOnly,
    NoEdgeFeatures,
    NoFinalBlock,
    Ensemble,
}

impl Mode {
    /// Table order used by ablation reports.
    pub const ALL: [Mode; 6] = [
        Mode::Full,
        Mode::VectorOnly,
        Mode::RasterOnly,
        Mode::NoEdgeFeatures,
        Mode::NoFinalBlock,
        Mode::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::VectorOnly => "vector-only",
            Mode::RasterOnly => "raster-only",
            Mode::NoEdgeFeatures => "no-edge-features",
            Mode::NoFinalBlock => "no-final-block",
            Mode::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Document dimension, 2 or 3.
    pub dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    /// Layers per MLP.
    pub mlp_layers: usize,
    pub classes: usize,
    pub mode: Mode,
    pub seed: u64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub hypergraph: HypergraphConfig,
    pub raster: RasterConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            hidden: 32,
            blocks: 3,
            mlp_layers: 2,
            classes: 8,
            mode: Mode::Full,
            seed: 0,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            hypergraph: HypergraphConfig::default(),
            raster: RasterConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if !(2..=3).contains(&self.dim) {
            return bad("dim must be 2 or 3");
        }
        if self.hidden < 4 {
            return bad("hidden width must be at least 4");
        }
        if self.blocks < 1 {
            return bad("at least one block is required");
        }
        if self.classes < 2 {
            return bad("at least two classes are required");
        }
        if self.mlp_layers < 1 {
            return bad("MLPs need at least one layer");
        }
        if self.raster.knn < 1 {
            return bad("knn must be at least 1");
        }
        Ok(())
    }

    pub fn edge_features(&self) -> usize {
        HEdge::<f64>::feature_len(self.dim)
    }

    /// Per-pair hyperedge input: surface type one-hot and chart coordinates.
    pub fn surface_features(&self) -> usize {
        SurfaceKind::COUNT + 2
    }

    /// `(fan_in, fan_out)` of each layer of an MLP.
    fn mlp_shape(&self, input: usize, output: usize) -> Vec<(usize, usize)> {
        (0..self.mlp_layers)
            .map(|l| {
                let a = if l == 0 { input } else { self.hidden };
                let b = if l + 1 == self.mlp_layers {
                    output
                } else {
                    self.hidden
                };
                (a, b)
            })
            .collect()
    }

    /// Named MLPs and their layer shapes.
    pub fn mlps(&self) -> Vec<(String, Vec<(usize, usize)>)> {
        let (d, h) = (self.dim, self.hidden);
        let mut out = Vec::new();
        for l in 0..self.blocks {
            out.push((
                format!("block{l}.f1"),
                self.mlp_shape(self.edge_features(), h * h),
            ));
            out.push((
                format!("block{l}.f2"),
                self.mlp_shape(h + self.surface_features(), h),
            ));
            out.push((format!("block{l}.g"), self.mlp_shape(h + d, h)));
        }
        out.push(("final.g".to_string(), self.mlp_shape(h + d, h)));
        out.push(("ensemble.pointnet".to_string(), self.mlp_shape(d, h)));
        out.push((
            "ensemble.head".to_string(),
            vec![(2 * h, h), (h, self.classes)],
        ));
        out
    }
}

fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// `uniform(±sqrt(6 / (fan_in + fan_out)))`.
pub fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound))
}

/// Fresh parameters. Each tensor draws from its own stream keyed by
/// `(seed, name)`, so the set of variants does not shift any draws.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore, NetError> {
    cfg.validate()?;
    let (d, h) = (cfg.dim, cfg.hidden);
    let mut store = ParamStore::new();
    let weight = |store: &mut ParamStore, name: String, a: usize, b: usize| {
        let w = glorot(&mut param_rng(seed, &name), a, b);
        store.insert(name, w);
    };
    weight(&mut store, "embed.w".into(), d, h);
    store.insert("embed.b", Array2::zeros((1, h)));
    for (name, layers) in cfg.mlps() {
        for (k, &(a, b)) in layers.iter().enumerate() {
            weight(&mut store, format!("{name}.w{k}"), a, b);
            store.insert(format!("{name}.b{k}"), Array2::zeros((1, b)));
        }
    }
    for l in 0..cfg.blocks {
        // Coefficient matrix at zero edge features: I / h plus small noise.
        let name = format!("block{l}.f1.b{}", cfg.mlp_layers - 1);
        let mut rng = param_rng(seed, &name);
        let scale = 1.0 / h as f64;
        let b = Array2::from_shape_fn((1, h * h), |(_, k)| {
            let diag = if k / h == k % h { scale } else { 0.0 };
            diag + rng.gen_range(-0.01..0.01) * scale
        });
        store.insert(name, b);
        weight(&mut store, format!("block{l}.conv.w"), h, h);
        store.insert(format!("block{l}.bn.gamma"), Array2::ones((1, h)));
        store.insert(format!("block{l}.bn.beta"), Array2::zeros((1, h)));
        store.insert_buffer(format!("block{l}.bn.mean"), Array2::zeros((1, h)));
        store.insert_buffer(format!("block{l}.bn.var"), Array2::ones((1, h)));
    }
    weight(&mut store, "head.w".into(), h, cfg.classes);
    store.insert("head.b", Array2::zeros((1, cfg.classes)));
    Ok(store)
}
