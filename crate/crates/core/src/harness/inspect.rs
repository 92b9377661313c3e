use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::Array2;

use super::{io_err, Checkpoint, HarnessError};
use crate::gradkit::BnMode;
use crate::hypergraph::build_hypergraph;
use crate::lsr::build_raster_plan;
use crate::net::{forward, Batch, ModelConfig, NetError, Sample, Streams};
use crate::vgdoc::VgDocument;

#[derive(Clone, Debug, PartialEq)]
pub struct InspectOutputs {
    pub dump: PathBuf,
    pub fragments: PathBuf,
    /// PCA-colored final-block embeddings, written when a checkpoint is given.
    pub features: Option<PathBuf>,
}

/// ASCII PLY of fragment positions (2D padded with z = 0), optionally
/// with per-vertex colors.
pub fn fragment_ply(positions: &Array2<f64>, colors: Option<&[[u8; 3]]>) -> String {
    let n = positions.nrows();
    let mut s = format!("ply\nformat ascii 1.0\nelement vertex {n}\nproperty double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, row) in positions.rows().into_iter().enumerate() {
        let z = if row.len() > 2 { row[2] } else { 0.0 };
        let _ = write!(s, "{} {} {}", row[0], row[1], z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    s
}

/// Projects rows onto their top three principal directions and min-max
/// scales each to `0..=255`. Also returns all singular values of the
/// centered data, descending.
pub fn pca_colors(features: &Array2<f64>) -> (Vec<[u8; 3]>, Vec<f64>) {
    let (n, k) = features.dim();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mean = features.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centered = DMatrix::from_fn(n, k, |r, c| features[[r, c]] - mean[c]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let mut proj = vec![[0.0f64; 3]; n];
    for (ch, &comp) in order.iter().take(3).enumerate() {
        let dir = v_t.row(comp);
        for (r, p) in proj.iter_mut().enumerate() {
            p[ch] = centered.row(r).dot(&dir);
        }
    }
    let mut colors = vec![[0u8; 3]; n];
    for ch in 0..3 {
        let lo = proj.iter().map(|p| p[ch]).fold(f64::INFINITY, f64::min);
        let hi = proj.iter().map(|p| p[ch]).fold(f64::NEG_INFINITY, f64::max);
        for (c, p) in colors.iter_mut().zip(&proj) {
            let t = if hi > lo {
                (p[ch] - lo) / (hi - lo)
            } else {
                0.0
            };
            c[ch] = (t * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    (colors, sv)
}

/// Per-fragment embeddings feeding the global readout, with fragment
/// positions. Variants without the final block use the interpolated last
/// block embeddings instead.
pub fn fragment_embeddings(
    doc: &VgDocument<f64>,
    ckpt: &Checkpoint,
) -> Result<(Array2<f64>, Array2<f64>), NetError> {
    let cfg = &ckpt.config;
    if doc.dim != cfg.dim {
        return Err(NetError::Dimension {
            expected: cfg.dim,
            got: doc.dim,
        });
    }
    let graph = build_hypergraph(doc, &cfg.hypergraph)?;
    let plan = build_raster_plan(&graph, &cfg.raster)?;
    let sample = Sample::from_parts(&graph, &plan, doc.label);
    let fwd = forward(
        &ckpt.params,
        cfg,
        &Batch::collate(&[&sample]),
        BnMode::Eval,
        Streams::for_mode(cfg.mode),
    )?;
    let feats = match fwd.fragment_features {
        Some(v) => fwd.tape.value(v).clone(),
        None => {
            let last = fwd.blocks.last().expect("at least one block").output;
            plan.interpolate_forward(fwd.tape.value(last).view())?
        }
    };
    Ok((plan.positions(), feats))
}

/// Writes `<prefix>.hypergraph.txt`, `<prefix>.fragments.ply` and, with a
/// checkpoint, `<prefix>.features.ply`.
pub fn inspect(
    doc: &VgDocument<f64>,
    ckpt: Option<&Checkpoint>,
    prefix: &Path,
) -> Result<InspectOutputs, HarnessError> {
    let cfg = match ckpt {
        Some(c) => c.config.clone(),
        None => ModelConfig {
            dim: doc.dim,
            ..Default::default()
        },
    };
    let graph = build_hypergraph(doc, &cfg.hypergraph).map_err(NetError::from)?;
    let plan = build_raster_plan(&graph, &cfg.raster).map_err(NetError::from)?;
    let with_suffix = |s: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(s);
        PathBuf::from(p)
    };
    let dump = with_suffix(".hypergraph.txt");
    fs::write(&dump, graph.dump()).map_err(io_err(&dump))?;
    let fragments = with_suffix(".fragments.ply");
    fs::write(&fragments, fragment_ply(&plan.positions(), None)).map_err(io_err(&fragments))?;
    let features = match ckpt {
        Some(c) => {
            let (pos, feats) = fragment_embeddings(doc, c)?;
            let (colors, _) = pca_colors(&feats);
            let path = with_suffix(".features.ply");
            fs::write(&path, fragment_ply(&pos, Some(&colors))).map_err(io_err(&path))?;
            Some(path)
        }
        None => None,
    };
    Ok(InspectOutputs {
        dump,
        fragments,
        features,
    })
}
