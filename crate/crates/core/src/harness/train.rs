use std::path::PathBuf;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, DatasetManifest, HarnessError};
use crate::gradkit::AdamConfig;
use crate::net::{
    argmax_rows, batch_of, init_params, predict, train_step, Mode, ModelConfig, Sample,
};
use crate::vgdoc::VgDocument;

/// Documents per forward pass when only predictions are needed.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub data: PathBuf,
    pub train_split: String,
    pub test_split: String,
    /// Stop as soon as test accuracy reaches this value.
    pub stop_at: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 60,
            batch: 32,
            lr: 1e-3,
            seed: 1,
            data: PathBuf::new(),
            train_split: "train".into(),
            test_split: "test".into(),
            stop_at: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs < 1 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if self.batch < 2 {
            return Err(HarnessError::Config(
                "batch size must be at least 2 for batch normalization".into(),
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(HarnessError::Config(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,loss,train_acc,test_acc";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6}",
            self.epoch, self.loss, self.train_acc, self.test_acc
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Parameters at the epoch with the best test accuracy (earliest on ties).
    pub best: Checkpoint,
    pub best_test_acc: f64,
}

impl TrainOutcome {
    pub fn csv(&self) -> String {
        let mut s = format!("{}\n", EpochLog::CSV_HEADER);
        for e in &self.log {
            s.push_str(&e.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Samples of both splits, built once and shared by every variant.
pub struct Prepared {
    pub classes: Vec<String>,
    pub dim: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn build_samples(
    docs: &[VgDocument<f64>],
    cfg: &ModelConfig,
) -> Result<Vec<Sample>, HarnessError> {
    docs.iter()
        .map(|d| Ok(Sample::from_document(d, cfg)?))
        .collect()
}

impl Prepared {
    pub fn load(cfg: &TrainConfig) -> Result<Self, HarnessError> {
        let manifest = DatasetManifest::load(&cfg.data)?;
        let train = manifest.load_split(&cfg.train_split)?;
        let test = manifest.load_split(&cfg.test_split)?;
        let dim = train.first().map_or(cfg.model.dim, |d| d.dim);
        let model = ModelConfig {
            dim,
            ..cfg.model.clone()
        };
        Ok(Self {
            classes: manifest.classes.clone(),
            dim,
            train: build_samples(&train, &model)?,
            test: build_samples(&test, &model)?,
        })
    }

    /// `base` with dimension and class count taken from the data.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            classes: self.classes.len(),
            ..base.clone()
        }
    }
}

/// Eval-mode logits for every sample, in order.
pub fn predict_all(
    store: &crate::gradkit::ParamStore,
    cfg: &ModelConfig,
    samples: &[Sample],
) -> Result<Array2<f64>, HarnessError> {
    let mut out = Array2::zeros((samples.len(), cfg.classes));
    let idx: Vec<usize> = (0..samples.len()).collect();
    for (c, chunk) in idx.chunks(EVAL_CHUNK).enumerate() {
        let logits = predict(store, cfg, &batch_of(samples, chunk))?;
        out.slice_mut(ndarray::s![
            c * EVAL_CHUNK..c * EVAL_CHUNK + chunk.len(),
            ..
        ])
        .assign(&logits);
    }
    Ok(out)
}

fn labels_of(samples: &[Sample]) -> Result<Vec<usize>, HarnessError> {
    samples
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| HarnessError::Config("document without label".into()))
        })
        .collect()
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let data = Prepared::load(cfg)?;
    train_prepared(cfg, &data, |_| {})
}

pub fn train_prepared(
    cfg: &TrainConfig,
    data: &Prepared,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let model = ModelConfig {
        seed: cfg.seed,
        ..data.model_config(&cfg.model)
    };
    let train_labels = labels_of(&data.train)?;
    let test_labels = labels_of(&data.test)?;
    if let Some(&l) = train_labels
        .iter()
        .chain(&test_labels)
        .find(|&&l| l >= model.classes)
    {
        return Err(HarnessError::ClassMismatch {
            checkpoint: model.classes,
            dataset: l + 1,
        });
    }
    let mut store = init_params(&model, cfg.seed)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(1);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (b, idx) in order.chunks(cfg.batch).enumerate() {
            if idx.len() < 2 {
                log::warn!("epoch {epoch}: skipping trailing batch of one sample");
                continue;
            }
            let stats = train_step(&mut store, &model, &batch_of(&data.train, idx), &adam)
                .map_err(|e| {
                    HarnessError::Config(format!(
                        "training aborted at epoch {epoch}, batch {b}: {e}"
                    ))
                })?;
            loss_sum += stats.loss * idx.len() as f64;
            correct += stats.correct;
            seen += idx.len();
        }
        let logits = predict_all(&store, &model, &data.test)?;
        let test_acc = evaluate_logits(&logits, &test_labels, model.classes).accuracy;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / seen.max(1) as f64,
            train_acc: correct as f64 / seen.max(1) as f64,
            test_acc,
        };
        log::info!(
            "{} epoch {}: loss {:.4} train {:.4} test {:.4}",
            model.mode,
            epoch,
            entry.loss,
            entry.train_acc,
            test_acc
        );
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(acc, _)| test_acc > *acc) {
            best = Some((
                test_acc,
                Checkpoint::new(model.clone(), &store, epoch, cfg.seed),
            ));
        }
        if cfg.stop_at.is_some_and(|t| test_acc >= t) {
            break;
        }
    }
    let (best_test_acc, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        log,
        best,
        best_test_acc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    /// Precision and recall are 0 for classes never predicted or absent.
    pub fn from_predictions(
        classes: usize,
        truth: &[usize],
        pred: &[usize],
        mean_loss: f64,
    ) -> Self {
        let mut confusion = vec![vec![0; classes]; classes];
        for (&t, &p) in truth.iter().zip(pred) {
            confusion[t][p] += 1;
        }
        let diag: usize = (0..classes).map(|k| confusion[k][k]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = (0..classes)
            .map(|k| ratio(confusion[k][k], (0..classes).map(|t| confusion[t][k]).sum()))
            .collect();
        let recall = (0..classes)
            .map(|k| ratio(confusion[k][k], confusion[k].iter().sum()))
            .collect();
        Self {
            accuracy: ratio(diag, truth.len()),
            mean_loss,
            precision,
            recall,
            confusion,
        }
    }

    pub fn error_pct(&self) -> f64 {
        100.0 * (1.0 - self.accuracy)
    }

    /// Accuracy restricted to documents of classes `a` and `b`, counting a
    /// prediction as correct when it names the true class.
    pub fn pair_accuracy(&self, a: usize, b: usize) -> f64 {
        let right = self.confusion[a][a] + self.confusion[b][b];
        let total: usize =
            self.confusion[a].iter().sum::<usize>() + self.confusion[b].iter().sum::<usize>();
        right as f64 / total.max(1) as f64
    }
}

/// Metrics of raw logits, with mean cross-entropy as the loss.
pub fn evaluate_logits(logits: &Array2<f64>, labels: &[usize], classes: usize) -> Metrics {
    let pred = argmax_rows(logits);
    let mut loss = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.mapv(|v| (v - m).exp()).sum().ln();
        loss += lse - row[t];
    }
    Metrics::from_predictions(classes, labels, &pred, loss / labels.len().max(1) as f64)
}

/// Eval-mode metrics of a checkpoint on one split of a dataset.
pub fn evaluate(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    split: &str,
) -> Result<Metrics, HarnessError> {
    if ckpt.config.classes != manifest.classes.len() {
        return Err(HarnessError::ClassMismatch {
            checkpoint: ckpt.config.classes,
            dataset: manifest.classes.len(),
        });
    }
    let docs = manifest.load_split(split)?;
    let samples = build_samples(&docs, &ckpt.config)?;
    let labels = labels_of(&samples)?;
    let logits = predict_all(&ckpt.params, &ckpt.config, &samples)?;
    Ok(evaluate_logits(&logits, &labels, ckpt.config.classes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub test_error_pct: f64,
    pub best_epoch: usize,
    pub metrics: Metrics,
    pub log: Vec<EpochLog>,
}

/// Trains every requested variant with identical data and seed. Rows
/// follow [`Mode::ALL`] order; errors come from each variant's best
/// checkpoint.
pub fn ablate(base: &TrainConfig, modes: &[Mode]) -> Result<Vec<AblationRow>, HarnessError> {
    base.validate()?;
    let data = Prepared::load(base)?;
    ablate_prepared(base, &data, modes)
}

pub fn ablate_prepared(
    base: &TrainConfig,
    data: &Prepared,
    modes: &[Mode],
) -> Result<Vec<AblationRow>, HarnessError> {
    let labels = labels_of(&data.test)?;
    let mut rows = Vec::new();
    for mode in Mode::ALL.into_iter().filter(|m| modes.contains(m)) {
        let cfg = TrainConfig {
            model: ModelConfig {
                mode,
                ..base.model.clone()
            },
            ..base.clone()
        };
        let out = train_prepared(&cfg, data, |_| {})?;
        let logits = predict_all(&out.best.params, &out.best.config, &data.test)?;
        let metrics = evaluate_logits(&logits, &labels, out.best.config.classes);
        rows.push(AblationRow {
            mode,
            test_error_pct: metrics.error_pct(),
            best_epoch: out.best.meta.epoch,
            metrics,
            log: out.log,
        });
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("mode,test_error_pct\n");
    for r in rows {
        s.push_str(&format!("{},{:.2}\n", r.mode, r.test_error_pct));
    }
    s
}
