use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rendnet::harness::{
    evaluate, evaluate_logits, load_checkpoint, predict_all, save_checkpoint, synth_generate,
    train_prepared, DatasetManifest, HarnessError, Prepared, SynthSpec, TrainConfig,
};
use rendnet::hypergraph::build_hypergraph;
use rendnet::lsr::build_raster_plan;
use rendnet::net::{init_params, ModelConfig, Sample};
use tempfile::TempDir;

struct Shared {
    _dir: TempDir,
    root: PathBuf,
    manifest: DatasetManifest,
    prepared: Prepared,
}

/// The default 1600/400 dataset with 3D splits, and the 2D samples.
fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        let manifest = synth_generate(
            &SynthSpec {
                dim3: true,
                ..Default::default()
            },
            &root,
        )
        .unwrap();
        let prepared = Prepared::load(&TrainConfig {
            data: root.clone(),
            ..Default::default()
        })
        .unwrap();
        Shared {
            _dir: dir,
            root,
            manifest,
            prepared,
        }
    })
}

fn files(root: &Path, m: &DatasetManifest) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = m
        .splits
        .values()
        .flatten()
        .map(|rel| (rel.clone(), fs::read(root.join(rel)).unwrap()))
        .collect();
    out.push((
        "manifest.json".into(),
        fs::read(root.join("manifest.json")).unwrap(),
    ));
    out
}

#[test]
fn regeneration_is_byte_identical() {
    let s = shared();
    let dir = tempfile::tempdir().unwrap();
    let again = synth_generate(
        &SynthSpec {
            dim3: true,
            ..Default::default()
        },
        dir.path(),
    )
    .unwrap();
    assert_eq!(files(&s.root, &s.manifest), files(dir.path(), &again));
}

#[test]
fn classes_are_balanced() {
    let m = &shared().manifest;
    for (split, per_class) in [
        ("train", 200),
        ("test", 50),
        ("train3d", 200),
        ("test3d", 50),
    ] {
        let docs = m.load_split(split).unwrap();
        for k in 0..m.classes.len() {
            assert_eq!(
                docs.iter().filter(|d| d.label == Some(k)).count(),
                per_class,
                "{split} {}",
                m.classes[k]
            );
        }
    }
}

#[test]
fn every_document_builds_both_streams() {
    let m = &shared().manifest;
    let cfg = ModelConfig::default();
    for split in m.splits.keys() {
        for doc in m.load_split(split).unwrap() {
            let g = build_hypergraph(&doc, &cfg.hypergraph).unwrap();
            assert!(!g.surfaces.is_empty() && g.nodes.len() >= 6, "{split}");
            build_raster_plan(&g, &cfg.raster).unwrap();
        }
    }
}

#[test]
fn mislabelled_document_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        train: 16,
        test: 8,
        ..Default::default()
    };
    let m = synth_generate(&spec, dir.path()).unwrap();
    let rel = &m.splits["test"][0];
    let path = dir.path().join(rel);
    let text = fs::read_to_string(&path).unwrap();
    let wrong = text.replacen("\"label\":0,", "\"label\":3,", 1);
    assert_ne!(wrong, text);
    fs::write(&path, wrong).unwrap();
    let m = DatasetManifest::load(dir.path()).unwrap();
    assert!(matches!(
        m.load_split("test"),
        Err(HarnessError::Label { label: Some(3), .. })
    ));
    assert!(matches!(m.load_split("val"), Err(HarnessError::Config(_))));
}

#[test]
fn fresh_models_are_near_chance() {
    let p = &shared().prepared;
    let cfg = p.model_config(&ModelConfig::default());
    let labels: Vec<usize> = p.test.iter().map(|s| s.label.unwrap()).collect();
    for seed in 1..=5 {
        let store = init_params(&cfg, seed).unwrap();
        let m = evaluate_logits(
            &predict_all(&store, &cfg, &p.test).unwrap(),
            &labels,
            cfg.classes,
        );
        assert!(
            (0.02..=0.30).contains(&m.accuracy),
            "seed {seed}: {}",
            m.accuracy
        );
        for (k, row) in m.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 50, "class {k}");
        }
    }
}

#[test]
fn first_epoch_loss_starts_near_uniform() {
    let s = shared();
    let cfg = TrainConfig {
        data: s.root.clone(),
        epochs: 1,
        ..Default::default()
    };
    let out = train_prepared(&cfg, &s.prepared, |_| {}).unwrap();
    let loss = out.log[0].loss;
    assert!(loss <= 8f64.ln() + 0.1, "{loss}");
}

fn subset(p: &Prepared, train: usize, test: usize) -> Prepared {
    // Stride through the class-ordered splits so every class appears.
    let pick = |v: &[Sample], n: usize| v.iter().step_by(v.len() / n).take(n).cloned().collect();
    Prepared {
        classes: p.classes.clone(),
        dim: p.dim,
        train: pick(&p.train, train),
        test: pick(&p.test, test),
    }
}

fn small_config(epochs: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            hidden: 16,
            ..Default::default()
        },
        epochs,
        batch,
        data: shared().root.clone(),
        ..Default::default()
    }
}

#[test]
fn identical_runs_write_identical_csv() {
    let p = subset(&shared().prepared, 48, 16);
    let cfg = small_config(3, 16);
    let a = train_prepared(&cfg, &p, |_| {}).unwrap();
    let b = train_prepared(&cfg, &p, |_| {}).unwrap();
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.best.to_bytes(), b.best.to_bytes());
    let c = train_prepared(&TrainConfig { seed: 2, ..cfg }, &p, |_| {}).unwrap();
    assert_ne!(a.csv(), c.csv());
}

#[test]
fn sixteen_samples_overfit() {
    let p = subset(&shared().prepared, 16, 8);
    let cfg = TrainConfig {
        epochs: 200,
        batch: 16,
        data: shared().root.clone(),
        ..Default::default()
    };
    let out = train_prepared(&cfg, &p, |_| {}).unwrap();
    let last = out.log.last().unwrap();
    assert!(last.loss < 0.01, "final loss {}", last.loss);
    assert_eq!(last.train_acc, 1.0);
}

#[test]
fn saved_checkpoint_evaluates_like_the_trained_one() {
    let s = shared();
    let p = subset(&s.prepared, 32, 400);
    let out = train_prepared(&small_config(1, 16), &p, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rnd");
    save_checkpoint(&out.best, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, out.best);
    let m = evaluate(&loaded, &s.manifest, "test").unwrap();
    assert_eq!(m.accuracy, out.best_test_acc);

    let mut other = s.manifest.clone();
    other.classes.pop();
    assert!(matches!(
        evaluate(&loaded, &other, "test"),
        Err(HarnessError::ClassMismatch {
            checkpoint: 8,
            dataset: 7
        })
    ));
}
