use std::sync::Arc;

use indexmap::IndexMap;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lsr::{Fragment, InterpMap, Source};
use crate::scalar::Vec3;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Array2::from_shape_fn((r, c), |_| rng.gen::<f64>() * 2.0 - 1.0)
}

/// Random values at least `gap` away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize, gap: f64) -> Tensor {
    Array2::from_shape_fn((r, c), |_| {
        let v = rng.gen::<f64>() * 2.0 - 1.0;
        if v.abs() < gap {
            v.signum() * gap * 2.0 + v
        } else {
            v
        }
    })
}

fn reduce(t: &mut Tape, v: Var, w: &Tensor) -> Result<Var, GradError> {
    t.dot(v, w.clone())
}

#[test]
fn relu_values_and_gradient() {
    let mut t = Tape::new();
    let x = t.param(array![[-1.0, 2.0]]);
    let y = t.relu(x);
    assert_eq!(t.value(y), &array![[0.0, 2.0]]);
    let l = t.dot(y, array![[1.0, 1.0]]).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap(), &array![[0.0, 1.0]]);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = away_from_zero(&mut rng, 4, 3, 1e-3);
    let w = rand_mat(&mut rng, 4, 3);
    let err = grad_check(
        |t, v| {
            let y = t.relu(v[0]);
            reduce(t, y, &w)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn segment_max_values_and_ties() {
    let mut t = Tape::new();
    let x = t.param(array![[1.0, 5.0], [3.0, 2.0], [3.0, 0.0]]);
    let y = t.segment_max(x, &[0, 0, 0], 1).unwrap();
    assert_eq!(t.value(y), &array![[3.0, 5.0]]);
    let l = t.dot(y, array![[1.0, 1.0]]).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(
        g.get(x).unwrap(),
        &array![[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]
    );

    let mut t = Tape::new();
    let x = t.param(array![[3.0, 2.0], [1.0, 5.0], [3.0, 0.0]]);
    let y = t.segment_max(x, &[0, 0, 0], 1).unwrap();
    assert_eq!(t.value(y), &array![[3.0, 5.0]]);
    assert_eq!(
        t.segment_max(x, &[0, 0, 2], 3),
        Err(GradError::EmptySegment(1))
    );
}

#[test]
fn segment_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_mat(&mut rng, 7, 3);
    let seg = vec![0, 2, 2, 0, 1, 2, 0];
    let w = rand_mat(&mut rng, 3, 3);
    let err = grad_check(
        |t, v| {
            let y = t.segment_max(v[0], &seg, 3)?;
            reduce(t, y, &w)
        },
        &[x.clone()],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-7, "{err}");
    let w4 = rand_mat(&mut rng, 4, 3);
    let seg = Arc::new(seg);
    let err = grad_check(
        |t, v| {
            let y = t.segment_mean(v[0], seg.clone(), 4)?;
            reduce(t, y, &w4)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-8, "{err}");

    let mut t = Tape::new();
    let x = t.param(array![[2.0], [4.0]]);
    let y = t.segment_mean(x, Arc::new(vec![1, 1]), 2).unwrap();
    assert_eq!(t.value(y), &array![[0.0], [3.0]]);
}

#[test]
fn dense_primitive_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, w, b) = (
        rand_mat(&mut rng, 5, 4),
        rand_mat(&mut rng, 4, 3),
        rand_mat(&mut rng, 1, 3),
    );
    let out = rand_mat(&mut rng, 5, 3);
    let err = grad_check(
        |t, v| {
            let y = t.linear(v[0], v[1], Some(v[2]))?;
            reduce(t, y, &out)
        },
        &[x.clone(), w, b],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-8, "{err}");

    let y2 = rand_mat(&mut rng, 5, 2);
    let out = rand_mat(&mut rng, 5, 6);
    let err = grad_check(
        |t, v| {
            let y = t.concat(&[v[0], v[1]])?;
            reduce(t, y, &out)
        },
        &[x.clone(), y2],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-8, "{err}");

    let idx = Arc::new(vec![4, 0, 0, 2]);
    let out = rand_mat(&mut rng, 4, 4);
    let err = grad_check(
        |t, v| {
            let y = t.gather(v[0], idx.clone())?;
            reduce(t, y, &out)
        },
        &[x.clone()],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-8, "{err}");

    let (h, m) = (rand_mat(&mut rng, 6, 3), rand_mat(&mut rng, 6, 9));
    let out = rand_mat(&mut rng, 6, 3);
    let err = grad_check(
        |t, v| {
            let y = t.edge_bilinear(v[0], v[1])?;
            reduce(t, y, &out)
        },
        &[h, m],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn edge_bilinear_identity() {
    let mut t = Tape::new();
    let h = t.constant(array![[1.0, 2.0]]);
    let m = t.constant(array![[1.0, 0.0, 0.0, 1.0]]);
    let y = t.edge_bilinear(h, m).unwrap();
    assert_eq!(t.value(y), &array![[1.0, 2.0]]);
}

#[test]
fn sparse_gradient() {
    let frags = vec![
        Fragment::triangle(Vec3::zero(), Source::Surface(0), [0, 1, 2], [0.2, 0.3, 0.5]),
        Fragment::segment(Vec3::zero(), Source::Edge(0), [1, 2], [0.6, 0.4]),
        Fragment::segment(Vec3::zero(), Source::Edge(1), [0, 2], [1.0, 0.0]),
    ];
    let map = Arc::new(InterpMap::from_fragments(&frags, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = rand_mat(&mut rng, 3, 2);
    let err = grad_check(
        |t, v| {
            let y = t.sparse(v[0], map.clone())?;
            reduce(t, y, &out)
        },
        &[rand_mat(&mut rng, 3, 2)],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-9, "{err}");
}

#[test]
fn batch_norm_train_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = rand_mat(&mut rng, 10, 3);
    x.column_mut(2).fill(0.7);
    let mut t = Tape::new();
    let xv = t.constant(x);
    let g = t.constant(Array2::ones((1, 3)));
    let b = t.constant(Array2::zeros((1, 3)));
    let zeros = Array1::zeros(3);
    let ones = Array1::ones(3);
    let (y, stats) = t
        .batch_norm(xv, g, b, BnMode::Train, (&zeros, &ones), 1e-5)
        .unwrap();
    let y = t.value(y);
    for k in 0..3 {
        let col = y.column(k);
        assert!(col.mean().unwrap().abs() <= 1e-6);
        if k < 2 {
            assert!((col.var(0.0) - 1.0).abs() <= 1e-4);
        } else {
            assert!(col.iter().all(|v| v.abs() <= 1e-6));
        }
    }
    assert!(stats.unwrap().var[2].abs() < 1e-20);
    let one = t.constant(array![[1.0, 1.0, 1.0]]);
    assert_eq!(
        t.batch_norm(one, g, b, BnMode::Train, (&zeros, &ones), 1e-5)
            .unwrap_err(),
        GradError::BatchTooSmall(1)
    );
}

#[test]
fn batch_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_mat(&mut rng, 8, 3);
    let (gam, bet) = (rand_mat(&mut rng, 1, 3), rand_mat(&mut rng, 1, 3));
    let out = rand_mat(&mut rng, 8, 3);
    let rm = Array1::from(vec![0.1, -0.2, 0.3]);
    let rv = Array1::from(vec![0.5, 1.5, 2.0]);
    for mode in [BnMode::Train, BnMode::Eval] {
        let err = grad_check(
            |t, v| {
                let (y, _) = t.batch_norm(v[0], v[1], v[2], mode, (&rm, &rv), 1e-5)?;
                reduce(t, y, &out)
            },
            &[x.clone(), gam.clone(), bet.clone()],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "{mode:?} {err}");
    }
}

#[test]
fn cross_entropy() {
    let mut t = Tape::new();
    let l = t.param(Array2::zeros((1, 4)));
    let loss = t.softmax_cross_entropy(l, &[2]).unwrap();
    assert!((t.value(loss)[[0, 0]] - 4f64.ln()).abs() < 1e-15);
    let s = t.constant(array![[0.0, 1000.0, 0.0]]);
    let loss = t.softmax_cross_entropy(s, &[1]).unwrap();
    assert!(t.value(loss)[[0, 0]] < 1e-9);
    assert!(matches!(
        t.softmax_cross_entropy(s, &[3]),
        Err(GradError::TargetOutOfRange { .. })
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let logits = rand_mat(&mut rng, 5, 4);
    let targets = [0, 3, 1, 1, 2];
    let err = grad_check(
        |t, v| t.softmax_cross_entropy(v[0], &targets),
        &[logits.clone()],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-10, "{err}");
    // Against the closed form.
    let mut t = Tape::new();
    let lv = t.param(logits.clone());
    let loss = t.softmax_cross_entropy(lv, &targets).unwrap();
    let g = t.backward(loss).unwrap();
    for r in 0..5 {
        let z: f64 = logits.row(r).iter().map(|v| v.exp()).sum();
        for c in 0..4 {
            let want = (logits[[r, c]].exp() / z - if targets[r] == c { 1.0 } else { 0.0 }) / 5.0;
            assert!((g.get(lv).unwrap()[[r, c]] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn backward_basics() {
    let mut t = Tape::new();
    let x = t.param(array![[3.0]]);
    let two = t.constant(array![[2.0]]);
    let y = t.linear(x, two, None).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap(), &array![[2.0]]);

    let mut t = Tape::new();
    let x = t.param(array![[3.0]]);
    let z = t.add(&[x, x]).unwrap();
    let g = t.backward(z).unwrap();
    assert_eq!(g.get(x).unwrap(), &array![[2.0]]);

    let v = t.param(array![[1.0, 2.0]]);
    assert_eq!(
        t.backward(v).unwrap_err(),
        GradError::NonScalarLoss(vec![1, 2])
    );
}

fn three_layer(t: &mut Tape, v: &[Var], targets: &[usize]) -> Result<Var, GradError> {
    let mut h = v[0];
    for l in 0..3 {
        h = t.linear(h, v[1 + 2 * l], Some(v[2 + 2 * l]))?;
        if l < 2 {
            h = t.relu(h);
        }
    }
    t.softmax_cross_entropy(h, targets)
}

#[test]
fn three_layer_composite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut inputs = vec![rand_mat(&mut rng, 6, 4)];
    for (a, b) in [(4, 5), (5, 5), (5, 3)] {
        inputs.push(rand_mat(&mut rng, a, b));
        inputs.push(rand_mat(&mut rng, 1, b) * 0.1);
    }
    let targets = [0, 1, 2, 0, 1, 2];
    let err = grad_check(|t, v| three_layer(t, v, &targets), &inputs, 1e-5).unwrap();
    assert!(err <= 1e-6, "{err}");

    let grads = |inputs: &[Tensor]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
        let l = three_layer(&mut t, &vars, &targets).unwrap();
        let g = t.backward(l).unwrap();
        vars.iter()
            .map(|v| g.get(*v).unwrap().clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(grads(&inputs), grads(&inputs));
}

#[test]
fn checker_self_tests() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_mat(&mut rng, 3, 3);
    let w = rand_mat(&mut rng, 3, 3);
    let err = grad_check(|t, v| reduce(t, v[0], &w), &[x.clone()], 1e-5).unwrap();
    assert!(err <= 1e-10, "{err}");

    // Corrupted analytic gradient is caught.
    let big = &w * 10.0;
    let f = |xs: &[Tensor]| (&xs[0] * &big).sum();
    let corrupted = &big * 1.01;
    let err = relative_error(f, &[corrupted], &[x], 1e-5);
    assert!(err >= 5e-3, "{err}");
}

#[test]
fn adam_behaviour() {
    let cfg = AdamConfig::default();
    let mut store = ParamStore::new();
    store.insert("w", array![[1.0, -2.0, 3.0]]);
    store.insert("z", array![[5.0]]);
    let mut grads = IndexMap::new();
    grads.insert("w".to_string(), array![[0.5, -4.0, 1e-3]]);
    grads.insert("z".to_string(), array![[0.0]]);
    store.adam_step(&grads, &cfg).unwrap();
    let w = store.get("w").unwrap();
    for (after, before) in w.iter().zip([1.0, -2.0, 3.0]) {
        assert!(((after - before).abs() - 1e-3).abs() <= 1e-6);
    }
    assert_eq!(store.get("z").unwrap(), &array![[5.0]]);

    let mut bad = IndexMap::new();
    bad.insert("w".to_string(), array![[1.0]]);
    assert!(matches!(
        store.adam_step(&bad, &cfg),
        Err(GradError::Shape { .. })
    ));
}

#[test]
fn adam_order_independent() {
    let cfg = AdamConfig::default();
    let mut a = ParamStore::new();
    a.insert("p", array![[1.0]]);
    a.insert("q", array![[2.0]]);
    let mut b = ParamStore::new();
    b.insert("q", array![[2.0]]);
    b.insert("p", array![[1.0]]);
    let mut ga = IndexMap::new();
    ga.insert("p".to_string(), array![[0.3]]);
    ga.insert("q".to_string(), array![[-0.7]]);
    let gb: IndexMap<String, Tensor> = ga
        .iter()
        .rev()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    a.adam_step(&ga, &cfg).unwrap();
    b.adam_step(&gb, &cfg).unwrap();
    assert_eq!(a.get("p").unwrap(), b.get("p").unwrap());
    assert_eq!(a.get("q").unwrap(), b.get("q").unwrap());
}

#[test]
fn adam_minimizes_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    store.insert("w", rand_mat(&mut rng, 1, 8));
    let cfg = AdamConfig {
        lr: 1e-2,
        ..Default::default()
    };
    for _ in 0..2000 {
        let w = store.get("w").unwrap().clone();
        let mut g = IndexMap::new();
        g.insert("w".to_string(), &w * 2.0);
        store.adam_step(&g, &cfg).unwrap();
    }
    let norm = store
        .get("w")
        .unwrap()
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    assert!(norm < 1e-3, "{norm}");
}
