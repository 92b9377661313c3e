use std::sync::Arc;

use indexmap::IndexMap;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rendnet::gradkit::{grad_check, AdamConfig, ParamStore, Tape, Tensor};
use rendnet::lsr::{Fragment, InterpMap, Source};
use rendnet::Vec3;

fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
}

/// Segment ids with every group non-empty, in shuffled row order.
fn segments(rng: &mut ChaCha8Rng, rows: usize, groups: usize) -> Vec<usize> {
    let mut seg: Vec<usize> = (0..rows)
        .map(|i| {
            if i < groups {
                i
            } else {
                rng.gen_range(0..groups)
            }
        })
        .collect();
    seg.shuffle(rng);
    seg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segment_reductions_ignore_row_order(seed in any::<u64>(), groups in 1usize..5, extra in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = groups + extra;
        let x = mat(&mut rng, rows, 3);
        let seg = segments(&mut rng, rows, groups);
        let mut perm: Vec<usize> = (0..rows).collect();
        perm.shuffle(&mut rng);
        let xp = Array2::from_shape_fn((rows, 3), |(i, k)| x[[perm[i], k]]);
        let segp: Vec<usize> = perm.iter().map(|&i| seg[i]).collect();

        let mut t = Tape::new();
        let (a, b) = (t.constant(x), t.constant(xp));
        let (ma, mb) = (t.segment_max(a, &seg, groups).unwrap(), t.segment_max(b, &segp, groups).unwrap());
        prop_assert_eq!(t.value(ma), t.value(mb));
        let (ea, eb) = (
            t.segment_mean(a, Arc::new(seg.clone()), groups).unwrap(),
            t.segment_mean(b, Arc::new(segp.clone()), groups).unwrap(),
        );
        // Means add rows in a different order, so agree to rounding.
        let d = (t.value(ea) - t.value(eb)).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        prop_assert!(d <= 1e-15, "{d}");
    }

    #[test]
    fn backward_is_bit_reproducible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, w, b) = (mat(&mut rng, 6, 3), mat(&mut rng, 3, 4), mat(&mut rng, 1, 4));
        let seg = segments(&mut rng, 6, 2);
        let run = || {
            let mut t = Tape::new();
            let (xv, wv, bv) = (t.param(x.clone()), t.param(w.clone()), t.param(b.clone()));
            let y = t.linear(xv, wv, Some(bv)).unwrap();
            let r = t.relu(y);
            let m = t.segment_max(r, &seg, 2).unwrap();
            let loss = t.softmax_cross_entropy(m, &[0, 3]).unwrap();
            let g = t.backward(loss).unwrap();
            [xv, wv, bv].map(|v| g.get(v).cloned().unwrap())
        };
        let (first, second) = (run(), run());
        for (p, q) in first.iter().zip(&second) {
            prop_assert!(p.iter().zip(q).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn linear_relu_chain_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [mat(&mut rng, 5, 3), mat(&mut rng, 3, 4), mat(&mut rng, 1, 4)];
        let out = mat(&mut rng, 5, 4);
        // Skip draws with a pre-activation within 1e-3 of the kink.
        let pre = inputs[0].dot(&inputs[1]) + &inputs[2];
        prop_assume!(pre.iter().all(|v| v.abs() > 1e-3));
        let err = grad_check(
            |t, v| {
                let y = t.linear(v[0], v[1], Some(v[2]))?;
                let r = t.relu(y);
                t.dot(r, out.clone())
            },
            &inputs,
            1e-6,
        )
        .unwrap();
        prop_assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn adam_ignores_name_order(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let values: Vec<Tensor> = names.iter().map(|_| mat(&mut rng, 2, 2)).collect();
        let grads: Vec<Tensor> = names.iter().map(|_| mat(&mut rng, 2, 2)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let build = |idx: &[usize]| {
            let mut s = ParamStore::new();
            for &i in idx {
                s.insert(names[i].clone(), values[i].clone());
            }
            s
        };
        let gmap = |idx: &[usize]| idx.iter().map(|&i| (names[i].clone(), grads[i].clone())).collect::<IndexMap<_, _>>();
        let (mut a, mut b) = (build(&(0..n).collect::<Vec<_>>()), build(&order));
        let cfg = AdamConfig::default();
        for _ in 0..3 {
            a.adam_step(&gmap(&(0..n).collect::<Vec<_>>()), &cfg).unwrap();
            b.adam_step(&gmap(&order), &cfg).unwrap();
        }
        for name in &names {
            prop_assert_eq!(a.get(name).unwrap(), b.get(name).unwrap());
        }
    }

    #[test]
    fn interpolation_is_adjoint(seed in any::<u64>(), nodes in 3usize..10, frags in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fr: Vec<Fragment<f64>> = (0..frags)
            .map(|_| {
                let ids = rand::seq::index::sample(&mut rng, nodes, 3).into_vec();
                let (a, b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                let (u, v) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                if rng.gen() {
                    Fragment::triangle(Vec3::zero(), Source::Surface(0), [ids[0], ids[1], ids[2]], [1.0 - u - v, u, v])
                } else {
                    Fragment::segment(Vec3::zero(), Source::Edge(0), [ids[0], ids[1]], [1.0 - a, a])
                }
            })
            .collect();
        let m = InterpMap::from_fragments(&fr, nodes);
        let h = mat(&mut rng, nodes, 4);
        let df = mat(&mut rng, frags, 4);
        let lhs = (&df * &m.forward(h.view()).unwrap()).sum();
        let rhs = (&m.backward(df.view()).unwrap() * &h).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        // Weights per fragment form a partition of unity.
        let ones = Array2::from_elem((nodes, 1), 1.0);
        prop_assert!(m.forward(ones.view()).unwrap().iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }
}
