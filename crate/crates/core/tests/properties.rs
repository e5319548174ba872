mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tapegrad::optim::{sample_batch, GradAccumulator};
use tapegrad::serialize::{range_from_bytes, range_to_bytes, Snapshot};
use tapegrad::{AppendBudget, Ops, ParamRange, ScratchBuffers, Tape, ValueRef};

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn tape_with(values: &[u64], grads: &[u64]) -> Tape<f64> {
    let mut t = Tape::new(values.len().max(1)).unwrap();
    for (&v, &g) in values.iter().zip(grads) {
        let x = t.leaf(f64::from_bits(v)).unwrap();
        t.set_grad(x, f64::from_bits(g)).unwrap();
    }
    t
}

proptest! {
    #[test]
    fn rewind_restores_prefix_and_reuses_indices(seed in any::<u64>(), before in 1usize..60, after in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(16).unwrap();
        let root = common::random_graph(&mut tape, &mut rng, before).unwrap();
        tape.backward(root).unwrap();
        let cp = tape.checkpoint();
        let values = bits(tape.values());
        let grads = bits(tape.grads());
        let ops = tape.ops().to_vec();
        let pool = tape.child_pool_len();

        common::random_graph(&mut tape, &mut rng, after).unwrap();
        tape.rewind(cp).unwrap();
        prop_assert_eq!(tape.len(), cp.mark());
        prop_assert_eq!(tape.child_pool_len(), pool);
        prop_assert_eq!(tape.ops(), &ops[..]);
        prop_assert_eq!(bits(tape.values()), values);
        prop_assert_eq!(bits(tape.grads()), grads);
        let next = tape.leaf(1.0).unwrap();
        prop_assert_eq!(next.index(), cp.mark());
    }

    #[test]
    fn backward_variants_agree_bit_for_bit(seed in any::<u64>(), nodes in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(nodes + 1).unwrap();
        let root = common::random_graph(&mut tape, &mut rng, nodes).unwrap();
        let mut other = tape.clone();
        tape.backward(root).unwrap();
        let mut scratch = ScratchBuffers::new();
        other.backward_with_scratch(root, &mut scratch).unwrap();
        prop_assert_eq!(bits(tape.grads()), bits(other.grads()));
    }

    #[test]
    fn propagation_reads_only_finished_gradients(seed in any::<u64>(), nodes in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(nodes + 1).unwrap();
        let root = common::random_graph(&mut tape, &mut rng, nodes).unwrap();
        let mut scratch = ScratchBuffers::for_tape(&tape);
        tape.backward_with_scratch(root, &mut scratch).unwrap();
        // Propagation runs over `order` back to front. A node's gradient is
        // complete once every reached parent has propagated, so every parent
        // must come later in `order` than each of its children.
        let order = scratch.order();
        let pos: std::collections::HashMap<u32, usize> =
            order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        for (&n, &i) in &pos {
            for &c in tape.children_of(ValueRef::from_raw(n as usize)).unwrap() {
                if let Some(&j) = pos.get(&c) {
                    prop_assert!(j < i, "child {c} at {j} not before parent {n} at {i}");
                }
            }
        }
        prop_assert_eq!(order.last().copied(), (!order.is_empty()).then_some(root.index() as u32));
    }

    #[test]
    fn second_backward_doubles_leaf_gradients(seed in any::<u64>(), nodes in 2usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(nodes + 1).unwrap();
        let root = common::random_graph(&mut tape, &mut rng, nodes).unwrap();
        let mut scratch = ScratchBuffers::new();
        tape.backward_with_scratch(root, &mut scratch).unwrap();
        let once = tape.grads().to_vec();
        tape.backward_with_scratch(root, &mut scratch).unwrap();
        for i in 0..tape.len() {
            let v = ValueRef::from_raw(i);
            if tape.children_of(v).unwrap().is_empty() && i != root.index() {
                // Contributions are added one at a time onto the first
                // pass, so the sum can differ from 2x in the last places.
                let (got, want) = (tape.grads()[i], 2.0 * once[i]);
                prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn raw_ranges_round_trip_every_bit_pattern(
        values in prop::collection::vec(any::<u64>(), 1..40),
        seed in any::<u64>(),
        with_grads in any::<bool>(),
    ) {
        let mut grads = values.clone();
        grads.rotate_left(seed as usize % values.len());
        let src = tape_with(&values, &grads);
        let n = values.len();
        let bytes = range_to_bytes(&src, 0..n, with_grads).unwrap();
        prop_assert_eq!(bytes.len(), n * 8 * if with_grads { 2 } else { 1 });
        let mut dst = tape_with(&vec![0; n], &vec![0; n]);
        range_from_bytes(&mut dst, 0..n, with_grads, &bytes).unwrap();
        prop_assert_eq!(bits(dst.values()), values);
        if with_grads {
            prop_assert_eq!(bits(dst.grads()), grads);
        }
    }

    #[test]
    fn snapshots_round_trip_every_bit_pattern(values in prop::collection::vec(any::<u64>(), 1..40)) {
        let grads: Vec<u64> = values.iter().map(|v| v.rotate_left(17)).collect();
        let src = tape_with(&values, &grads);
        let bytes = Snapshot::capture(&src, true).encode();
        let snap = Snapshot::<f64>::decode(&bytes).unwrap();
        let mut dst = tape_with(&vec![0; values.len()], &vec![0; values.len()]);
        snap.apply(&mut dst).unwrap();
        prop_assert_eq!(bits(dst.values()), values);
        prop_assert_eq!(bits(dst.grads()), grads);
    }

    #[test]
    fn truncated_or_padded_raw_ranges_write_nothing(n in 1usize..20, cut in 1usize..8, pad in any::<bool>()) {
        let src = tape_with(&vec![1f64.to_bits(); n], &vec![0; n]);
        let mut bytes = range_to_bytes(&src, 0..n, false).unwrap();
        if pad {
            bytes.extend(std::iter::repeat_n(0, cut));
        } else {
            bytes.truncate(bytes.len() - cut.min(bytes.len()));
        }
        let mut dst = tape_with(&vec![2f64.to_bits(); n], &vec![0; n]);
        prop_assert!(range_from_bytes(&mut dst, 0..n, false, &bytes).is_err());
        prop_assert!(dst.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn batch_indices_are_distinct_and_in_range(n in 1usize..500, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let b = ((n as f64 * frac) as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = sample_batch(n, b, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), b);
        prop_assert!(idx.iter().all(|&i| i < n));
        prop_assert_eq!(idx.iter().collect::<HashSet<_>>().len(), b);
    }

    #[test]
    fn accumulated_gradient_is_sum_of_sample_gradients(seed in any::<u64>(), samples in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(64).unwrap();
        let params: Vec<ValueRef> = (0..4).map(|k| tape.leaf(0.3 * k as f64 - 0.5).unwrap()).collect();
        let range = ParamRange::new(params[0].index(), params[0].index() + 4);
        let base = tape.checkpoint();
        let mut acc = GradAccumulator::new(range);
        let mut expected = [0.0f64; 4];
        for _ in 0..samples {
            // A per-sample loss: random inputs through a fixed expression.
            let xs: Vec<f64> = (0..4).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let build = |t: &mut Tape<f64>| {
                let inputs: Vec<ValueRef> = xs.iter().map(|&x| t.leaf(x).unwrap()).collect();
                let z = t.inner_product(params.iter().copied(), inputs).unwrap();
                let a = t.tanh(z).unwrap();
                t.sqr(a).unwrap()
            };
            tape.rewind(base).unwrap();
            tape.zero_grads(range.as_range()).unwrap();
            let loss = build(&mut tape);
            tape.backward(loss).unwrap();
            acc.absorb(&tape).unwrap();

            // The same sample alone on a fresh tape.
            let mut solo = Tape::new(64).unwrap();
            for p in &params {
                solo.leaf(tape.value_of(*p).unwrap()).unwrap();
            }
            let loss = build(&mut solo);
            solo.backward(loss).unwrap();
            for (e, p) in expected.iter_mut().zip(&params) {
                *e += solo.grad_of(*p).unwrap();
            }
        }
        prop_assert_eq!(acc.samples(), samples);
        for (a, e) in acc.sum().iter().zip(expected) {
            prop_assert!((a - e).abs() <= 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn split_regions_build_what_a_serial_tape_builds(seed in any::<u64>(), workers in 1usize..5) {
        let mut tape = Tape::<f64>::new(8).unwrap();
        let shared = tape.leaf(0.75).unwrap();
        let budgets = vec![AppendBudget { nodes: 12, children: 24 }; workers];
        let results: Vec<(usize, ValueRef)> = {
            let subs = tape.split_append(&budgets).unwrap();
            std::thread::scope(|s| {
                let handles: Vec<_> = subs
                    .into_iter()
                    .enumerate()
                    .map(|(w, mut sub)| {
                        s.spawn(move || {
                            let x = sub.leaf(w as f64 + (seed % 7) as f64).unwrap();
                            let y = sub.mul(x, shared).unwrap();
                            let z = sub.tanh(y).unwrap();
                            let out = sub.add(z, x).unwrap();
                            (w, out)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            })
        };
        for (w, out) in results {
            let mut serial = Tape::<f64>::new(8).unwrap();
            let sh = serial.leaf(0.75).unwrap();
            let x = serial.leaf(w as f64 + (seed % 7) as f64).unwrap();
            let y = serial.mul(x, sh).unwrap();
            let z = serial.tanh(y).unwrap();
            let expect = serial.add(z, x).unwrap();
            prop_assert_eq!(tape.value_of(out).unwrap().to_bits(), serial.value_of(expect).unwrap().to_bits());
            tape.zero_all_grads();
            tape.backward(out).unwrap();
            serial.backward(expect).unwrap();
            prop_assert_eq!(tape.grad_of(shared).unwrap().to_bits(), serial.grad_of(sh).unwrap().to_bits());
        }
    }
}
