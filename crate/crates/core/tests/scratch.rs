mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tapegrad::{Error, OpKind, Ops, ScratchBuffers, Tape};

struct Counting;

thread_local! {
    static ALLOCATIONS: Cell<usize> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.with(|n| n.set(n.get() + 1));
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATIONS.with(|n| n.set(n.get() + 1));
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn allocations() -> usize {
    ALLOCATIONS.with(|n| n.get())
}

#[test]
fn sized_scratch_backward_never_allocates() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for nodes in [1, 2, 10, 50, 200] {
        for _ in 0..20 {
            let mut tape = Tape::new(nodes + 1).unwrap();
            let root = common::random_graph(&mut tape, &mut rng, nodes).unwrap();
            let mut scratch = ScratchBuffers::for_tape(&tape);
            let before = allocations();
            tape.backward_with_scratch(root, &mut scratch).unwrap();
            tape.backward_with_scratch(root, &mut scratch).unwrap();
            assert_eq!(allocations(), before, "{nodes}-node graph");
        }
    }
}

#[test]
fn fixed_scratch_reused_across_rebuilds_never_allocates() {
    let mut tape = Tape::<f64>::with_options(10, true, false).unwrap();
    let base = tape.checkpoint();
    let mut scratch = ScratchBuffers::fixed(10, 0);
    let before = allocations();
    for _ in 0..1000 {
        tape.rewind(base).unwrap();
        let a = tape.leaf(-41.0).unwrap();
        let b = tape.leaf(2.0).unwrap();
        let c = tape.add(a, b).unwrap();
        let ab = tape.mul(a, b).unwrap();
        let b3 = tape.pow3(b).unwrap();
        let d = tape.add(ab, b3).unwrap();
        let e = tape.sub(c, d).unwrap();
        let f = tape.sqr(e).unwrap();
        let two = tape.leaf(2.0).unwrap();
        let g = tape.div(f, two).unwrap();
        tape.backward_with_scratch(g, &mut scratch).unwrap();
        assert_eq!(tape.grad_of(a).unwrap(), -35.0);
        assert_eq!(tape.grad_of(b).unwrap(), 1050.0);
    }
    assert_eq!(allocations(), before);
}

#[test]
fn undersized_fixed_scratch_reports_the_requirement() {
    let mut tape = Tape::<f64>::new(32).unwrap();
    let mut x = tape.leaf(0.5).unwrap();
    for _ in 0..9 {
        x = tape.tanh(x).unwrap();
    }
    let mut scratch = ScratchBuffers::fixed(4, 0);
    match tape.backward_with_scratch(x, &mut scratch) {
        Err(Error::ScratchCapacity { required, available, .. }) => {
            assert_eq!(required, 10);
            assert_eq!(available, 4);
        }
        other => panic!("expected a scratch capacity error, got {other:?}"),
    }

    let xs: Vec<_> = (0..6).map(|k| tape.leaf(k as f64 + 1.0).unwrap()).collect();
    let p = tape.varying(OpKind::MulVarying, xs).unwrap();
    let mut scratch = ScratchBuffers::fixed(tape.len(), 3);
    match tape.backward_with_scratch(p, &mut scratch) {
        Err(Error::ScratchCapacity { buffer, required, available }) => {
            assert_eq!(buffer, "products");
            assert_eq!((required, available), (6, 3));
        }
        other => panic!("expected a scratch capacity error, got {other:?}"),
    }
}

#[test]
fn deep_chain_backward_runs_on_a_small_stack() {
    const DEPTH: usize = 100_000;
    let handle = std::thread::Builder::new()
        .stack_size(64 * 1024)
        .spawn(|| {
            let mut tape = Tape::<f64>::new(DEPTH + 1).unwrap();
            let x = tape.leaf(1.0).unwrap();
            let mut y = x;
            for _ in 0..DEPTH {
                y = tape.mul_by_constant(y, 1.0).unwrap();
            }
            let mut scratch = ScratchBuffers::for_tape(&tape);
            tape.backward_with_scratch(y, &mut scratch).unwrap();
            (tape.grad_of(x).unwrap(), scratch.processed())
        })
        .unwrap();
    let (grad, processed) = handle.join().unwrap();
    assert_eq!(grad, 1.0);
    assert_eq!(processed, DEPTH + 1);
}
