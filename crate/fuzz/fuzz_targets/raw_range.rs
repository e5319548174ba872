#![no_main]

use libfuzzer_sys::fuzz_target;
use tapegrad::serialize::{load_range, range_from_bytes, range_to_bytes};
use tapegrad::{Ops, Tape};

fuzz_target!(|data: &[u8]| {
    let Some((&head, bytes)) = data.split_first() else {
        return;
    };
    let mut tape = Tape::<f64>::new(32).unwrap();
    for k in 0..32 {
        tape.leaf(k as f64).unwrap();
    }
    let start = (head & 0x0f) as usize;
    let len = ((head >> 4) & 0x07) as usize;
    let grads = head & 0x80 != 0;
    let range = start..start + len;
    let before = tape.values().to_vec();
    match range_from_bytes(&mut tape, range.clone(), grads, bytes) {
        Ok(()) => {
            assert_eq!(range_to_bytes(&tape, range.clone(), grads).unwrap(), bytes);
        }
        Err(_) => assert_eq!(
            tape.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            before.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        ),
    }
    let _ = load_range(&mut tape, range, grads, bytes);
});
