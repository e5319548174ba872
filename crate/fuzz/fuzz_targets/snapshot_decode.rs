#![no_main]

use libfuzzer_sys::fuzz_target;
use tapegrad::serialize::{Snapshot, SnapshotHeader};
use tapegrad::{Ops, Tape};

fuzz_target!(|data: &[u8]| {
    let _ = SnapshotHeader::decode(data);
    let mut tape = Tape::<f64>::new(16).unwrap();
    for k in 0..8 {
        tape.leaf(k as f64).unwrap();
    }
    if let Ok(snap) = Snapshot::<f64>::decode(data) {
        let _ = snap.apply(&mut tape);
        assert_eq!(snap.encode(), data);
    }
    if let Ok(snap) = Snapshot::<f32>::decode(data) {
        let mut t = Tape::<f32>::new(4).unwrap();
        let _ = snap.apply(&mut t);
    }
    let _ = tapegrad::serialize::load_snapshot(&mut tape, data);
});
