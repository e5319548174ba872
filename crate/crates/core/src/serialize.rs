//! Bit-exact transport of tape values and gradients.
//!
//! Two formats are supported. A *raw range* is nothing but the scalars of a
//! contiguous node range in little-endian order, values first and then
//! gradients if requested. A *snapshot* covers a whole tape prefix and
//! carries an 18-byte header:
//!
//! | bytes | field                                |
//! |-------|--------------------------------------|
//! | 0..4  | magic `BTSG`                         |
//! | 4..8  | version, u32 LE (currently 1)        |
//! | 8     | precision: 0 = fp32, 1 = fp64        |
//! | 9     | flags: bit 0 set when grads follow   |
//! | 10..18| node count, u64 LE                   |

use std::io::{Read, Write};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::tape::Tape;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"BTSG";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 18;
const FLAG_GRADS: u8 = 1;

fn streams(include_grads: bool) -> usize {
    if include_grads {
        2
    } else {
        1
    }
}

/// Byte length of a raw range of `len` nodes.
pub fn raw_len<S: Scalar>(len: usize, include_grads: bool) -> usize {
    len * S::PRECISION.width() * streams(include_grads)
}

fn encode_into<S: Scalar>(out: &mut Vec<u8>, xs: &[S]) {
    for &x in xs {
        x.write_le(out);
    }
}

fn decode_into<S: Scalar>(dst: &mut [S], bytes: &[u8]) {
    let w = S::PRECISION.width();
    for (d, chunk) in dst.iter_mut().zip(bytes.chunks_exact(w)) {
        *d = S::read_le(chunk);
    }
}

/// Raw-format bytes of `range`.
pub fn range_to_bytes<S: Scalar>(tape: &Tape<S>, range: Range<usize>, include_grads: bool) -> Result<Vec<u8>> {
    tape.check_range(&range)?;
    let mut out = Vec::with_capacity(raw_len::<S>(range.len(), include_grads));
    encode_into(&mut out, &tape.values()[range.clone()]);
    if include_grads {
        encode_into(&mut out, &tape.grads()[range]);
    }
    Ok(out)
}

/// Overwrites values (and grads) of `range` from raw-format `bytes`, which
/// must have exactly the expected length. Nothing is written on error.
pub fn range_from_bytes<S: Scalar>(
    tape: &mut Tape<S>,
    range: Range<usize>,
    include_grads: bool,
    bytes: &[u8],
) -> Result<()> {
    tape.check_range(&range)?;
    let expected = raw_len::<S>(range.len(), include_grads);
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "raw range of {} {} nodes needs {expected} bytes, got {}",
            range.len(),
            S::PRECISION,
            bytes.len()
        )));
    }
    let (vb, gb) = bytes.split_at(raw_len::<S>(range.len(), false));
    decode_into(&mut tape.values[range.clone()], vb);
    if include_grads {
        decode_into(&mut tape.grads[range], gb);
    }
    Ok(())
}

/// Writes `range` in raw format and returns the byte count.
pub fn save_range<S: Scalar, W: Write>(
    tape: &Tape<S>,
    range: Range<usize>,
    include_grads: bool,
    mut sink: W,
) -> Result<usize> {
    let bytes = range_to_bytes(tape, range, include_grads)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len())
}

/// Reads exactly one raw range from `source`. Trailing bytes are an error.
pub fn load_range<S: Scalar, R: Read>(
    tape: &mut Tape<S>,
    range: Range<usize>,
    include_grads: bool,
    source: R,
) -> Result<()> {
    tape.check_range(&range)?;
    let expected = raw_len::<S>(range.len(), include_grads);
    let mut staged = Vec::with_capacity(expected);
    source.take(expected as u64 + 1).read_to_end(&mut staged)?;
    range_from_bytes(tape, range, include_grads, &staged)
}

/// Parsed snapshot header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub precision: Precision,
    pub has_grads: bool,
    pub count: u64,
}

impl SnapshotHeader {
    pub fn encode(&self) -> [u8; SNAPSHOT_HEADER_LEN] {
        let mut h = [0u8; SNAPSHOT_HEADER_LEN];
        h[0..4].copy_from_slice(&SNAPSHOT_MAGIC);
        h[4..8].copy_from_slice(&self.version.to_le_bytes());
        h[8] = self.precision.tag();
        h[9] = if self.has_grads { FLAG_GRADS } else { 0 };
        h[10..18].copy_from_slice(&self.count.to_le_bytes());
        h
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SNAPSHOT_HEADER_LEN {
            return Err(Error::Format(format!(
                "snapshot header needs {SNAPSHOT_HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        if bytes[0..4] != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad snapshot magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let precision = Precision::from_tag(bytes[8])
            .ok_or_else(|| Error::Format(format!("unknown precision tag {}", bytes[8])))?;
        let flags = bytes[9];
        if flags & !FLAG_GRADS != 0 {
            return Err(Error::Format(format!("unknown snapshot flags {flags:#04x}")));
        }
        let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
        Ok(SnapshotHeader {
            version,
            precision,
            has_grads: flags & FLAG_GRADS != 0,
            count,
        })
    }

    /// Payload length after the header, if it fits in `usize`.
    pub fn payload_len(&self) -> Option<usize> {
        usize::try_from(self.count)
            .ok()?
            .checked_mul(self.precision.width())?
            .checked_mul(streams(self.has_grads))
    }
}

/// Decoded snapshot contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub values: Vec<S>,
    pub grads: Option<Vec<S>>,
}

impl<S: Scalar> Snapshot<S> {
    /// Captures every node currently on `tape`.
    pub fn capture(tape: &Tape<S>, include_grads: bool) -> Self {
        Snapshot {
            values: tape.values().to_vec(),
            grads: include_grads.then(|| tape.grads().to_vec()),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = SnapshotHeader {
            version: SNAPSHOT_VERSION,
            precision: S::PRECISION,
            has_grads: self.grads.is_some(),
            count: self.values.len() as u64,
        };
        let n = self.values.len();
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER_LEN + raw_len::<S>(n, self.grads.is_some()));
        out.extend_from_slice(&header.encode());
        encode_into(&mut out, &self.values);
        if let Some(g) = &self.grads {
            encode_into(&mut out, g);
        }
        out
    }

    /// Parses a complete snapshot. The byte length must match the header.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = SnapshotHeader::decode(bytes)?;
        if header.precision != S::PRECISION {
            return Err(Error::Format(format!(
                "snapshot holds {} scalars, expected {}",
                header.precision,
                S::PRECISION
            )));
        }
        let body = &bytes[SNAPSHOT_HEADER_LEN..];
        match header.payload_len() {
            Some(len) if len == body.len() => {}
            _ => {
                return Err(Error::Format(format!(
                    "snapshot of {} nodes does not match {} payload bytes",
                    header.count,
                    body.len()
                )))
            }
        }
        let n = header.count as usize;
        let w = S::PRECISION.width();
        let mut values = vec![S::zero(); n];
        decode_into(&mut values, &body[..n * w]);
        let grads = header.has_grads.then(|| {
            let mut g = vec![S::zero(); n];
            decode_into(&mut g, &body[n * w..]);
            g
        });
        Ok(Snapshot { values, grads })
    }

    /// Writes the snapshot onto the first `values.len()` nodes of `tape`.
    pub fn apply(&self, tape: &mut Tape<S>) -> Result<()> {
        let n = self.values.len();
        if n > tape.len() {
            return Err(Error::CapacityExceeded {
                what: "snapshot nodes",
                capacity: tape.len(),
                requested: n,
            });
        }
        tape.values[..n].copy_from_slice(&self.values);
        if let Some(g) = &self.grads {
            tape.grads[..n].copy_from_slice(g);
        }
        Ok(())
    }
}

/// Writes a snapshot of the whole tape and returns the byte count.
pub fn save_snapshot<S: Scalar, W: Write>(tape: &Tape<S>, include_grads: bool, mut sink: W) -> Result<usize> {
    let bytes = Snapshot::capture(tape, include_grads).encode();
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len())
}

/// Reads a snapshot and restores it onto the nodes already on `tape`, which
/// must have been rebuilt with at least as many nodes.
pub fn load_snapshot<S: Scalar, R: Read>(tape: &mut Tape<S>, mut source: R) -> Result<()> {
    let mut head = [0u8; SNAPSHOT_HEADER_LEN];
    let mut got = 0;
    while got < head.len() {
        let k = source.read(&mut head[got..])?;
        if k == 0 {
            break;
        }
        got += k;
    }
    let header = SnapshotHeader::decode(&head[..got])?;
    let len = header
        .payload_len()
        .ok_or_else(|| Error::Format("snapshot node count overflows".into()))?;
    if header.count > tape.len() as u64 {
        return Err(Error::CapacityExceeded {
            what: "snapshot nodes",
            capacity: tape.len(),
            requested: header.count as usize,
        });
    }
    let mut bytes = Vec::with_capacity(SNAPSHOT_HEADER_LEN + len);
    bytes.extend_from_slice(&head);
    source.take(len as u64 + 1).read_to_end(&mut bytes)?;
    Snapshot::<S>::decode(&bytes)?.apply(tape)
}
