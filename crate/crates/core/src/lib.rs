//! Scalar reverse-mode automatic differentiation on a contiguous tape.
//!
//! Nodes are appended to a [`Tape`] and evaluated eagerly. Gradients are
//! computed by [`Tape::backward`] or the allocation-free
//! [`Tape::backward_with_scratch`]. A [`Checkpoint`] lets per-sample graphs be
//! discarded and rebuilt in place, which keeps activation memory independent
//! of batch size during training.
//!
//! ```
//! use tapegrad::{Ops, Tape};
//!
//! let mut tape = Tape::<f64>::new(16).unwrap();
//! let a = tape.leaf(-41.0).unwrap();
//! let b = tape.leaf(2.0).unwrap();
//! let c = tape.add(a, b).unwrap();
//! let ab = tape.mul(a, b).unwrap();
//! let b3 = tape.pow3(b).unwrap();
//! let d = tape.add(ab, b3).unwrap();
//! let e = tape.sub(c, d).unwrap();
//! let f = tape.sqr(e).unwrap();
//! let half = tape.mul_by_constant(f, 0.5).unwrap();
//! tape.backward(half).unwrap();
//! assert_eq!(tape.grad_of(a).unwrap(), -35.0);
//! assert_eq!(tape.grad_of(b).unwrap(), 1050.0);
//! ```

pub mod backprop;
pub mod error;
pub mod export;
pub mod models;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod scalar;
pub mod serialize;
pub mod tape;

pub use backprop::ScratchBuffers;
pub use error::{Error, Result};
pub use ops::{InplaceOp, OpKind, Ops};
pub use scalar::{Precision, Scalar};
pub use tape::{AppendBudget, Checkpoint, Graph, ParamRange, SubTape, Tape, TapeBuilder, ValueRef};
