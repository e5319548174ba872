//! The node arena.
//!
//! Every node lives at a raw index on one [`Tape`]. Storage is
//! structure-of-arrays: values, gradients, op tags, constants and child
//! ranges are separate contiguous buffers, and child indices of all nodes
//! share a single append-only pool. A node's children always have smaller
//! indices than the node itself, so construction order is a topological
//! order.

mod concurrent;

use std::collections::BTreeMap;
use std::ops::Range;

pub use concurrent::{AppendBudget, SubTape};

use crate::error::{Error, Result};
use crate::ops::OpKind;
use crate::scalar::Scalar;

/// Handle to a node: its raw index on the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueRef(pub(crate) u32);

impl ValueRef {
    /// Builds a handle from a raw index. The index is validated on use.
    pub const fn from_raw(index: usize) -> Self {
        ValueRef(index as u32)
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

/// Saved tape cursor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint {
    mark: usize,
}

impl Checkpoint {
    pub const fn mark(self) -> usize {
        self.mark
    }
}

/// Contiguous half-open run of raw node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamRange {
    pub first: usize,
    pub last: usize,
}

impl ParamRange {
    pub const fn new(first: usize, last: usize) -> Self {
        ParamRange { first, last }
    }

    pub const fn len(self) -> usize {
        self.last - self.first
    }

    pub const fn is_empty(self) -> bool {
        self.last == self.first
    }

    /// Handle of the `k`-th entry of the range.
    #[inline]
    pub fn at(self, k: usize) -> ValueRef {
        debug_assert!(k < self.len());
        ValueRef::from_raw(self.first + k)
    }

    pub fn as_range(self) -> Range<usize> {
        self.first..self.last
    }

    pub fn iter(self) -> impl ExactSizeIterator<Item = ValueRef> + Clone {
        (self.first..self.last).map(ValueRef::from_raw)
    }
}

/// Anything nodes can be appended to.
///
/// [`Tape`] is the main implementation; [`SubTape`] lets several threads
/// append into disjoint reserved regions of one tape. Operator
/// constructors live on the blanket [`Ops`](crate::ops::Ops) extension.
pub trait Graph<S: Scalar> {
    /// Forward value of a live node.
    fn value(&self, v: ValueRef) -> Result<S>;

    fn push_leaf(&mut self, value: S, name: Option<&str>) -> Result<ValueRef>;

    /// Appends an already-evaluated node. Nothing is written when an error
    /// is returned.
    fn push_node<I>(&mut self, op: OpKind, children: I, constant: S, value: S) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>;

    /// [`push_node`](Self::push_node) with one child.
    #[inline(always)]
    fn push_unary(&mut self, op: OpKind, x: ValueRef, constant: S, value: S) -> Result<ValueRef> {
        self.push_node(op, [x], constant, value)
    }

    /// [`push_node`](Self::push_node) with two children.
    #[inline(always)]
    fn push_binary(&mut self, op: OpKind, x: ValueRef, y: ValueRef, value: S) -> Result<ValueRef> {
        self.push_node(op, [x, y], S::zero(), value)
    }
}

/// Construction options for a [`Tape`].
#[derive(Debug, Clone)]
pub struct TapeBuilder {
    capacity: usize,
    child_capacity: Option<usize>,
    fixed: bool,
    names: bool,
}

impl TapeBuilder {
    /// When set, no storage grows after construction and running out of room
    /// is an error.
    pub fn fixed_capacity(mut self, fixed: bool) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn names(mut self, enabled: bool) -> Self {
        self.names = enabled;
        self
    }

    /// Size of the shared child-index pool. Defaults to four entries per node.
    pub fn child_capacity(mut self, entries: usize) -> Self {
        self.child_capacity = Some(entries);
        self
    }

    pub fn build<S: Scalar>(self) -> Result<Tape<S>> {
        if self.capacity == 0 {
            return Err(Error::invalid("tape capacity must be at least 1"));
        }
        if self.capacity > u32::MAX as usize {
            return Err(Error::invalid("tape capacity exceeds the 32-bit index space"));
        }
        let capacity = self.capacity;
        let child_capacity = self.child_capacity.unwrap_or(capacity.saturating_mul(4));
        Ok(Tape {
            values: Vec::with_capacity(capacity),
            grads: Vec::with_capacity(capacity),
            ops: Vec::with_capacity(capacity),
            child_start: Vec::with_capacity(capacity),
            child_len: Vec::with_capacity(capacity),
            constants: Vec::with_capacity(capacity),
            children: Vec::with_capacity(child_capacity),
            names: self.names.then(BTreeMap::new),
            capacity,
            child_capacity,
            fixed: self.fixed,
            node_limit: if self.fixed { capacity } else { u32::MAX as usize },
            child_limit: if self.fixed { child_capacity } else { u32::MAX as usize },
            peak_nodes: 0,
            peak_children: 0,
        })
    }
}

/// Arena of eagerly evaluated scalar nodes.
#[derive(Debug, Clone)]
pub struct Tape<S: Scalar> {
    pub(crate) values: Vec<S>,
    pub(crate) grads: Vec<S>,
    pub(crate) ops: Vec<OpKind>,
    pub(crate) child_start: Vec<u32>,
    pub(crate) child_len: Vec<u32>,
    pub(crate) constants: Vec<S>,
    pub(crate) children: Vec<u32>,
    names: Option<BTreeMap<u32, Box<str>>>,
    capacity: usize,
    child_capacity: usize,
    fixed: bool,
    node_limit: usize,
    child_limit: usize,
    peak_nodes: usize,
    peak_children: usize,
}

impl<S: Scalar> Tape<S> {
    pub fn builder(capacity: usize) -> TapeBuilder {
        TapeBuilder {
            capacity,
            child_capacity: None,
            fixed: false,
            names: false,
        }
    }

    /// Growable tape without names, with room for `capacity` nodes reserved.
    pub fn new(capacity: usize) -> Result<Self> {
        Self::builder(capacity).build()
    }

    /// Equivalent of `new_tape(capacity, precision, fixed, names)`.
    pub fn with_options(capacity: usize, fixed: bool, names: bool) -> Result<Self> {
        Self::builder(capacity).fixed_capacity(fixed).names(names).build()
    }

    pub fn precision(&self) -> crate::Precision {
        S::PRECISION
    }

    /// Number of live nodes; the raw index the next node will receive.
    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn child_capacity(&self) -> usize {
        self.child_capacity
    }

    pub fn is_fixed(&self) -> bool {
        self.fixed
    }

    pub fn names_enabled(&self) -> bool {
        self.names.is_some()
    }

    /// Current length of the shared child-index pool.
    pub fn child_pool_len(&self) -> usize {
        self.children.len()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { mark: self.len() }
    }

    /// Discards every node at or above the checkpoint. Slots below the mark
    /// are untouched; discarded slots are not scrubbed.
    pub fn rewind(&mut self, cp: Checkpoint) -> Result<()> {
        let live = self.len();
        if cp.mark > live {
            return Err(Error::InvalidCheckpoint { mark: cp.mark, live });
        }
        if cp.mark == live {
            return Ok(());
        }
        let cursor = self.child_start[cp.mark] as usize;
        self.note_peak();
        self.values.truncate(cp.mark);
        self.grads.truncate(cp.mark);
        self.ops.truncate(cp.mark);
        self.child_start.truncate(cp.mark);
        self.child_len.truncate(cp.mark);
        self.constants.truncate(cp.mark);
        self.children.truncate(cursor);
        if let Some(names) = &mut self.names {
            names.split_off(&(cp.mark as u32));
        }
        Ok(())
    }

    #[inline]
    pub fn check(&self, v: ValueRef) -> Result<usize> {
        let i = v.index();
        if i < self.len() {
            Ok(i)
        } else {
            Err(Error::InvalidHandle {
                index: i,
                live: self.len(),
            })
        }
    }

    #[inline]
    pub fn value_of(&self, v: ValueRef) -> Result<S> {
        Ok(self.values[self.check(v)?])
    }

    pub fn grad_of(&self, v: ValueRef) -> Result<S> {
        Ok(self.grads[self.check(v)?])
    }

    pub fn set_grad(&mut self, v: ValueRef, g: S) -> Result<()> {
        let i = self.check(v)?;
        self.grads[i] = g;
        Ok(())
    }

    /// Overwrites the value of a leaf. Interior nodes are rejected since
    /// their values are functions of their children.
    pub fn set_leaf_value(&mut self, v: ValueRef, value: S) -> Result<()> {
        let i = self.check(v)?;
        if self.ops[i] != OpKind::Leaf {
            return Err(Error::invalid(format!(
                "node {i} is a {} node, only leaves can be assigned",
                self.ops[i]
            )));
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn op_of(&self, v: ValueRef) -> Result<OpKind> {
        Ok(self.ops[self.check(v)?])
    }

    pub fn constant_of(&self, v: ValueRef) -> Result<S> {
        Ok(self.constants[self.check(v)?])
    }

    /// Raw child indices of a node, in operand order.
    pub fn children_of(&self, v: ValueRef) -> Result<&[u32]> {
        let i = self.check(v)?;
        Ok(self.child_slice(i))
    }

    #[inline]
    pub(crate) fn child_slice(&self, i: usize) -> &[u32] {
        let start = self.child_start[i] as usize;
        &self.children[start..start + self.child_len[i] as usize]
    }

    /// Name attached to a node, if names are enabled and one was set.
    pub fn name_of(&self, v: ValueRef) -> Option<&str> {
        self.names.as_ref()?.get(&v.0).map(|s| &**s)
    }

    /// Attaches a label. A no-op when names are disabled.
    pub fn set_name(&mut self, v: ValueRef, name: &str) -> Result<()> {
        let i = self.check(v)?;
        if let Some(names) = &mut self.names {
            names.insert(i as u32, name.into());
        }
        Ok(())
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn grads(&self) -> &[S] {
        &self.grads
    }

    pub fn ops(&self) -> &[OpKind] {
        &self.ops
    }

    pub(crate) fn check_range(&self, range: &Range<usize>) -> Result<()> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "range {}..{} is not within the {} live nodes",
                range.start,
                range.end,
                self.len()
            )));
        }
        Ok(())
    }

    /// Mutable view of leaf values in `range`. Every node in the range must be
    /// a leaf.
    pub fn leaf_values_mut(&mut self, range: Range<usize>) -> Result<&mut [S]> {
        self.check_range(&range)?;
        if let Some(k) = self.ops[range.clone()].iter().position(|op| *op != OpKind::Leaf) {
            return Err(Error::invalid(format!(
                "node {} in range is not a leaf",
                range.start + k
            )));
        }
        Ok(&mut self.values[range])
    }

    pub fn grads_mut(&mut self, range: Range<usize>) -> Result<&mut [S]> {
        self.check_range(&range)?;
        Ok(&mut self.grads[range])
    }

    /// High-water mark of the live node count.
    pub fn peak_nodes(&self) -> usize {
        self.peak_nodes.max(self.len())
    }

    pub fn peak_children(&self) -> usize {
        self.peak_children.max(self.children.len())
    }

    /// Folds the current occupancy into the high-water marks. Occupancy only
    /// shrinks on rewind, so that is the only place this has to run.
    fn note_peak(&mut self) {
        self.peak_nodes = self.peak_nodes();
        self.peak_children = self.peak_children();
    }

    /// Restarts peak tracking from the current occupancy.
    pub fn reset_peak(&mut self) {
        self.peak_nodes = self.len();
        self.peak_children = self.children.len();
    }

    /// Bytes of arena storage one node occupies, excluding its child entries.
    pub const fn node_bytes() -> usize {
        // value, grad, constant, op tag, child start, child count
        3 * std::mem::size_of::<S>() + 1 + 8
    }

    /// Arena bytes at the peak: node storage plus child-pool entries.
    pub fn peak_bytes(&self) -> usize {
        self.peak_nodes() * Self::node_bytes() + self.peak_children() * 4
    }

    #[inline(always)]
    fn reserve_node(&self) -> Result<usize> {
        let index = self.len();
        if index >= self.node_limit {
            return Err(Error::CapacityExceeded {
                what: "node",
                capacity: self.node_limit,
                requested: index + 1,
            });
        }
        Ok(index)
    }

    #[inline(always)]
    fn check_operand(&self, c: ValueRef, index: usize) -> Result<()> {
        if c.index() >= index {
            return Err(Error::InvalidHandle {
                index: c.index(),
                live: index,
            });
        }
        Ok(())
    }

    /// Start of the child-pool run for a node with `n` children.
    #[inline(always)]
    fn reserve_children(&self, n: usize) -> Result<usize> {
        let start = self.children.len();
        if start + n > self.child_limit {
            return Err(Error::CapacityExceeded {
                what: "child pool",
                capacity: self.child_limit,
                requested: start + n,
            });
        }
        Ok(start)
    }

    #[inline(always)]
    fn commit_node(&mut self, op: OpKind, start: usize, constant: S, value: S) -> ValueRef {
        let index = self.values.len();
        self.values.push(value);
        self.grads.push(S::zero());
        self.ops.push(op);
        self.child_start.push(start as u32);
        self.child_len.push((self.children.len() - start) as u32);
        self.constants.push(constant);
        ValueRef(index as u32)
    }
}

impl<S: Scalar> Graph<S> for Tape<S> {
    #[inline(always)]
    fn value(&self, v: ValueRef) -> Result<S> {
        self.value_of(v)
    }

    #[inline(always)]
    fn push_leaf(&mut self, value: S, name: Option<&str>) -> Result<ValueRef> {
        self.reserve_node()?;
        let start = self.children.len();
        let v = self.commit_node(OpKind::Leaf, start, S::zero(), value);
        if let (Some(names), Some(name)) = (&mut self.names, name) {
            names.insert(v.0, name.into());
        }
        Ok(v)
    }

    #[inline]
    fn push_node<I>(&mut self, op: OpKind, children: I, constant: S, value: S) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
    {
        let index = self.reserve_node()?;
        let start = self.children.len();
        for c in children {
            if c.index() >= index {
                self.children.truncate(start);
                return Err(Error::InvalidHandle {
                    index: c.index(),
                    live: index,
                });
            }
            if self.children.len() >= self.child_limit {
                let requested = self.children.len() + 1;
                self.children.truncate(start);
                return Err(Error::CapacityExceeded {
                    what: "child pool",
                    capacity: self.child_limit,
                    requested,
                });
            }
            self.children.push(c.0);
        }
        Ok(self.commit_node(op, start, constant, value))
    }

    #[inline(always)]
    fn push_unary(&mut self, op: OpKind, x: ValueRef, constant: S, value: S) -> Result<ValueRef> {
        let index = self.reserve_node()?;
        self.check_operand(x, index)?;
        let start = self.reserve_children(1)?;
        self.children.push(x.0);
        Ok(self.commit_node(op, start, constant, value))
    }

    #[inline(always)]
    fn push_binary(&mut self, op: OpKind, x: ValueRef, y: ValueRef, value: S) -> Result<ValueRef> {
        let index = self.reserve_node()?;
        self.check_operand(x, index)?;
        self.check_operand(y, index)?;
        let start = self.reserve_children(2)?;
        self.children.extend_from_slice(&[x.0, y.0]);
        Ok(self.commit_node(op, start, S::zero(), value))
    }
}
