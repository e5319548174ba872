//! Concurrent construction into one tape.
//!
//! [`Tape::split_append`] reserves one contiguous node region and one
//! child-pool region per worker in a single step, then hands out a
//! [`SubTape`] per region. Each worker may read nodes that existed before
//! the split and nodes it created itself; reading another worker's region
//! is an invalid-handle error. Slots a worker leaves unused stay behind as
//! zero-valued leaves.

use super::{Graph, Tape, ValueRef};
use crate::error::{Error, Result};
use crate::ops::OpKind;
use crate::scalar::Scalar;

/// Room reserved for one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendBudget {
    pub nodes: usize,
    pub children: usize,
}

/// Exclusive append cursor over one reserved region of a [`Tape`].
#[derive(Debug)]
pub struct SubTape<'a, S: Scalar> {
    frozen: &'a [S],
    start: usize,
    pool_base: usize,
    values: &'a mut [S],
    ops: &'a mut [OpKind],
    child_start: &'a mut [u32],
    child_len: &'a mut [u32],
    constants: &'a mut [S],
    pool: &'a mut [u32],
    used: usize,
    used_children: usize,
}

fn carve<T>(mut rest: &mut [T], sizes: impl Iterator<Item = usize>) -> Vec<&mut [T]> {
    let mut out = Vec::new();
    for n in sizes {
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(n);
        out.push(head);
        rest = tail;
    }
    out
}

impl<S: Scalar> Tape<S> {
    /// Reserves one region per budget and returns their append cursors.
    /// Regions are laid out in budget order starting at the current end of
    /// the tape.
    pub fn split_append(&mut self, budgets: &[AppendBudget]) -> Result<Vec<SubTape<'_, S>>> {
        let base = self.len();
        let pool_base = self.children.len();
        let nodes: usize = budgets.iter().map(|b| b.nodes).sum();
        let entries: usize = budgets.iter().map(|b| b.children).sum();
        let end = base + nodes;
        if (self.fixed && end > self.capacity) || end > u32::MAX as usize {
            return Err(Error::CapacityExceeded {
                what: "node",
                capacity: self.capacity,
                requested: end,
            });
        }
        if self.fixed && pool_base + entries > self.child_capacity {
            return Err(Error::CapacityExceeded {
                what: "child pool",
                capacity: self.child_capacity,
                requested: pool_base + entries,
            });
        }

        self.values.resize(end, S::zero());
        self.grads.resize(end, S::zero());
        self.ops.resize(end, OpKind::Leaf);
        self.constants.resize(end, S::zero());
        self.child_len.resize(end, 0);
        let mut cursor = pool_base;
        for b in budgets {
            self.child_start
                .extend(std::iter::repeat_n(cursor as u32, b.nodes));
            cursor += b.children;
        }
        self.children.resize(pool_base + entries, 0);
        self.peak_nodes = self.peak_nodes.max(end);
        self.peak_children = self.peak_children.max(self.children.len());

        let (frozen, values) = self.values.split_at_mut(base);
        let node_sizes = || budgets.iter().map(|b| b.nodes);
        let values = carve(values, node_sizes());
        let ops = carve(&mut self.ops[base..], node_sizes());
        let starts = carve(&mut self.child_start[base..], node_sizes());
        let lens = carve(&mut self.child_len[base..], node_sizes());
        let consts = carve(&mut self.constants[base..], node_sizes());
        let pools = carve(&mut self.children[pool_base..], budgets.iter().map(|b| b.children));

        let frozen: &[S] = frozen;
        let mut start = base;
        let mut child_base = pool_base;
        let mut out = Vec::with_capacity(budgets.len());
        let parts = values
            .into_iter()
            .zip(ops)
            .zip(starts)
            .zip(lens)
            .zip(consts)
            .zip(pools);
        for (((((values, ops), child_start), child_len), constants), pool) in parts {
            let n = values.len();
            let m = pool.len();
            out.push(SubTape {
                frozen,
                start,
                pool_base: child_base,
                values,
                ops,
                child_start,
                child_len,
                constants,
                pool,
                used: 0,
                used_children: 0,
            });
            start += n;
            child_base += m;
        }
        Ok(out)
    }
}

impl<S: Scalar> SubTape<'_, S> {
    /// Raw index of the first slot in this region.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Nodes written so far.
    pub fn used(&self) -> usize {
        self.used
    }

    fn readable(&self, i: usize) -> bool {
        i < self.frozen.len() || (i >= self.start && i < self.start + self.used)
    }
}

impl<S: Scalar> Graph<S> for SubTape<'_, S> {
    fn value(&self, v: ValueRef) -> Result<S> {
        let i = v.index();
        if i < self.frozen.len() {
            Ok(self.frozen[i])
        } else if self.readable(i) {
            Ok(self.values[i - self.start])
        } else {
            Err(Error::InvalidHandle {
                index: i,
                live: self.start + self.used,
            })
        }
    }

    fn push_leaf(&mut self, value: S, name: Option<&str>) -> Result<ValueRef> {
        if name.is_some() {
            return Err(Error::invalid("names are not supported during concurrent append"));
        }
        self.push_node(OpKind::Leaf, std::iter::empty(), S::zero(), value)
    }

    fn push_node<I>(&mut self, op: OpKind, children: I, constant: S, value: S) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
    {
        if self.used >= self.values.len() {
            return Err(Error::CapacityExceeded {
                what: "reserved node region",
                capacity: self.values.len(),
                requested: self.used + 1,
            });
        }
        let first = self.used_children;
        let mut cursor = first;
        for c in children {
            if !self.readable(c.index()) {
                return Err(Error::InvalidHandle {
                    index: c.index(),
                    live: self.start + self.used,
                });
            }
            if cursor >= self.pool.len() {
                return Err(Error::CapacityExceeded {
                    what: "reserved child region",
                    capacity: self.pool.len(),
                    requested: cursor + 1,
                });
            }
            self.pool[cursor] = c.0;
            cursor += 1;
        }
        let k = self.used;
        self.values[k] = value;
        self.ops[k] = op;
        self.constants[k] = constant;
        self.child_start[k] = (self.pool_base + first) as u32;
        self.child_len[k] = (cursor - first) as u32;
        self.used += 1;
        self.used_children = cursor;
        Ok(ValueRef::from_raw(self.start + k))
    }
}

impl<S: Scalar> Drop for SubTape<'_, S> {
    fn drop(&mut self) {
        let cursor = (self.pool_base + self.used_children) as u32;
        for s in &mut self.child_start[self.used..] {
            *s = cursor;
        }
    }
}
