//! Reverse-mode propagation over a tape.
//!
//! Both variants derive the same reverse topological order by depth-first
//! traversal from the root, visiting children in operand order, so they
//! accumulate gradient contributions in the same sequence and agree
//! bit-for-bit. Nodes without children are collected separately: they need
//! no propagation step.
//!
//! Gradients of reached interior nodes are reset during traversal, so only
//! childless nodes accumulate across repeated calls.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::ops::{local, OpKind};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueRef};

/// Caller-owned storage for [`Tape::backward_with_scratch`].
///
/// Reuse one instance across calls. Sized with [`ScratchBuffers::for_tape`]
/// (or after a first call) a backward pass performs no allocation. In fixed
/// mode the buffers never grow and an undersized buffer is an error.
#[derive(Debug, Clone, Default)]
pub struct ScratchBuffers<S> {
    // Kept at full length; the live prefix is tracked separately.
    order: Vec<u32>,
    order_len: usize,
    leaves: Vec<u32>,
    leaves_len: usize,
    stack: Vec<[u32; 3]>,
    visited: Vec<u32>,
    epoch: u32,
    products: Vec<S>,
    fixed: bool,
}

impl<S: Scalar> ScratchBuffers<S> {
    pub fn new() -> Self {
        Self {
            order: Vec::new(),
            order_len: 0,
            leaves: Vec::new(),
            leaves_len: 0,
            stack: Vec::new(),
            visited: Vec::new(),
            epoch: 0,
            products: Vec::new(),
            fixed: false,
        }
    }

    /// Growable buffers with room for graphs of `nodes` nodes whose widest
    /// `reduceMul` has `max_product_arity` operands.
    pub fn with_capacity(nodes: usize, max_product_arity: usize) -> Self {
        Self {
            order: vec![0; nodes],
            order_len: 0,
            leaves: vec![0; nodes],
            leaves_len: 0,
            stack: vec![[0; 3]; nodes],
            visited: vec![0; nodes],
            epoch: 0,
            products: Vec::with_capacity(max_product_arity),
            fixed: false,
        }
    }

    /// Like [`with_capacity`](Self::with_capacity) but never grows.
    pub fn fixed(nodes: usize, max_product_arity: usize) -> Self {
        Self {
            fixed: true,
            ..Self::with_capacity(nodes, max_product_arity)
        }
    }

    /// Growable buffers sized for any root on `tape` as it is now.
    pub fn for_tape(tape: &Tape<S>) -> Self {
        let widest = (0..tape.len())
            .filter(|&i| tape.ops[i] == OpKind::MulVarying)
            .map(|i| tape.child_len[i] as usize)
            .max()
            .unwrap_or(0);
        Self::with_capacity(tape.len(), widest)
    }

    pub fn is_fixed(&self) -> bool {
        self.fixed
    }

    /// Interior nodes of the last traversal in post-order (children first).
    /// Propagation runs over it back to front.
    pub fn order(&self) -> &[u32] {
        &self.order[..self.order_len]
    }

    /// Childless nodes reached by the last traversal.
    pub fn leaves(&self) -> &[u32] {
        &self.leaves[..self.leaves_len]
    }

    /// Nodes reached by the last traversal, root included.
    pub fn processed(&self) -> usize {
        self.order_len + self.leaves_len
    }
}

/// Grows `buf` to `required` entries, or in fixed mode reports that it is
/// too short.
fn fit<T: Clone>(fixed: bool, buffer: &'static str, buf: &mut Vec<T>, required: usize, fill: T) -> Result<()> {
    if buf.len() >= required {
        return Ok(());
    }
    if fixed {
        return Err(Error::ScratchCapacity {
            buffer,
            required,
            available: buf.len(),
        });
    }
    buf.resize(required, fill);
    Ok(())
}

/// Applies the chain rule to every node of `order`, back to front.
fn propagate<S: Scalar>(tape: &mut Tape<S>, order: &[u32], products: &mut Vec<S>) {
    let Tape {
        values,
        grads,
        ops,
        child_start,
        child_len,
        constants,
        children,
        ..
    } = tape;
    for &n in order.iter().rev() {
        let n = n as usize;
        let g = grads[n];
        let start = child_start[n] as usize;
        let kids = &children[start..start + child_len[n] as usize];
        local::for_each(
            ops[n],
            values,
            kids,
            constants[n],
            values[n],
            products,
            |_, c, d| grads[c as usize] = grads[c as usize] + g * d,
        );
    }
}

/// Iterative depth-first post-order from `r`. Interior nodes land in
/// `order` (children first) with their gradient reset, childless nodes in
/// `leaves`. Children are visited in operand order, as in the recursive
/// variant. Returns how many entries of `order` and `leaves` were written.
#[allow(clippy::too_many_arguments)]
fn traverse<S: Scalar>(
    tape: &mut Tape<S>,
    r: usize,
    epoch: u32,
    visited: &mut [u32],
    order: &mut [u32],
    leaves: &mut [u32],
    stack: &mut [[u32; 3]],
    product_limit: Option<usize>,
) -> Result<(usize, usize)> {
    let Tape {
        grads,
        ops,
        child_start,
        child_len,
        children,
        ..
    } = tape;
    let (grads, ops) = (&mut grads[..], &ops[..]);
    let (child_start, child_len, children) = (&child_start[..], &child_len[..], &children[..]);
    let check_products = |n: usize| -> Result<()> {
        match product_limit {
            Some(available) if ops[n] == OpKind::MulVarying && (child_len[n] as usize) > available => {
                Err(Error::ScratchCapacity {
                    buffer: "products",
                    required: child_len[n] as usize,
                    available,
                })
            }
            _ => Ok(()),
        }
    };

    visited[r] = epoch;
    if child_len[r] == 0 {
        leaves[0] = r as u32;
        return Ok((0, 1));
    }
    check_products(r)?;
    let (mut n_order, mut n_leaves, mut depth) = (0, 0, 0);
    // The frame being scanned: node, next child slot, end of its children.
    let (mut n, mut pos) = (r as u32, child_start[r]);
    let mut end = pos + child_len[r];
    loop {
        if pos < end {
            let c = children[pos as usize];
            pos += 1;
            let ci = c as usize;
            if visited[ci] == epoch {
                continue;
            }
            visited[ci] = epoch;
            let len = child_len[ci];
            if len == 0 {
                leaves[n_leaves] = c;
                n_leaves += 1;
                continue;
            }
            check_products(ci)?;
            grads[ci] = S::zero();
            stack[depth] = [n, pos, end];
            depth += 1;
            n = c;
            pos = child_start[ci];
            end = pos + len;
        } else {
            order[n_order] = n;
            n_order += 1;
            if depth == 0 {
                break;
            }
            depth -= 1;
            [n, pos, end] = stack[depth];
        }
    }
    Ok((n_order, n_leaves))
}

impl<S: Scalar> Tape<S> {
    /// Plain backpropagation from `root`: recursive traversal and fresh
    /// buffers on every call. Recursion depth equals the longest path below
    /// the root; use [`backward_with_scratch`](Self::backward_with_scratch)
    /// for deep graphs.
    ///
    /// Seeds `grad(root) = 1`, recomputes the gradient of every reachable
    /// interior node and adds `d root / d leaf` into the gradient of every
    /// reachable childless node. Callers zero leaf gradients beforehand unless
    /// they want accumulation.
    pub fn backward(&mut self, root: ValueRef) -> Result<()> {
        let r = self.check(root)?;
        let mut visited = vec![false; r + 1];
        let mut order = Vec::new();
        let mut leaves = Vec::new();
        visited[r] = true;
        if self.child_len[r] == 0 {
            leaves.push(r as u32);
        } else {
            self.visit(r, &mut visited, &mut order, &mut leaves);
        }
        self.grads[r] = S::one();
        let mut products = Vec::new();
        propagate(self, &order, &mut products);
        Ok(())
    }

    fn visit(&mut self, n: usize, visited: &mut [bool], order: &mut Vec<u32>, leaves: &mut Vec<u32>) {
        let start = self.child_start[n] as usize;
        for k in start..start + self.child_len[n] as usize {
            let c = self.children[k] as usize;
            if !visited[c] {
                visited[c] = true;
                if self.child_len[c] == 0 {
                    leaves.push(c as u32);
                } else {
                    self.grads[c] = S::zero();
                    self.visit(c, visited, order, leaves);
                }
            }
        }
        order.push(n as u32);
    }

    /// Backpropagation using only caller-provided storage and an explicit
    /// traversal stack. Produces exactly the gradients of
    /// [`backward`](Self::backward).
    pub fn backward_with_scratch(
        &mut self,
        root: ValueRef,
        scratch: &mut ScratchBuffers<S>,
    ) -> Result<()> {
        let r = self.check(root)?;
        let need = r + 1;
        scratch.order_len = 0;
        scratch.leaves_len = 0;
        let fixed = scratch.fixed;
        let ScratchBuffers {
            order,
            order_len,
            leaves,
            leaves_len,
            stack,
            visited,
            epoch,
            products,
            ..
        } = scratch;
        fit(fixed, "order", order, need, 0)?;
        fit(fixed, "leaves", leaves, need, 0)?;
        fit(fixed, "stack", stack, need, [0; 3])?;
        fit(fixed, "visited", visited, need, 0)?;
        *epoch = epoch.wrapping_add(1);
        if *epoch == 0 {
            visited.fill(0);
            *epoch = 1;
        }
        let product_limit = fixed.then(|| products.capacity());
        (*order_len, *leaves_len) = traverse(self, r, *epoch, visited, order, leaves, stack, product_limit)?;

        self.grads[r] = S::one();
        propagate(self, &order[..*order_len], products);
        Ok(())
    }

    /// Sets the gradients of nodes in `range` to zero.
    pub fn zero_grads(&mut self, range: Range<usize>) -> Result<()> {
        self.check_range(&range)?;
        self.grads[range].fill(S::zero());
        Ok(())
    }

    pub fn zero_all_grads(&mut self) {
        self.grads.fill(S::zero());
    }

    /// Partial derivatives of `v` with respect to each of its children, in
    /// operand order.
    pub fn local_derivatives(&self, v: ValueRef) -> Result<Vec<S>> {
        let i = self.check(v)?;
        Ok(local::collect(self, i))
    }
}
