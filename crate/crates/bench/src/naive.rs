//! A deliberately plain second engine: every node is its own reference-counted
//! heap object holding its operands, and backward is a recursive topological
//! sort over a hash set followed by a reverse sweep. It shares nothing with
//! the tape's backward pass and serves as a gradient oracle and a
//! performance baseline.

use std::cell::Cell;
use std::collections::HashSet;
use std::rc::Rc;

use tapegrad::{Error, Graph, OpKind, Result, Scalar, ValueRef};

#[derive(Debug)]
pub struct NaiveNode<S: Scalar> {
    value: S,
    grad: Cell<S>,
    op: OpKind,
    constant: S,
    children: Vec<Rc<NaiveNode<S>>>,
}

impl<S: Scalar> NaiveNode<S> {
    pub fn value(&self) -> S {
        self.value
    }

    pub fn grad(&self) -> S {
        self.grad.get()
    }

    fn local(&self, k: usize) -> S {
        let x = |i: usize| self.children[i].value;
        let n = S::from_f64(self.children.len() as f64);
        let one = S::one();
        let two = S::from_f64(2.0);
        match self.op {
            OpKind::Leaf => unreachable!("leaves have no operands"),
            OpKind::Relu => {
                if x(0) > S::zero() {
                    one
                } else {
                    S::zero()
                }
            }
            OpKind::Tanh => one - self.value * self.value,
            OpKind::Exp => x(0).exp(),
            OpKind::NegLog => -one / x(0),
            OpKind::Sigmoid => {
                let s = one / (one + (-x(0)).exp());
                s * (one - s)
            }
            OpKind::Inv => -one / (x(0) * x(0)),
            OpKind::Sqr => two * x(0),
            OpKind::Cub => S::from_f64(3.0) * x(0) * x(0),
            OpKind::Log => one / x(0),
            OpKind::Sqrt => S::from_f64(0.5) / x(0).sqrt(),
            OpKind::InvSqrt => S::from_f64(-0.5) * x(0).powf(S::from_f64(-1.5)),
            OpKind::MulByConst => self.constant,
            OpKind::Add | OpKind::AddVarying => one,
            OpKind::Sub | OpKind::SubVarying => {
                if k == 0 {
                    one
                } else {
                    -one
                }
            }
            OpKind::Mul | OpKind::MulVarying => (0..self.children.len())
                .filter(|&i| i != k)
                .fold(one, |acc, i| acc * x(i)),
            OpKind::Div => {
                if k == 0 {
                    one / x(1)
                } else {
                    -x(0) / (x(1) * x(1))
                }
            }
            OpKind::Mean | OpKind::MeanVarying => one / n,
            OpKind::NegativeMean | OpKind::NegativeMeanVarying => -one / n,
            OpKind::AddSquares | OpKind::SumOfSquaresVarying => two * x(k),
            OpKind::MeanSquares | OpKind::MeanSquaresVarying => two * x(k) / n,
            OpKind::InnerProductNoBias | OpKind::InnerProductWithBias => {
                let m = self.children.len() / 2;
                if k == 2 * m {
                    one
                } else if k < m {
                    x(k + m)
                } else {
                    x(k - m)
                }
            }
        }
    }
}

/// Owns every node created since the last [`clear`](NaiveEngine::clear).
#[derive(Debug, Default)]
pub struct NaiveEngine<S: Scalar> {
    nodes: Vec<Rc<NaiveNode<S>>>,
}

impl<S: Scalar> NaiveEngine<S> {
    pub fn new() -> Self {
        NaiveEngine { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn node(&self, v: ValueRef) -> Result<&Rc<NaiveNode<S>>> {
        self.nodes.get(v.index()).ok_or(Error::InvalidHandle {
            index: v.index(),
            live: self.nodes.len(),
        })
    }

    pub fn grad(&self, v: ValueRef) -> Result<S> {
        Ok(self.node(v)?.grad())
    }

    /// Gradient of `root` with respect to everything it depends on.
    pub fn backward(&self, root: ValueRef) -> Result<()> {
        let root = self.node(root)?.clone();
        let mut topo = Vec::new();
        let mut seen = HashSet::new();
        build_topo(&root, &mut seen, &mut topo);
        for n in &topo {
            n.grad.set(S::zero());
        }
        root.grad.set(S::one());
        for n in topo.iter().rev() {
            let g = n.grad.get();
            for (k, c) in n.children.iter().enumerate() {
                c.grad.set(c.grad.get() + g * n.local(k));
            }
        }
        Ok(())
    }
}

fn build_topo<S: Scalar>(
    n: &Rc<NaiveNode<S>>,
    seen: &mut HashSet<*const NaiveNode<S>>,
    topo: &mut Vec<Rc<NaiveNode<S>>>,
) {
    if seen.insert(Rc::as_ptr(n)) {
        for c in &n.children {
            build_topo(c, seen, topo);
        }
        topo.push(n.clone());
    }
}

impl<S: Scalar> Graph<S> for NaiveEngine<S> {
    fn value(&self, v: ValueRef) -> Result<S> {
        Ok(self.node(v)?.value)
    }

    fn push_leaf(&mut self, value: S, _name: Option<&str>) -> Result<ValueRef> {
        self.push_node(OpKind::Leaf, std::iter::empty(), S::zero(), value)
    }

    fn push_node<I>(&mut self, op: OpKind, children: I, constant: S, value: S) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
    {
        let children = children
            .into_iter()
            .map(|c| self.node(c).cloned())
            .collect::<Result<Vec<_>>>()?;
        self.nodes.push(Rc::new(NaiveNode {
            value,
            grad: Cell::new(S::zero()),
            op,
            constant,
            children,
        }));
        Ok(ValueRef::from_raw(self.nodes.len() - 1))
    }
}
