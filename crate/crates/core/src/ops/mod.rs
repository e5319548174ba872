//! Scalar operators.
//!
//! Every constructor evaluates its forward value immediately and appends one
//! node (derived helpers append a few). Local derivatives are not stored;
//! backpropagation recomputes them from child values, see [`local`].

mod kind;
pub mod local;

pub use kind::{Arity, OpKind};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Graph, ValueRef};

/// In-place operator family. Each call appends a fresh node and rebinds the
/// caller's handle to it; no existing node is modified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InplaceOp {
    AddInplace,
    SubInplace,
    MultInplace,
    DivInplace,
}

impl InplaceOp {
    pub const fn binary(self) -> OpKind {
        match self {
            InplaceOp::AddInplace => OpKind::Add,
            InplaceOp::SubInplace => OpKind::Sub,
            InplaceOp::MultInplace => OpKind::Mul,
            InplaceOp::DivInplace => OpKind::Div,
        }
    }
}

fn domain<S: Scalar>(op: OpKind, value: S) -> Error {
    Error::Domain {
        op: op.mnemonic(),
        value: value.to_f64(),
    }
}

/// Forward rule of a unary operator.
#[inline(always)]
pub fn eval_unary<S: Scalar>(kind: OpKind, x: S) -> Result<S> {
    let zero = S::zero();
    let one = S::one();
    Ok(match kind {
        OpKind::Relu => {
            if x > zero {
                x
            } else {
                zero
            }
        }
        OpKind::Tanh => x.tanh(),
        OpKind::Exp => x.exp(),
        OpKind::NegLog if x > zero => -x.ln(),
        OpKind::Sigmoid => one / (one + (-x).exp()),
        OpKind::Inv if x != zero => one / x,
        OpKind::Sqr => x * x,
        OpKind::Cub => x * x * x,
        OpKind::Log if x > zero => x.ln(),
        OpKind::Sqrt if x > zero => x.sqrt(),
        OpKind::InvSqrt if x > zero => one / x.sqrt(),
        OpKind::NegLog | OpKind::Inv | OpKind::Log | OpKind::Sqrt | OpKind::InvSqrt => {
            return Err(domain(kind, x))
        }
        other => {
            return Err(Error::invalid(format!(
                "{other} is not a unary operator"
            )))
        }
    })
}

/// Forward rule of a two-operand operator.
#[inline(always)]
pub fn eval_binary<S: Scalar>(kind: OpKind, x: S, y: S) -> Result<S> {
    let two = S::from_f64(2.0);
    Ok(match kind {
        OpKind::Add => x + y,
        OpKind::Sub => x - y,
        OpKind::Mul => x * y,
        OpKind::Div if y != S::zero() => x / y,
        OpKind::Div => return Err(domain(kind, y)),
        OpKind::Mean => (x + y) / two,
        OpKind::AddSquares => x * x + y * y,
        OpKind::MeanSquares => (x * x + y * y) / two,
        OpKind::NegativeMean => -(x + y) / two,
        OpKind::MulByConst => {
            return Err(Error::invalid(
                "mulByConstant takes a constant operand, use mul_by_constant",
            ))
        }
        other => {
            return Err(Error::invalid(format!(
                "{other} is not a binary operator"
            )))
        }
    })
}

/// Forward rule of a single-sequence reduction. Accumulates left to right.
pub fn eval_reduction<S: Scalar>(kind: OpKind, xs: impl IntoIterator<Item = S>) -> Result<S> {
    let mut it = xs.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::invalid(format!("{kind} needs at least one operand")))?;
    let mut n = 1usize;
    let mut acc = match kind {
        OpKind::AddVarying
        | OpKind::SubVarying
        | OpKind::MulVarying
        | OpKind::MeanVarying
        | OpKind::NegativeMeanVarying => first,
        OpKind::SumOfSquaresVarying | OpKind::MeanSquaresVarying => first * first,
        other => {
            return Err(Error::invalid(format!(
                "{other} is not a single-sequence reduction"
            )))
        }
    };
    for x in it {
        n += 1;
        acc = match kind {
            OpKind::AddVarying | OpKind::MeanVarying | OpKind::NegativeMeanVarying => acc + x,
            OpKind::SubVarying => acc - x,
            OpKind::MulVarying => acc * x,
            _ => acc + x * x,
        };
    }
    let n = S::from_f64(n as f64);
    Ok(match kind {
        OpKind::MeanVarying | OpKind::MeanSquaresVarying => acc / n,
        OpKind::NegativeMeanVarying => -(acc / n),
        _ => acc,
    })
}

/// Operator constructors, available on every [`Graph`].
pub trait Ops<S: Scalar>: Graph<S> {
    #[inline(always)]
    fn leaf(&mut self, value: S) -> Result<ValueRef> {
        self.push_leaf(value, None)
    }

    #[inline(always)]
    fn named_leaf(&mut self, value: S, name: &str) -> Result<ValueRef> {
        self.push_leaf(value, Some(name))
    }

    #[inline(always)]
    fn unary(&mut self, kind: OpKind, x: ValueRef) -> Result<ValueRef> {
        if kind.arity() != Arity::Unary {
            return Err(Error::invalid(format!("{kind} is not a unary operator")));
        }
        let y = eval_unary(kind, self.value(x)?)?;
        self.push_unary(kind, x, S::zero(), y)
    }

    #[inline(always)]
    fn relu(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Relu, x)
    }
    #[inline(always)]
    fn tanh(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Tanh, x)
    }
    #[inline(always)]
    fn exp(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Exp, x)
    }
    #[inline(always)]
    fn neg_log(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::NegLog, x)
    }
    #[inline(always)]
    fn sigmoid(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Sigmoid, x)
    }
    #[inline(always)]
    fn inv(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Inv, x)
    }
    #[inline(always)]
    fn sqr(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Sqr, x)
    }
    #[inline(always)]
    fn pow3(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Cub, x)
    }
    #[inline(always)]
    fn log(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Log, x)
    }
    #[inline(always)]
    fn sqrt(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::Sqrt, x)
    }
    #[inline(always)]
    fn inv_sqrt(&mut self, x: ValueRef) -> Result<ValueRef> {
        self.unary(OpKind::InvSqrt, x)
    }

    #[inline(always)]
    fn binary(&mut self, kind: OpKind, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        if kind.arity() != Arity::Binary {
            return Err(Error::invalid(format!("{kind} is not a binary operator")));
        }
        let v = eval_binary(kind, self.value(x)?, self.value(y)?)?;
        self.push_binary(kind, x, y, v)
    }

    #[inline(always)]
    fn add(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::Add, x, y)
    }
    #[inline(always)]
    fn sub(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::Sub, x, y)
    }
    #[inline(always)]
    fn mul(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::Mul, x, y)
    }
    #[inline(always)]
    fn div(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::Div, x, y)
    }
    #[inline(always)]
    fn mean(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::Mean, x, y)
    }
    #[inline(always)]
    fn add_squares(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::AddSquares, x, y)
    }
    #[inline(always)]
    fn mean_squares(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::MeanSquares, x, y)
    }
    #[inline(always)]
    fn negative_mean(&mut self, x: ValueRef, y: ValueRef) -> Result<ValueRef> {
        self.binary(OpKind::NegativeMean, x, y)
    }

    /// `x * c`; `c` is stored on the node and receives no gradient.
    #[inline(always)]
    fn mul_by_constant(&mut self, x: ValueRef, c: S) -> Result<ValueRef> {
        let v = self.value(x)? * c;
        self.push_unary(OpKind::MulByConst, x, c, v)
    }

    #[inline(always)]
    fn varying<I>(&mut self, kind: OpKind, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        if matches!(kind, OpKind::InnerProductNoBias | OpKind::InnerProductWithBias) {
            return Err(Error::invalid(format!(
                "{kind} takes two sequences, use inner_product"
            )));
        }
        if kind.arity() != Arity::Varying {
            return Err(Error::invalid(format!("{kind} is not a varying operator")));
        }
        let xs = xs.into_iter();
        let mut err = None;
        let values = xs.clone().map_while(|x| match self.value(x) {
            Ok(v) => Some(v),
            Err(e) => {
                err = Some(e);
                None
            }
        });
        let v = eval_reduction(kind, values);
        if let Some(e) = err {
            return Err(e);
        }
        self.push_node(kind, xs, S::zero(), v?)
    }

    #[inline(always)]
    fn reduce_sum<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::AddVarying, xs)
    }
    #[inline(always)]
    fn reduce_sub<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::SubVarying, xs)
    }
    #[inline(always)]
    fn reduce_mul<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::MulVarying, xs)
    }
    #[inline(always)]
    fn reduce_mean<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::MeanVarying, xs)
    }
    #[inline(always)]
    fn reduce_sum_of_squares<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::SumOfSquaresVarying, xs)
    }
    #[inline(always)]
    fn reduce_mean_squares<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::MeanSquaresVarying, xs)
    }
    #[inline(always)]
    fn reduce_negative_mean<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        self.varying(OpKind::NegativeMeanVarying, xs)
    }

    /// `<xs, ys>`, with an optional bias term added last.
    #[inline(always)]
    fn inner_product_opt<I, J>(&mut self, xs: I, ys: J, bias: Option<ValueRef>) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
        J: IntoIterator<Item = ValueRef>,
        J::IntoIter: Clone,
    {
        let xs = xs.into_iter();
        let ys = ys.into_iter();
        let mut n = 0usize;
        let mut acc = S::zero();
        let mut x_it = xs.clone();
        let mut y_it = ys.clone();
        loop {
            match (x_it.next(), y_it.next()) {
                (Some(x), Some(y)) => {
                    let p = self.value(x)? * self.value(y)?;
                    acc = if n == 0 { p } else { acc + p };
                    n += 1;
                }
                (None, None) => break,
                _ => {
                    return Err(Error::invalid(
                        "inner product operands have different lengths",
                    ))
                }
            }
        }
        if n == 0 {
            return Err(Error::invalid("inner product needs at least one pair"));
        }
        match bias {
            Some(b) => {
                let v = acc + self.value(b)?;
                self.push_node(
                    OpKind::InnerProductWithBias,
                    xs.chain(ys).chain(std::iter::once(b)),
                    S::zero(),
                    v,
                )
            }
            None => self.push_node(OpKind::InnerProductNoBias, xs.chain(ys), S::zero(), acc),
        }
    }

    #[inline(always)]
    fn inner_product<I, J>(&mut self, xs: I, ys: J) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
        J: IntoIterator<Item = ValueRef>,
        J::IntoIter: Clone,
    {
        self.inner_product_opt(xs, ys, None)
    }

    #[inline(always)]
    fn inner_product_with_bias<I, J>(&mut self, xs: I, ys: J, b: ValueRef) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
        J: IntoIterator<Item = ValueRef>,
        J::IntoIter: Clone,
    {
        self.inner_product_opt(xs, ys, Some(b))
    }

    /// Rebinds `slot` to `slot <op> y`. On error `slot` keeps its old node.
    #[inline(always)]
    fn inplace(&mut self, op: InplaceOp, slot: &mut ValueRef, y: ValueRef) -> Result<()> {
        *slot = self.binary(op.binary(), *slot, y)?;
        Ok(())
    }

    #[inline(always)]
    fn add_inplace(&mut self, slot: &mut ValueRef, y: ValueRef) -> Result<()> {
        self.inplace(InplaceOp::AddInplace, slot, y)
    }
    #[inline(always)]
    fn sub_inplace(&mut self, slot: &mut ValueRef, y: ValueRef) -> Result<()> {
        self.inplace(InplaceOp::SubInplace, slot, y)
    }
    #[inline(always)]
    fn mult_inplace(&mut self, slot: &mut ValueRef, y: ValueRef) -> Result<()> {
        self.inplace(InplaceOp::MultInplace, slot, y)
    }
    #[inline(always)]
    fn div_inplace(&mut self, slot: &mut ValueRef, y: ValueRef) -> Result<()> {
        self.inplace(InplaceOp::DivInplace, slot, y)
    }

    /// Mean and mean of squares as two nodes, with values from one pass.
    #[inline(always)]
    fn reduce_mean_and_mean_squares<I>(&mut self, xs: I) -> Result<(ValueRef, ValueRef)>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        let xs = xs.into_iter();
        let mut n = 0usize;
        let (mut sum, mut sum_sq) = (S::zero(), S::zero());
        for x in xs.clone() {
            let v = self.value(x)?;
            if n == 0 {
                sum = v;
                sum_sq = v * v;
            } else {
                sum = sum + v;
                sum_sq = sum_sq + v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("mean of an empty sequence"));
        }
        let count = S::from_f64(n as f64);
        let mean = self.push_node(OpKind::MeanVarying, xs.clone(), S::zero(), sum / count)?;
        let mean_sq = self.push_node(OpKind::MeanSquaresVarying, xs, S::zero(), sum_sq / count)?;
        Ok((mean, mean_sq))
    }

    /// `mean(x^2) - mean(x)^2`.
    #[inline(always)]
    fn variance_biased<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        let (mean, mean_sq) = self.reduce_mean_and_mean_squares(xs)?;
        let mean2 = self.sqr(mean)?;
        self.sub(mean_sq, mean2)
    }

    /// Unbiased variance, `n/(n-1)` times the biased one.
    #[inline(always)]
    fn variance<I>(&mut self, xs: I) -> Result<ValueRef>
    where
        I: IntoIterator<Item = ValueRef>,
        I::IntoIter: Clone,
    {
        let xs = xs.into_iter();
        let n = xs.clone().count();
        if n < 2 {
            return Err(Error::invalid(format!(
                "unbiased variance needs at least two operands, got {n}"
            )));
        }
        let biased = self.variance_biased(xs)?;
        self.mul_by_constant(biased, S::from_f64(n as f64 / (n as f64 - 1.0)))
    }
}

impl<S: Scalar, G: Graph<S> + ?Sized> Ops<S> for G {}
