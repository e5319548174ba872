//! Local partial derivatives of each node with respect to its children.

use super::OpKind;
use crate::scalar::Scalar;

/// Calls `emit(k, child, d)` with the partial derivative `d` of node output
/// `y` with respect to its `k`-th child, for every child in operand order.
///
/// `values` is the tape's value buffer, `children` the node's child indices.
/// `products` is scratch for the zero-safe product rule of `reduceMul`; it is
/// resized to the node's arity and never shrunk.
#[inline]
pub fn for_each<S: Scalar>(
    op: OpKind,
    values: &[S],
    children: &[u32],
    constant: S,
    y: S,
    products: &mut Vec<S>,
    mut emit: impl FnMut(usize, u32, S),
) {
    let zero = S::zero();
    let one = S::one();
    let two = S::from_f64(2.0);
    let half = S::from_f64(0.5);
    let x = |k: usize| values[children[k] as usize];
    match op {
        OpKind::Leaf => {}
        OpKind::Relu => emit(0, children[0], if x(0) > zero { one } else { zero }),
        OpKind::Tanh => emit(0, children[0], one - y * y),
        OpKind::Exp => emit(0, children[0], y),
        OpKind::NegLog => emit(0, children[0], -(one / x(0))),
        OpKind::Sigmoid => emit(0, children[0], y * (one - y)),
        OpKind::Inv => emit(0, children[0], -(y * y)),
        OpKind::Sqr => emit(0, children[0], two * x(0)),
        OpKind::Cub => {
            let v = x(0);
            emit(0, children[0], S::from_f64(3.0) * v * v)
        }
        OpKind::Log => emit(0, children[0], one / x(0)),
        OpKind::Sqrt => emit(0, children[0], one / (two * y)),
        OpKind::InvSqrt => emit(0, children[0], -y / (two * x(0))),
        OpKind::MulByConst => emit(0, children[0], constant),
        OpKind::Add => {
            emit(0, children[0], one);
            emit(1, children[1], one);
        }
        OpKind::Sub => {
            emit(0, children[0], one);
            emit(1, children[1], -one);
        }
        OpKind::Mul => {
            emit(0, children[0], x(1));
            emit(1, children[1], x(0));
        }
        OpKind::Div => {
            let d = x(1);
            emit(0, children[0], one / d);
            emit(1, children[1], -x(0) / (d * d));
        }
        OpKind::Mean => {
            emit(0, children[0], half);
            emit(1, children[1], half);
        }
        OpKind::AddSquares => {
            emit(0, children[0], two * x(0));
            emit(1, children[1], two * x(1));
        }
        OpKind::MeanSquares => {
            emit(0, children[0], x(0));
            emit(1, children[1], x(1));
        }
        OpKind::NegativeMean => {
            emit(0, children[0], -half);
            emit(1, children[1], -half);
        }
        OpKind::AddVarying => {
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, one);
            }
        }
        OpKind::SubVarying => {
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, if k == 0 { one } else { -one });
            }
        }
        OpKind::MulVarying => {
            let n = children.len();
            products.resize(n, zero);
            let mut suffix = one;
            for k in (0..n).rev() {
                products[k] = suffix;
                suffix = suffix * x(k);
            }
            let mut prefix = one;
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, prefix * products[k]);
                prefix = prefix * x(k);
            }
        }
        OpKind::MeanVarying => {
            let d = one / S::from_f64(children.len() as f64);
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, d);
            }
        }
        OpKind::SumOfSquaresVarying => {
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, two * values[c as usize]);
            }
        }
        OpKind::MeanSquaresVarying => {
            let n = S::from_f64(children.len() as f64);
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, two * values[c as usize] / n);
            }
        }
        OpKind::NegativeMeanVarying => {
            let d = -(one / S::from_f64(children.len() as f64));
            for (k, &c) in children.iter().enumerate() {
                emit(k, c, d);
            }
        }
        OpKind::InnerProductNoBias | OpKind::InnerProductWithBias => {
            let n = children.len() / 2;
            let (xs, rest) = children.split_at(n);
            let ys = &rest[..n];
            for (k, (&cx, &cy)) in xs.iter().zip(ys).enumerate() {
                emit(k, cx, values[cy as usize]);
                emit(n + k, cy, values[cx as usize]);
            }
            if op == OpKind::InnerProductWithBias {
                emit(2 * n, children[2 * n], one);
            }
        }
    }
}

/// Allocating convenience wrapper: every local derivative of node `i`.
pub fn collect<S: Scalar>(tape: &crate::Tape<S>, i: usize) -> Vec<S> {
    let mut out = vec![S::zero(); tape.child_len[i] as usize];
    let mut products = Vec::new();
    for_each(
        tape.ops[i],
        &tape.values,
        tape.child_slice(i),
        tape.constants[i],
        tape.values[i],
        &mut products,
        |k, _, d| out[k] = d,
    );
    out
}
