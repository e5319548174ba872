#![allow(dead_code)]

use rand::Rng;
use tapegrad::ops::Arity;
use tapegrad::{OpKind, Ops, Result, Tape, ValueRef};

/// Appends `nodes` nodes drawn over every operator kind, operands chosen
/// uniformly among earlier nodes. Draws that fail (domain errors) or blow up
/// fall back to `tanh` of an earlier node. Returns the last node.
pub fn random_graph<R: Rng>(tape: &mut Tape<f64>, rng: &mut R, nodes: usize) -> Result<ValueRef> {
    let base = tape.len();
    let mut last = tape.leaf(rng.gen_range(-2.0..2.0))?;
    while tape.len() - base < nodes {
        let live = tape.len();
        let pick = |rng: &mut R| ValueRef::from_raw(rng.gen_range(base..live));
        let kind = OpKind::ALL[rng.gen_range(0..OpKind::ALL.len())];
        let n = rng.gen_range(1..5);
        let mark = tape.checkpoint();
        let made = match kind.arity() {
            Arity::Leaf => tape.leaf(rng.gen_range(-2.0..2.0)),
            Arity::Unary => tape.unary(kind, pick(rng)),
            Arity::Binary if kind == OpKind::MulByConst => {
                let c = rng.gen_range(-2.0..2.0);
                tape.mul_by_constant(pick(rng), c)
            }
            Arity::Binary => tape.binary(kind, pick(rng), pick(rng)),
            Arity::Varying => {
                let xs: Vec<ValueRef> = (0..n).map(|_| pick(rng)).collect();
                let ys: Vec<ValueRef> = (0..n).map(|_| pick(rng)).collect();
                match kind {
                    OpKind::InnerProductNoBias => tape.inner_product(xs, ys),
                    OpKind::InnerProductWithBias => {
                        let b = pick(rng);
                        tape.inner_product_with_bias(xs, ys, b)
                    }
                    _ => tape.varying(kind, xs),
                }
            }
        };
        last = match made {
            Ok(v) if tape.value_of(v)?.abs() <= 1e3 => v,
            _ => {
                tape.rewind(mark)?;
                let x = pick(rng);
                tape.tanh(x)?
            }
        };
    }
    Ok(last)
}
