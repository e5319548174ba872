//! The fixed expression graphs used by the benchmarks, plus a generator of
//! random graphs covering every operator.

use rand::Rng;
use tapegrad::{OpKind, Ops, Result, Scalar, Tape, ValueRef};

/// `g = (a + b - (a*b + b^3))^2 / 2` evaluated at `a = -41`, `b = 2`.
#[derive(Debug, Clone, Copy)]
pub struct TinyGraph {
    pub a: ValueRef,
    pub b: ValueRef,
    pub g: ValueRef,
}

pub const TINY_NODES: usize = 10;
pub const TINY_G: f64 = 612.5;
pub const TINY_GRAD_A: f64 = -35.0;
pub const TINY_GRAD_B: f64 = 1050.0;

pub fn build_tiny<S: Scalar, G: Ops<S> + ?Sized>(g: &mut G, a: f64, b: f64) -> Result<TinyGraph> {
    let a = g.leaf(S::from_f64(a))?;
    let b = g.leaf(S::from_f64(b))?;
    let c = g.add(a, b)?;
    let ab = g.mul(a, b)?;
    let b3 = g.pow3(b)?;
    let d = g.add(ab, b3)?;
    let e = g.sub(c, d)?;
    let f = g.sqr(e)?;
    let two = g.leaf(S::from_f64(2.0))?;
    let out = g.div(f, two)?;
    Ok(TinyGraph { a, b, g: out })
}

/// A 32-node expression built with in-place updates, at `a = -4`, `b = 2`.
#[derive(Debug, Clone, Copy)]
pub struct SmallGraph {
    pub a: ValueRef,
    pub b: ValueRef,
    pub g: ValueRef,
    /// `a, b, c, d, e, f, g`: the values a checkpointing user would persist.
    pub activations: [ValueRef; 7],
}

pub const SMALL_NODES: usize = 32;
pub const SMALL_EDGES: usize = 44;

pub fn build_small<S: Scalar, G: Ops<S> + ?Sized>(g: &mut G, a: f64, b: f64) -> Result<SmallGraph> {
    let k = |g: &mut G, v: f64| g.leaf(S::from_f64(v));
    let a = k(g, a)?;
    let b = k(g, b)?;
    let mut c = g.add(a, b)?;
    let ab = g.mul(a, b)?;
    let b3 = g.pow3(b)?;
    let mut d = g.add(ab, b3)?;

    let one = k(g, 1.0)?;
    let t = g.add(c, one)?;
    g.add_inplace(&mut c, t)?;

    let one = k(g, 1.0)?;
    let t = g.add(one, c)?;
    let t = g.sub(t, a)?;
    g.add_inplace(&mut c, t)?;

    let two = k(g, 2.0)?;
    let t = g.mul(d, two)?;
    let ba = g.add(b, a)?;
    let r = g.relu(ba)?;
    let t = g.add(t, r)?;
    g.add_inplace(&mut d, t)?;

    let three = k(g, 3.0)?;
    let t = g.mul(three, d)?;
    let bma = g.sub(b, a)?;
    let r = g.relu(bma)?;
    let t = g.add(t, r)?;
    g.add_inplace(&mut d, t)?;

    let e = g.sub(c, d)?;
    let f = g.sqr(e)?;
    let two = k(g, 2.0)?;
    let mut out = g.div(f, two)?;
    let ten = k(g, 10.0)?;
    let t = g.div(ten, f)?;
    g.add_inplace(&mut out, t)?;

    Ok(SmallGraph {
        a,
        b,
        g: out,
        activations: [a, b, c, d, e, f, out],
    })
}

const BOUND: f64 = 1e3;

fn pick<R: Rng + ?Sized>(rng: &mut R, len: usize) -> ValueRef {
    // Favour recent nodes so graphs grow deep as well as wide.
    let lo = len.saturating_sub(12);
    if rng.gen_bool(0.7) {
        ValueRef::from_raw(rng.gen_range(lo..len))
    } else {
        ValueRef::from_raw(rng.gen_range(0..len))
    }
}

fn picks<R: Rng + ?Sized>(rng: &mut R, len: usize, n: usize) -> Vec<ValueRef> {
    (0..n).map(|_| pick(rng, len)).collect()
}

fn try_op<S: Scalar, R: Rng + ?Sized>(tape: &mut Tape<S>, kind: OpKind, rng: &mut R) -> Result<ValueRef> {
    let len = tape.len();
    match kind {
        OpKind::Leaf => tape.leaf(S::from_f64(rng.gen_range(-2.0..2.0))),
        k if OpKind::UNARY.contains(&k) => tape.unary(k, pick(rng, len)),
        OpKind::MulByConst => tape.mul_by_constant(pick(rng, len), S::from_f64(rng.gen_range(-2.0..2.0))),
        k if OpKind::BINARY.contains(&k) => tape.binary(k, pick(rng, len), pick(rng, len)),
        OpKind::InnerProductNoBias => {
            let n = rng.gen_range(1..=5);
            tape.inner_product(picks(rng, len, n), picks(rng, len, n))
        }
        OpKind::InnerProductWithBias => {
            let n = rng.gen_range(1..=5);
            let b = pick(rng, len);
            tape.inner_product_with_bias(picks(rng, len, n), picks(rng, len, n), b)
        }
        k => {
            let n = rng.gen_range(1..=6);
            tape.varying(k, picks(rng, len, n))
        }
    }
}

/// Appends a random graph of exactly `nodes` nodes (at least 2) and returns
/// its last node. Every operator kind is drawn with equal probability;
/// draws that fail their domain check or leave `[-1e3, 1e3]` are replaced by
/// a `tanh` of an existing node.
pub fn random_graph<S: Scalar, R: Rng + ?Sized>(tape: &mut Tape<S>, rng: &mut R, nodes: usize) -> Result<ValueRef> {
    let nodes = nodes.max(2);
    let base = tape.len();
    let leaves = rng.gen_range(1..=nodes.min(6));
    let mut last = tape.leaf(S::from_f64(rng.gen_range(-2.0..2.0)))?;
    for _ in 1..leaves {
        last = tape.leaf(S::from_f64(rng.gen_range(-2.0..2.0)))?;
    }
    while tape.len() - base < nodes {
        let kind = OpKind::ALL[rng.gen_range(0..OpKind::ALL.len())];
        let cp = tape.checkpoint();
        last = match try_op(tape, kind, rng) {
            Ok(v) if tape.value_of(v)?.to_f64().abs() <= BOUND => v,
            _ => {
                tape.rewind(cp)?;
                let len = tape.len();
                tape.tanh(pick(rng, len))?
            }
        };
    }
    Ok(last)
}
