//! Network building blocks composed from scalar operators.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::Ops;
use crate::scalar::Scalar;
use crate::tape::{Graph, ParamRange, ValueRef};

/// One stretch of a [`ViewSeq`].
#[derive(Debug, Clone, Copy)]
pub enum Segment<'a> {
    /// Consecutive raw indices `start..start + len`.
    Range { start: usize, len: usize },
    /// Borrowed handles.
    Refs(&'a [ValueRef]),
}

impl Segment<'_> {
    fn len(&self) -> usize {
        match self {
            Segment::Range { len, .. } => *len,
            Segment::Refs(r) => r.len(),
        }
    }

    fn get(&self, k: usize) -> ValueRef {
        match self {
            Segment::Range { start, .. } => ValueRef::from_raw(start + k),
            Segment::Refs(r) => r[k],
        }
    }
}

/// Logical concatenation of node runs. Indexing remaps into the segments;
/// nothing is copied and no nodes are created.
#[derive(Debug, Clone, Default)]
pub struct ViewSeq<'a> {
    segments: Vec<Segment<'a>>,
    len: usize,
}

impl<'a> ViewSeq<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_refs(refs: &'a [ValueRef]) -> Self {
        let mut v = Self::new();
        v.push_refs(refs);
        v
    }

    pub fn from_range(range: ParamRange) -> Self {
        let mut v = Self::new();
        v.push_range(range);
        v
    }

    pub fn push_refs(&mut self, refs: &'a [ValueRef]) {
        self.len += refs.len();
        self.segments.push(Segment::Refs(refs));
    }

    pub fn push_range(&mut self, range: ParamRange) {
        self.len += range.len();
        self.segments.push(Segment::Range {
            start: range.first,
            len: range.len(),
        });
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment<'a>] {
        &self.segments
    }

    pub fn get(&self, mut k: usize) -> Option<ValueRef> {
        for s in &self.segments {
            if k < s.len() {
                return Some(s.get(k));
            }
            k -= s.len();
        }
        None
    }

    pub fn iter(&self) -> ViewIter<'_, 'a> {
        ViewIter {
            segments: &self.segments,
            offset: 0,
            remaining: self.len,
        }
    }
}

/// Iterator over a [`ViewSeq`].
#[derive(Debug, Clone)]
pub struct ViewIter<'s, 'a> {
    segments: &'s [Segment<'a>],
    offset: usize,
    remaining: usize,
}

impl Iterator for ViewIter<'_, '_> {
    type Item = ValueRef;

    #[inline]
    fn next(&mut self) -> Option<ValueRef> {
        loop {
            let (first, rest) = self.segments.split_first()?;
            if self.offset < first.len() {
                let v = first.get(self.offset);
                self.offset += 1;
                self.remaining -= 1;
                return Some(v);
            }
            self.segments = rest;
            self.offset = 0;
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for ViewIter<'_, '_> {}

impl<'s, 'a> IntoIterator for &'s ViewSeq<'a> {
    type Item = ValueRef;
    type IntoIter = ViewIter<'s, 'a>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

/// Presents per-head outputs of one position as one vector, head-major.
pub fn concat_heads<'a, I>(heads: I) -> ViewSeq<'a>
where
    I: IntoIterator<Item = &'a [ValueRef]>,
{
    let mut v = ViewSeq::new();
    for h in heads {
        v.push_refs(h);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<S: Scalar, G: Graph<S> + ?Sized>(self, g: &mut G, x: ValueRef) -> Result<ValueRef> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// Uniform draws in `[-bound, bound]` appended as consecutive leaves.
pub fn init_uniform<S, G, R>(g: &mut G, count: usize, bound: f64, rng: &mut R) -> Result<ParamRange>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
    R: Rng + ?Sized,
{
    append_leaves(g, count, |_| S::from_f64(rng.gen_range(-bound..=bound)))
}

pub fn init_constant<S, G>(g: &mut G, count: usize, value: f64) -> Result<ParamRange>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
{
    append_leaves(g, count, |_| S::from_f64(value))
}

fn append_leaves<S, G>(g: &mut G, count: usize, mut value: impl FnMut(usize) -> S) -> Result<ParamRange>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
{
    let mut first = None;
    let mut last = 0;
    for k in 0..count {
        let v = g.push_leaf(value(k), None)?;
        let start = *first.get_or_insert(v.index());
        if v.index() != start + k {
            return Err(Error::invalid("parameter leaves were not allocated contiguously"));
        }
        last = v.index() + 1;
    }
    let first = first.unwrap_or(last);
    Ok(ParamRange::new(first, first.max(last)))
}

/// Affine layer parameters: `out_dim x in_dim` row-major weights followed by
/// `out_dim` biases when enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub params: ParamRange,
    pub in_dim: usize,
    pub out_dim: usize,
    pub bias: bool,
}

impl Linear {
    pub const fn param_count(in_dim: usize, out_dim: usize, bias: bool) -> usize {
        in_dim * out_dim + if bias { out_dim } else { 0 }
    }

    /// Appends a layer with weights uniform in `±1/sqrt(in_dim)` and zero
    /// biases.
    pub fn init<S, G, R>(g: &mut G, in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Result<Self>
    where
        S: Scalar,
        G: Graph<S> + ?Sized,
        R: Rng + ?Sized,
    {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("linear layer dimensions must be positive"));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = init_uniform(g, in_dim * out_dim, bound, rng)?;
        let last = if bias {
            init_constant(g, out_dim, 0.0)?.last
        } else {
            weights.last
        };
        Ok(Linear {
            params: ParamRange::new(weights.first, last),
            in_dim,
            out_dim,
            bias,
        })
    }

    /// Weight row of output `j`.
    pub fn row(&self, j: usize) -> ParamRange {
        let first = self.params.first + j * self.in_dim;
        ParamRange::new(first, first + self.in_dim)
    }

    pub fn bias_of(&self, j: usize) -> Option<ValueRef> {
        self.bias
            .then(|| ValueRef::from_raw(self.params.first + self.in_dim * self.out_dim + j))
    }
}

/// `act(<w_j, input> + b_j)` for every output `j`: one inner-product node per
/// output plus one activation node unless the activation is the identity.
pub fn linear<S, G>(g: &mut G, input: &ViewSeq<'_>, layer: &Linear, act: Activation) -> Result<Vec<ValueRef>>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
{
    if input.len() != layer.in_dim {
        return Err(Error::invalid(format!(
            "linear layer expects {} inputs, got {}",
            layer.in_dim,
            input.len()
        )));
    }
    let mut out = Vec::with_capacity(layer.out_dim);
    for j in 0..layer.out_dim {
        let pre = g.inner_product_opt(layer.row(j).iter(), input.iter(), layer.bias_of(j))?;
        out.push(act.apply(g, pre)?);
    }
    Ok(out)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `gamma_i * (x_i - mean) / sqrt(var + eps) + beta_i`, with the mean and
/// biased variance from one shared pass.
pub fn layer_norm<S, G>(
    g: &mut G,
    xs: &ViewSeq<'_>,
    gamma: ParamRange,
    beta: ParamRange,
    eps: f64,
) -> Result<Vec<ValueRef>>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
{
    let n = xs.len();
    if n == 0 || gamma.len() != n || beta.len() != n {
        return Err(Error::invalid(format!(
            "layer norm over {n} inputs needs {n} gains and offsets, got {} and {}",
            gamma.len(),
            beta.len()
        )));
    }
    let (mean, mean_sq) = g.reduce_mean_and_mean_squares(xs.iter())?;
    let mean2 = g.sqr(mean)?;
    let var = g.sub(mean_sq, mean2)?;
    let eps = g.leaf(S::from_f64(eps))?;
    let shifted = g.add(var, eps)?;
    let inv_std = g.inv_sqrt(shifted)?;
    let mut out = Vec::with_capacity(n);
    for (k, x) in xs.iter().enumerate() {
        let centered = g.sub(x, mean)?;
        let normed = g.mul(centered, inv_std)?;
        let scaled = g.mul(normed, gamma.at(k))?;
        out.push(g.add(scaled, beta.at(k))?);
    }
    Ok(out)
}

/// Cross-entropy of `softmax(logits)` against class `target`.
///
/// The largest logit is subtracted as a constant before exponentiating;
/// value and gradients equal those of the unshifted formula.
pub fn softmax_cross_entropy<S, G>(g: &mut G, logits: &[ValueRef], target: usize) -> Result<ValueRef>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
{
    if logits.is_empty() {
        return Err(Error::invalid("cross-entropy over zero classes"));
    }
    if target >= logits.len() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} logits",
            logits.len()
        )));
    }
    let mut max = g.value(logits[0])?;
    for &z in &logits[1..] {
        let v = g.value(z)?;
        if v > max {
            max = v;
        }
    }
    let shift = g.leaf(max)?;
    let mut exps = Vec::with_capacity(logits.len());
    let mut target_shifted = None;
    for (k, &z) in logits.iter().enumerate() {
        let s = g.sub(z, shift)?;
        if k == target {
            target_shifted = Some(s);
        }
        exps.push(g.exp(s)?);
    }
    let total = g.reduce_sum(exps.iter().copied())?;
    let log_total = g.log(total)?;
    g.sub(log_total, target_shifted.expect("target checked above"))
}

/// Bias-free query, key and value projections of one attention head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionHead {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

impl AttentionHead {
    pub fn init<S, G, R>(g: &mut G, model_dim: usize, head_dim: usize, rng: &mut R) -> Result<Self>
    where
        S: Scalar,
        G: Graph<S> + ?Sized,
        R: Rng + ?Sized,
    {
        Ok(AttentionHead {
            query: Linear::init(g, model_dim, head_dim, false, rng)?,
            key: Linear::init(g, model_dim, head_dim, false, rng)?,
            value: Linear::init(g, model_dim, head_dim, false, rng)?,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.query.out_dim
    }

    pub const fn param_count(model_dim: usize, head_dim: usize) -> usize {
        3 * model_dim * head_dim
    }
}

/// Per-position results of one attention head.
#[derive(Debug, Clone, Default)]
pub struct HeadOutput {
    /// `outputs[i]` has `head_dim` entries.
    pub outputs: Vec<Vec<ValueRef>>,
    /// `weights[i][j]` is the attention of position `i` on position `j <= i`.
    pub weights: Vec<Vec<ValueRef>>,
}

/// Causal scaled dot-product attention. Scores for `j > i` are never built.
pub fn attention_head<S, G>(g: &mut G, states: &[ViewSeq<'_>], head: &AttentionHead) -> Result<HeadOutput>
where
    S: Scalar,
    G: Graph<S> + ?Sized,
{
    let hd = head.head_dim();
    if head.key.out_dim != hd || head.value.out_dim != hd {
        return Err(Error::invalid("query, key and value widths differ"));
    }
    let scale = S::from_f64(1.0 / (hd as f64).sqrt());
    let mut queries = Vec::with_capacity(states.len());
    let mut keys = Vec::with_capacity(states.len());
    let mut values = Vec::with_capacity(states.len());
    for s in states {
        queries.push(linear(g, s, &head.query, Activation::Identity)?);
        keys.push(linear(g, s, &head.key, Activation::Identity)?);
        values.push(linear(g, s, &head.value, Activation::Identity)?);
    }

    let mut out = HeadOutput {
        outputs: Vec::with_capacity(states.len()),
        weights: Vec::with_capacity(states.len()),
    };
    let mut exps = Vec::with_capacity(states.len());
    for i in 0..states.len() {
        exps.clear();
        for key in &keys[..=i] {
            let dot = g.inner_product(queries[i].iter().copied(), key.iter().copied())?;
            let score = g.mul_by_constant(dot, scale)?;
            exps.push(g.exp(score)?);
        }
        let total = g.reduce_sum(exps.iter().copied())?;
        let mut weights = Vec::with_capacity(i + 1);
        for &e in &exps {
            weights.push(g.div(e, total)?);
        }
        let mut o = Vec::with_capacity(hd);
        for d in 0..hd {
            let col = values[..=i].iter().map(|v| v[d]);
            o.push(g.inner_product(weights.iter().copied(), col)?);
        }
        out.outputs.push(o);
        out.weights.push(weights);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaves(t: &mut Tape<f64>, xs: &[f64]) -> Vec<ValueRef> {
        xs.iter().map(|&x| t.leaf(x).unwrap()).collect()
    }

    #[test]
    fn view_seq_remaps_indices() {
        let mut t = Tape::<f64>::new(64).unwrap();
        let heads: Vec<Vec<ValueRef>> = (0..6).map(|h| leaves(&mut t, &[h as f64; 4])).collect();
        let before = t.len();
        let cat = concat_heads(heads.iter().map(|h| h.as_slice()));
        assert_eq!(t.len(), before);
        assert_eq!(cat.len(), 24);
        for k in 0..24 {
            assert_eq!(cat.get(k), Some(heads[k / 4][k % 4]));
        }
        assert_eq!(cat.get(24), None);
        assert_eq!(cat.iter().len(), 24);
        assert!(cat.iter().eq((0..24).map(|k| heads[k / 4][k % 4])));

        let one = concat_heads([heads[2].as_slice()]);
        assert!(one.iter().eq(heads[2].iter().copied()));
    }

    #[test]
    fn mixed_segments() {
        let mut t = Tape::<f64>::new(64).unwrap();
        let a = leaves(&mut t, &[1.0, 2.0]);
        let mut v = ViewSeq::from_range(ParamRange::new(0, 2));
        v.push_refs(&a[..1]);
        assert_eq!(v.iter().map(|x| x.index()).collect::<Vec<_>>(), vec![0, 1, 0]);
    }

    #[test]
    fn linear_reuses_inner_product_example() {
        let mut t = Tape::<f64>::new(64).unwrap();
        let w = leaves(&mut t, &[3.0, 4.0, 5.0]);
        let layer = Linear {
            params: ParamRange::new(w[0].index(), w[2].index() + 1),
            in_dim: 2,
            out_dim: 1,
            bias: true,
        };
        let x = leaves(&mut t, &[1.0, 2.0]);
        let before = t.len();
        let y = linear(&mut t, &ViewSeq::from_refs(&x), &layer, Activation::Identity).unwrap();
        assert_eq!(t.len(), before + 1);
        assert_eq!(t.value_of(y[0]).unwrap(), 16.0);

        let err = linear(&mut t, &ViewSeq::from_refs(&x[..1]), &layer, Activation::Identity);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tanh_layer_on_zero_params() {
        let mut t = Tape::<f64>::new(64).unwrap();
        let params = init_constant(&mut t, 3 * 2 + 3, 0.0).unwrap();
        let layer = Linear { params, in_dim: 2, out_dim: 3, bias: true };
        let x = leaves(&mut t, &[0.7, -1.3]);
        let y = linear(&mut t, &ViewSeq::from_refs(&x), &layer, Activation::Tanh).unwrap();
        for v in y {
            assert_eq!(t.value_of(v).unwrap(), 0.0);
            assert_eq!(t.local_derivatives(v).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let draw = |seed| {
            let mut t = Tape::<f64>::new(64).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = Linear::init(&mut t, 1, 8, true, &mut rng).unwrap();
            (l, t.values().to_vec())
        };
        let (l, a) = draw(7);
        let (_, b) = draw(7);
        assert_eq!(a, b);
        assert_eq!(l.params, ParamRange::new(0, 16));
        assert!(a[..8].iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(a[8..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_mean_within_three_sigma() {
        let mut t = Tape::<f64>::new(100_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let r = init_uniform(&mut t, n, 0.5, &mut rng).unwrap();
        let mean: f64 = t.values()[r.as_range()].iter().sum::<f64>() / n as f64;
        // Uniform(-a, a) has variance a^2 / 3
        let sigma = (0.25f64 / 3.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean}, sigma {sigma}");
    }

    #[test]
    fn layer_norm_cases() {
        let mut t = Tape::<f64>::new(64).unwrap();
        let gamma = init_constant(&mut t, 2, 1.0).unwrap();
        let beta = init_constant(&mut t, 2, 0.0).unwrap();
        let x = leaves(&mut t, &[1.0, 3.0]);
        let y = layer_norm(&mut t, &ViewSeq::from_refs(&x), gamma, beta, 0.0).unwrap();
        assert_eq!(t.value_of(y[0]).unwrap(), -1.0);
        assert_eq!(t.value_of(y[1]).unwrap(), 1.0);

        let c = leaves(&mut t, &[0.3, 0.3]);
        let y = layer_norm(&mut t, &ViewSeq::from_refs(&c), gamma, beta, LAYER_NORM_EPS).unwrap();
        for v in y {
            assert_eq!(t.value_of(v).unwrap(), 0.0);
        }

        let three = leaves(&mut t, &[1.0, 2.0, 3.0]);
        assert!(layer_norm(&mut t, &ViewSeq::from_refs(&three), gamma, beta, 0.0).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let mut t = Tape::<f64>::new(256).unwrap();
        let z = leaves(&mut t, &[0.25; 27]);
        let loss = softmax_cross_entropy(&mut t, &z, 5).unwrap();
        assert!((t.value_of(loss).unwrap() - 27f64.ln()).abs() < 1e-12);
        assert!((27f64.ln() - 3.295836866004329).abs() < 1e-15);

        let z = leaves(&mut t, &[-7.5]);
        let loss = softmax_cross_entropy(&mut t, &z, 0).unwrap();
        assert_eq!(t.value_of(loss).unwrap(), 0.0);

        assert!(softmax_cross_entropy(&mut t, &z, 1).is_err());
        assert!(softmax_cross_entropy(&mut t, &[], 0).is_err());
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut t = Tape::<f64>::new(256).unwrap();
        let raw = [0.3, -1.2, 2.0, 0.0];
        let z = leaves(&mut t, &raw);
        let loss = softmax_cross_entropy(&mut t, &z, 2).unwrap();
        t.backward(loss).unwrap();
        let m = raw.iter().cloned().fold(f64::MIN, f64::max);
        let total: f64 = raw.iter().map(|v| (v - m).exp()).sum();
        for (k, &zk) in z.iter().enumerate() {
            let p = (raw[k] - m).exp() / total;
            let expect = p - if k == 2 { 1.0 } else { 0.0 };
            assert!((t.grad_of(zk).unwrap() - expect).abs() < 1e-12);
        }
    }

    fn head_fixture(t: &mut Tape<f64>, model_dim: usize, head_dim: usize) -> AttentionHead {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        AttentionHead::init(t, model_dim, head_dim, &mut rng).unwrap()
    }

    #[test]
    fn single_position_attends_fully() {
        let mut t = Tape::<f64>::new(256).unwrap();
        let head = head_fixture(&mut t, 3, 2);
        let x = leaves(&mut t, &[0.5, -0.2, 0.9]);
        let out = attention_head(&mut t, &[ViewSeq::from_refs(&x)], &head).unwrap();
        assert_eq!(t.value_of(out.weights[0][0]).unwrap(), 1.0);
        let v = linear(&mut t, &ViewSeq::from_refs(&x), &head.value, Activation::Identity).unwrap();
        for d in 0..2 {
            assert_eq!(
                t.value_of(out.outputs[0][d]).unwrap(),
                t.value_of(v[d]).unwrap()
            );
        }
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let mut t = Tape::<f64>::new(512).unwrap();
        let head = head_fixture(&mut t, 3, 2);
        let x = leaves(&mut t, &[0.5, -0.2, 0.9]);
        let states = vec![ViewSeq::from_refs(&x); 4];
        let out = attention_head(&mut t, &states, &head).unwrap();
        for (i, ws) in out.weights.iter().enumerate() {
            assert_eq!(ws.len(), i + 1);
            for &w in ws {
                assert!((t.value_of(w).unwrap() - 1.0 / (i as f64 + 1.0)).abs() < 1e-15);
            }
        }
    }
}
