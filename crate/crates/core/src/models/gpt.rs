use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Example, Model};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, AttentionHead, Linear, ViewSeq, LAYER_NORM_EPS};
use crate::ops::Ops;
use crate::scalar::Scalar;
use crate::tape::{Graph, ParamRange, ValueRef};

/// Decoder-only transformer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GptMiniConfig {
    pub n_layer: usize,
    pub k_heads: usize,
    pub block_size: usize,
    pub d_model: usize,
    pub vocab: usize,
    pub ffn_hidden: usize,
}

impl Default for GptMiniConfig {
    fn default() -> Self {
        GptMiniConfig {
            n_layer: 6,
            k_heads: 6,
            block_size: 8,
            d_model: 24,
            vocab: 65,
            ffn_hidden: 96,
        }
    }
}

impl GptMiniConfig {
    pub const fn head_dim(&self) -> usize {
        self.d_model / self.k_heads
    }

    pub const fn param_count(&self) -> usize {
        let d = self.d_model;
        let block = 2 * d
            + self.k_heads * AttentionHead::param_count(d, self.head_dim())
            + Linear::param_count(d, d, true)
            + 2 * d
            + Linear::param_count(d, self.ffn_hidden, true)
            + Linear::param_count(self.ffn_hidden, d, true);
        self.vocab * d + self.block_size * d + self.n_layer * block + Linear::param_count(d, self.vocab, true)
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1_gain: ParamRange,
    ln1_bias: ParamRange,
    heads: Vec<AttentionHead>,
    proj: Linear,
    ln2_gain: ParamRange,
    ln2_bias: ParamRange,
    ffn_in: Linear,
    ffn_out: Linear,
}

/// Token and positional embeddings, pre-norm blocks of causal multi-head
/// attention and a ReLU feed-forward net (each wrapped in a residual
/// connection), then a per-position affine map to vocabulary logits.
#[derive(Debug, Clone)]
pub struct GptMini {
    pub config: GptMiniConfig,
    token_embedding: ParamRange,
    position_embedding: ParamRange,
    blocks: Vec<Block>,
    lm_head: Linear,
    params: ParamRange,
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone, Default)]
pub struct GptForward {
    /// `logits[i]` has `vocab` entries.
    pub logits: Vec<Vec<ValueRef>>,
    /// `attention[layer * k_heads + head][i][j]` for `j <= i`.
    pub attention: Vec<Vec<Vec<ValueRef>>>,
}

impl GptMini {
    pub fn build<S: Scalar, G: Graph<S>>(g: &mut G, config: GptMiniConfig, seed: u64) -> Result<Self> {
        let c = config;
        if c.k_heads == 0 || !c.d_model.is_multiple_of(c.k_heads) {
            return Err(Error::invalid(format!(
                "d_model {} is not divisible into {} heads",
                c.d_model, c.k_heads
            )));
        }
        if c.block_size == 0 || c.vocab == 0 || c.ffn_hidden == 0 {
            return Err(Error::invalid("decoder dimensions must be positive"));
        }
        let d = c.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let token_embedding = nn::init_uniform(g, c.vocab * d, 1.0, &mut rng)?;
        let position_embedding = nn::init_uniform(g, c.block_size * d, 1.0, &mut rng)?;
        let mut blocks = Vec::with_capacity(c.n_layer);
        for _ in 0..c.n_layer {
            let ln1_gain = nn::init_constant(g, d, 1.0)?;
            let ln1_bias = nn::init_constant(g, d, 0.0)?;
            let heads = (0..c.k_heads)
                .map(|_| AttentionHead::init(g, d, c.head_dim(), &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let proj = Linear::init(g, d, d, true, &mut rng)?;
            let ln2_gain = nn::init_constant(g, d, 1.0)?;
            let ln2_bias = nn::init_constant(g, d, 0.0)?;
            let ffn_in = Linear::init(g, d, c.ffn_hidden, true, &mut rng)?;
            let ffn_out = Linear::init(g, c.ffn_hidden, d, true, &mut rng)?;
            blocks.push(Block {
                ln1_gain,
                ln1_bias,
                heads,
                proj,
                ln2_gain,
                ln2_bias,
                ffn_in,
                ffn_out,
            });
        }
        let lm_head = Linear::init(g, d, c.vocab, true, &mut rng)?;
        Ok(GptMini {
            config,
            token_embedding,
            position_embedding,
            blocks,
            lm_head,
            params: ParamRange::new(token_embedding.first, lm_head.params.last),
        })
    }

    fn row(range: ParamRange, width: usize, k: usize) -> ParamRange {
        let first = range.first + k * width;
        ParamRange::new(first, first + width)
    }

    pub fn forward<S: Scalar, G: Graph<S>>(&self, g: &mut G, tokens: &[u32]) -> Result<GptForward> {
        let c = &self.config;
        let d = c.d_model;
        if tokens.is_empty() || tokens.len() > c.block_size {
            return Err(Error::invalid(format!(
                "sequence of {} tokens, block size is {}",
                tokens.len(),
                c.block_size
            )));
        }
        let mut xs: Vec<Vec<ValueRef>> = Vec::with_capacity(tokens.len());
        for (i, &t) in tokens.iter().enumerate() {
            if t as usize >= c.vocab {
                return Err(Error::invalid(format!("token id {t} outside vocabulary of {}", c.vocab)));
            }
            let tok = Self::row(self.token_embedding, d, t as usize);
            let pos = Self::row(self.position_embedding, d, i);
            let x = tok
                .iter()
                .zip(pos.iter())
                .map(|(a, b)| g.add(a, b))
                .collect::<Result<Vec<_>>>()?;
            xs.push(x);
        }

        let mut attention = Vec::with_capacity(c.n_layer * c.k_heads);
        for block in &self.blocks {
            let normed = xs
                .iter()
                .map(|x| nn::layer_norm(g, &ViewSeq::from_refs(x), block.ln1_gain, block.ln1_bias, LAYER_NORM_EPS))
                .collect::<Result<Vec<_>>>()?;
            let states: Vec<ViewSeq<'_>> = normed.iter().map(|n| ViewSeq::from_refs(n)).collect();
            let heads = block
                .heads
                .iter()
                .map(|h| nn::attention_head(g, &states, h))
                .collect::<Result<Vec<_>>>()?;
            for (i, x) in xs.iter_mut().enumerate() {
                let cat = nn::concat_heads(heads.iter().map(|h| h.outputs[i].as_slice()));
                let p = nn::linear(g, &cat, &block.proj, Activation::Identity)?;
                for (xd, pd) in x.iter_mut().zip(p) {
                    *xd = g.add(*xd, pd)?;
                }
            }
            attention.extend(heads.into_iter().map(|h| h.weights));

            for x in xs.iter_mut() {
                let n = nn::layer_norm(g, &ViewSeq::from_refs(x), block.ln2_gain, block.ln2_bias, LAYER_NORM_EPS)?;
                let h = nn::linear(g, &ViewSeq::from_refs(&n), &block.ffn_in, Activation::Relu)?;
                let f = nn::linear(g, &ViewSeq::from_refs(&h), &block.ffn_out, Activation::Identity)?;
                for (xd, fd) in x.iter_mut().zip(f) {
                    *xd = g.add(*xd, fd)?;
                }
            }
        }

        let logits = xs
            .iter()
            .map(|x| nn::linear(g, &ViewSeq::from_refs(x), &self.lm_head, Activation::Identity))
            .collect::<Result<Vec<_>>>()?;
        Ok(GptForward { logits, attention })
    }
}

impl Model for GptMini {
    fn params(&self) -> ParamRange {
        self.params
    }

    /// Mean next-token cross-entropy over the positions of the example.
    fn loss<S: Scalar, G: Graph<S>>(&self, g: &mut G, example: &Example) -> Result<ValueRef> {
        if example.targets.len() != example.context.len() {
            return Err(Error::invalid("decoder examples need one target per position"));
        }
        let out = self.forward(g, &example.context)?;
        let losses = out
            .logits
            .iter()
            .zip(&example.targets)
            .map(|(z, &t)| nn::softmax_cross_entropy(g, z, t as usize))
            .collect::<Result<Vec<_>>>()?;
        g.reduce_mean(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;

    #[test]
    fn default_parameter_count() {
        let cfg = GptMiniConfig::default();
        assert_eq!(cfg.param_count(), 46_289);
        let mut t = Tape::<f32>::new(50_000).unwrap();
        let m = GptMini::build(&mut t, cfg, 0).unwrap();
        assert_eq!(m.params().len(), 46_289);
        assert_eq!(t.len(), 46_289);
    }

    #[test]
    fn one_token_gives_vocab_logits() {
        let mut t = Tape::<f64>::new(100_000).unwrap();
        let m = GptMini::build(&mut t, GptMiniConfig::default(), 1).unwrap();
        let out = m.forward(&mut t, &[3]).unwrap();
        assert_eq!(out.logits.len(), 1);
        assert_eq!(out.logits[0].len(), 65);
        assert_eq!(out.attention.len(), 36);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut t = Tape::<f64>::new(100_000).unwrap();
        let m = GptMini::build(&mut t, GptMiniConfig::default(), 1).unwrap();
        assert!(m.forward(&mut t, &[0; 9]).is_err());
        assert!(m.forward(&mut t, &[]).is_err());
        assert!(m.forward(&mut t, &[65]).is_err());
    }
}
