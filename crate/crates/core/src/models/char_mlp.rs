use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Example, Model};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Linear, ViewSeq};
use crate::scalar::Scalar;
use crate::tape::{Graph, ParamRange, ValueRef};

/// Embedding lookup, then `context*embed -> hidden -> vocab` with tanh on
/// both affine layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharMlpConfig {
    pub vocab: usize,
    pub embed_dim: usize,
    pub context: usize,
    pub hidden: usize,
}

impl CharMlpConfig {
    /// 27 tokens, 64-dimensional embeddings, 16 characters of context.
    pub const fn with_hidden(hidden: usize) -> Self {
        CharMlpConfig {
            vocab: 27,
            embed_dim: 64,
            context: 16,
            hidden,
        }
    }

    pub const fn param_count(&self) -> usize {
        self.vocab * self.embed_dim
            + Linear::param_count(self.context * self.embed_dim, self.hidden, true)
            + Linear::param_count(self.hidden, self.vocab, true)
    }
}

#[derive(Debug, Clone)]
pub struct CharMlp {
    pub config: CharMlpConfig,
    pub embedding: ParamRange,
    pub hidden: Linear,
    pub output: Linear,
    params: ParamRange,
}

impl CharMlp {
    /// Appends all parameters as consecutive leaves. Embeddings are uniform
    /// in `[-1, 1]`, layer weights uniform in `±1/sqrt(fan_in)`.
    pub fn build<S: Scalar, G: Graph<S>>(g: &mut G, config: CharMlpConfig, seed: u64) -> Result<Self> {
        let c = config;
        if c.hidden == 0 || c.vocab == 0 || c.embed_dim == 0 || c.context == 0 {
            return Err(Error::invalid("char MLP dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = nn::init_uniform(g, c.vocab * c.embed_dim, 1.0, &mut rng)?;
        let hidden = Linear::init(g, c.context * c.embed_dim, c.hidden, true, &mut rng)?;
        let output = Linear::init(g, c.hidden, c.vocab, true, &mut rng)?;
        Ok(CharMlp {
            config,
            embedding,
            hidden,
            output,
            params: ParamRange::new(embedding.first, output.params.last),
        })
    }

    fn embedding_row(&self, token: u32) -> ParamRange {
        let d = self.config.embed_dim;
        let first = self.embedding.first + token as usize * d;
        ParamRange::new(first, first + d)
    }

    /// Logits for the token following `context`.
    pub fn forward<S: Scalar, G: Graph<S>>(&self, g: &mut G, context: &[u32]) -> Result<Vec<ValueRef>> {
        let c = &self.config;
        if context.len() != c.context {
            return Err(Error::invalid(format!(
                "context of {} tokens, model expects {}",
                context.len(),
                c.context
            )));
        }
        let mut input = ViewSeq::new();
        for &t in context {
            if t as usize >= c.vocab {
                return Err(Error::invalid(format!("token id {t} outside vocabulary of {}", c.vocab)));
            }
            input.push_range(self.embedding_row(t));
        }
        let h = nn::linear(g, &input, &self.hidden, Activation::Tanh)?;
        nn::linear(g, &ViewSeq::from_refs(&h), &self.output, Activation::Tanh)
    }
}

impl Model for CharMlp {
    fn params(&self) -> ParamRange {
        self.params
    }

    fn loss<S: Scalar, G: Graph<S>>(&self, g: &mut G, example: &Example) -> Result<ValueRef> {
        let target = *example
            .targets
            .first()
            .ok_or_else(|| Error::invalid("example has no target"))?;
        let logits = self.forward(g, &example.context)?;
        nn::softmax_cross_entropy(g, &logits, target as usize)
    }
}
