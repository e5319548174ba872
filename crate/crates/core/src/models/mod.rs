//! Workload models: a character-level MLP and a miniature decoder-only
//! transformer.

mod char_mlp;
pub mod data;
mod gpt;

pub use char_mlp::{CharMlp, CharMlpConfig};
pub use data::{Dataset, Example, Vocab};
pub use gpt::{GptForward, GptMini, GptMiniConfig};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{Graph, ParamRange, ValueRef};

/// A model whose parameters occupy one contiguous run of leaves and which
/// can build a per-example loss node.
pub trait Model {
    fn params(&self) -> ParamRange;

    fn loss<S: Scalar, G: Graph<S>>(&self, g: &mut G, example: &Example) -> Result<ValueRef>;
}
