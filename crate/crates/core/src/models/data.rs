//! Corpora, tokenizers and training examples.

use rand::Rng;

use crate::error::{Error, Result};

/// Small Shakespeare excerpt bundled for tests and demos.
pub static MINI_CORPUS: &[u8] = include_bytes!("../../data/mini_corpus.txt");

/// Token used by the character MLP for padding and word boundaries.
pub const BOUNDARY_TOKEN: u32 = 0;

/// Letter tokenizer of the character MLP: `a..z` (either case) map to
/// `1..=26`, every other byte to [`BOUNDARY_TOKEN`].
pub fn letter_tokens(bytes: &[u8]) -> Vec<u32> {
    bytes
        .iter()
        .map(|&b| match b {
            b'a'..=b'z' => (b - b'a') as u32 + 1,
            b'A'..=b'Z' => (b - b'A') as u32 + 1,
            _ => BOUNDARY_TOKEN,
        })
        .collect()
}

/// Byte-level vocabulary: the distinct bytes of a corpus sorted by value,
/// with ids assigned in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    alphabet: Vec<u8>,
    ids: [Option<u8>; 256],
}

impl Vocab {
    pub fn from_corpus(corpus: &[u8]) -> Self {
        let mut seen = [false; 256];
        for &b in corpus {
            seen[b as usize] = true;
        }
        let alphabet: Vec<u8> = (0..=255u8).filter(|&b| seen[b as usize]).collect();
        Self::from_sorted(alphabet)
    }

    fn from_sorted(alphabet: Vec<u8>) -> Self {
        let mut ids = [None; 256];
        for (id, &b) in alphabet.iter().enumerate() {
            ids[b as usize] = Some(id as u8);
        }
        Vocab { alphabet, ids }
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn alphabet(&self) -> &[u8] {
        &self.alphabet
    }

    /// Fails on the first byte outside the alphabet.
    pub fn tokenize(&self, bytes: &[u8]) -> Result<Vec<u32>> {
        bytes
            .iter()
            .map(|&b| {
                self.ids[b as usize]
                    .map(u32::from)
                    .ok_or(Error::Tokenize { byte: b })
            })
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<Vec<u8>> {
        ids.iter()
            .map(|&id| {
                self.alphabet.get(id as usize).copied().ok_or_else(|| {
                    Error::invalid(format!(
                        "token id {id} outside a vocabulary of {}",
                        self.len()
                    ))
                })
            })
            .collect()
    }
}

/// One supervised example: a context window and the token(s) to predict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub context: Vec<u32>,
    /// One target for the MLP task, one per context position for the
    /// decoder.
    pub targets: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Windowing {
    /// Predict token `i` from the `window` tokens before it, left-padded.
    Padded,
    /// Predict tokens `i+1..=i+window` from tokens `i..i+window`.
    Shifted,
}

/// Indexable set of examples cut from a token stream.
#[derive(Debug, Clone)]
pub struct Dataset {
    tokens: Vec<u32>,
    window: usize,
    mode: Windowing,
}

impl Dataset {
    /// Next-token examples for the character MLP: one per corpus position,
    /// context left-padded with [`BOUNDARY_TOKEN`].
    pub fn padded(tokens: Vec<u32>, context: usize) -> Result<Self> {
        if context == 0 || tokens.len() <= context {
            return Err(Error::invalid(format!(
                "corpus of {} tokens is too short for a context of {context}",
                tokens.len()
            )));
        }
        Ok(Dataset {
            tokens,
            window: context,
            mode: Windowing::Padded,
        })
    }

    /// Sequence examples for the decoder: every full window with its targets
    /// shifted by one.
    pub fn shifted(tokens: Vec<u32>, block: usize) -> Result<Self> {
        if block == 0 || tokens.len() <= block {
            return Err(Error::invalid(format!(
                "corpus of {} tokens is too short for a block of {block}",
                tokens.len()
            )));
        }
        Ok(Dataset {
            tokens,
            window: block,
            mode: Windowing::Shifted,
        })
    }

    pub fn len(&self) -> usize {
        match self.mode {
            Windowing::Padded => self.tokens.len(),
            Windowing::Shifted => self.tokens.len() - self.window,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn example(&self, i: usize) -> Example {
        assert!(i < self.len(), "example {i} out of range");
        match self.mode {
            Windowing::Padded => {
                let w = self.window;
                let mut context = vec![BOUNDARY_TOKEN; w];
                let from = i.saturating_sub(w);
                let src = &self.tokens[from..i];
                context[w - src.len()..].copy_from_slice(src);
                Example {
                    context,
                    targets: vec![self.tokens[i]],
                }
            }
            Windowing::Shifted => Example {
                context: self.tokens[i..i + self.window].to_vec(),
                targets: self.tokens[i + 1..i + 1 + self.window].to_vec(),
            },
        }
    }

    /// One example drawn uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Example {
        self.example(rng.gen_range(0..self.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vocab_round_trip() {
        let v = Vocab::from_corpus(MINI_CORPUS);
        assert!(v.len() <= 65);
        let ids = v.tokenize(MINI_CORPUS).unwrap();
        assert_eq!(v.detokenize(&ids).unwrap(), MINI_CORPUS);
        assert!(v.tokenize(b"").unwrap().is_empty());
        assert!(v.alphabet().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn out_of_alphabet_byte_is_reported() {
        let v = Vocab::from_corpus(b"abc");
        assert!(matches!(v.tokenize(b"abz"), Err(Error::Tokenize { byte: b'z' })));
        assert!(v.detokenize(&[3]).is_err());
    }

    #[test]
    fn letter_tokens_map() {
        assert_eq!(letter_tokens(b"aZ .q"), vec![1, 26, 0, 0, 17]);
    }

    #[test]
    fn padded_windows_on_a_toy_corpus() {
        let ds = Dataset::padded(vec![5, 6, 7], 2).unwrap();
        assert_eq!(ds.len(), 3);
        let ex: Vec<_> = (0..3).map(|i| ds.example(i)).collect();
        assert_eq!(ex[0], Example { context: vec![0, 0], targets: vec![5] });
        assert_eq!(ex[1], Example { context: vec![0, 5], targets: vec![6] });
        assert_eq!(ex[2], Example { context: vec![5, 6], targets: vec![7] });
        assert!(Dataset::padded(vec![5, 6], 2).is_err());
    }

    #[test]
    fn shifted_windows() {
        let ds = Dataset::shifted(vec![1, 2, 3, 4], 2).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(
            ds.example(1),
            Example { context: vec![2, 3], targets: vec![3, 4] }
        );
        assert!(Dataset::shifted(vec![1, 2], 2).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = Dataset::padded(letter_tokens(MINI_CORPUS), 16).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| ds.sample(&mut rng)).collect::<Vec<_>>()
        };
        let a = draw(1);
        assert_eq!(a, draw(1));
        assert!(a.iter().all(|e| e.targets[0] < 27 && e.context.len() == 16));
    }
}
