#![no_main]

use libfuzzer_sys::fuzz_target;
use tapegrad::models::data::{letter_tokens, MINI_CORPUS};
use tapegrad::models::{Dataset, Vocab};

fuzz_target!(|data: &[u8]| {
    let tokens = letter_tokens(data);
    assert!(tokens.iter().all(|&t| t < 27));
    let _ = Dataset::padded(tokens, 4);

    let vocab = Vocab::from_corpus(MINI_CORPUS);
    if let Ok(ids) = vocab.tokenize(data) {
        assert_eq!(vocab.detokenize(&ids).unwrap(), data);
        let _ = Dataset::shifted(ids, 8);
    }
    let own = Vocab::from_corpus(data);
    let ids = own.tokenize(data).unwrap();
    assert_eq!(own.detokenize(&ids).unwrap(), data);
});
