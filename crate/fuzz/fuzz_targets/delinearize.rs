#![no_main]

use cqa_core::linearize::{delinearize, linearize, Token, Vocabulary};
use libfuzzer_sys::fuzz_target;

// 19 valid ids; 19..23 hit the range check
fuzz_target!(|data: &[u8]| {
    let vocab = Vocabulary::new(8, 4);
    let tokens: Vec<Token> = data.iter().map(|&b| Token(u32::from(b % 24))).collect();
    if let Ok(q) = delinearize(&tokens, &vocab) {
        assert_eq!(linearize(&q, &vocab).unwrap().as_slice(), &tokens[..]);
    }
});
