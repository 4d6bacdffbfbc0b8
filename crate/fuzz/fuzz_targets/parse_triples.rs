#![no_main]

use cqa_core::graph::{parse_triples, Dictionaries};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_triples(data, &Dictionaries::default());
});
