#![no_main]

use cqa_core::query::{parse_grounded, serialize_grounded};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(q) = parse_grounded(data) {
        assert_eq!(parse_grounded(&serialize_grounded(&q)).unwrap(), q);
    }
});
