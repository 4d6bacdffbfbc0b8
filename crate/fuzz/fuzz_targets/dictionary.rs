#![no_main]

use cqa_core::graph::Dictionary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(d) = Dictionary::parse(data) {
        for id in 0..d.len() as u32 {
            let _ = d.label(id);
        }
    }
});
