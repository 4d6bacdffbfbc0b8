#![no_main]

use cqa_core::trainer::read_checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_checkpoint(data, None);
});
