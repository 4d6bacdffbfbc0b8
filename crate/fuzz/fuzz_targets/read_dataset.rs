#![no_main]

use cqa_core::sampler::{read_dataset, write_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_dataset(data) {
        let mut out = Vec::new();
        write_dataset(&mut out, &ds).unwrap();
        assert_eq!(read_dataset(&out[..]).unwrap(), ds);
    }
});
