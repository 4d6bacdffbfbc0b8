#![no_main]

use cqa_core::trainer::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = TrainConfig::parse(data) {
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
});
