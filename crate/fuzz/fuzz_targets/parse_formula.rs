#![no_main]

use cqa_core::query::parse_formula;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(t) = parse_formula(data) {
        let again = parse_formula(&t.formula).expect("canonical formula reparses");
        assert_eq!(again, t);
    }
});
