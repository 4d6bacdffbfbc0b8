mod common;

use cqa_core::graph::synthetic;
use cqa_core::query::builtin_query_types;
use cqa_core::symbolic::{answer, answer_dnf, to_dnf, DEFAULT_BUDGET};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn set_executor_matches_dnf_on_1000_queries() {
    let g = synthetic(40, 4, 160, 3);
    let types: Vec<_> = builtin_query_types().all_fol().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonempty = 0;
    for i in 0..1000 {
        let t = &types[i % types.len()];
        let q = common::random_grounding(&t.shape, 40, 4, &mut rng);
        let fast = answer(&g, &q);
        let slow = answer_dnf(&g, &to_dnf(&q).unwrap(), DEFAULT_BUDGET).unwrap();
        assert_eq!(fast, slow, "{q}");
        nonempty += usize::from(!fast.is_empty());
    }
    // uniform groundings on a sparse graph still need to exercise non-trivial sets
    assert!(nonempty > 300, "only {nonempty} non-empty answers");
}
