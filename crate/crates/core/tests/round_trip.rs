mod common;

use cqa_core::linearize::{delinearize, linearize, Vocabulary};
use cqa_core::query::{builtin_query_types, parse_formula, parse_grounded, serialize_grounded};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ENTITIES: u32 = 100;
const RELATIONS: u32 = 10;

#[test]
fn every_builtin_type_round_trips_100_groundings() {
    let types = builtin_query_types();
    let vocab = Vocabulary::new(ENTITIES as usize, RELATIONS as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for t in types.all_fol().chain(&types.conjunctive_in).chain(&types.conjunctive_out) {
        assert_eq!(parse_formula(&t.formula).unwrap(), *t);
        for _ in 0..100 {
            let q = common::random_grounding(&t.shape, ENTITIES, RELATIONS, &mut rng);
            let text = serialize_grounded(&q);
            assert_eq!(parse_grounded(&text).unwrap(), q, "{text}");
            let toks = linearize(&q, &vocab).unwrap();
            assert_eq!(delinearize(toks.as_slice(), &vocab).unwrap(), q, "{text}");
            checked += 1;
        }
    }
    assert_eq!(checked, 73 * 100);
}

proptest! {
    #[test]
    fn random_type_and_seed(type_idx in 0usize..58, seed in any::<u64>()) {
        let types = builtin_query_types();
        let t = types.all_fol().nth(type_idx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = common::random_grounding(&t.shape, 5, 3, &mut rng);
        let vocab = Vocabulary::new(5, 3);
        prop_assert_eq!(&q.shape(), &t.shape);
        prop_assert_eq!(parse_grounded(&serialize_grounded(&q)).unwrap(), q.clone());
        let toks = linearize(&q, &vocab).unwrap();
        prop_assert_eq!(delinearize(toks.as_slice(), &vocab).unwrap(), q);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "[(),pniue0-9 ]{0,40}") {
        let _ = parse_grounded(&s);
        let _ = parse_formula(&s);
    }
}
