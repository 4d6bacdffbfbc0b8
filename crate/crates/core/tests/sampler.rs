use cqa_core::graph::{split_edges, synthetic, Layer};
use cqa_core::query::{builtin_query_types, OperatorKind};
use cqa_core::sampler::{read_dataset, sample_dataset, summarize, write_dataset, SamplerConfig};
use cqa_core::symbolic::answer;

#[test]
fn samples_contain_their_seed_and_answers_grow_across_layers() {
    let layers = split_edges(&synthetic(100, 10, 500, 5), (8, 1, 1), 5).unwrap();
    let types: Vec<_> = builtin_query_types().all_fol().cloned().collect();
    let cfg = SamplerConfig { per_type_count: 20, seed: 9, ..Default::default() };
    let out = sample_dataset(&layers, &types, &cfg, "synthetic");
    assert!(out.skipped.is_empty(), "{:?}", out.skipped);
    assert_eq!(out.dataset.records.len(), 58 * 20);
    for r in &out.dataset.records {
        assert!(!r.train_answers.is_empty(), "{}", r.type_formula);
        for layer in [Layer::Train, Layer::Valid, Layer::Test] {
            assert_eq!(*r.answers(layer), answer(layers.get(layer), &r.query));
        }
        if r.query.count(OperatorKind::Negation) == 0 {
            assert!(r.train_answers.is_subset(&r.valid_answers));
            assert!(r.valid_answers.is_subset(&r.test_answers));
        }
    }
}

#[test]
fn generated_file_round_trips_and_is_reproducible() {
    let layers = split_edges(&synthetic(80, 6, 400, 2), (8, 1, 1), 2).unwrap();
    let types = builtin_query_types().in_distribution;
    let cfg = SamplerConfig { per_type_count: 4, seed: 3, ..Default::default() };
    let write = || {
        let mut b = Vec::new();
        write_dataset(&mut b, &sample_dataset(&layers, &types, &cfg, "kg").dataset).unwrap();
        b
    };
    let a = write();
    assert_eq!(a, write());
    let ds = read_dataset(&a[..]).unwrap();
    let summary = summarize(&ds);
    assert_eq!(summary.len(), 29);
    assert!(summary.iter().all(|t| t.count == 4));
}

#[test]
fn hand_written_file_reads_back() {
    let text = include_str!("data/tiny.jsonl");
    let ds = read_dataset(text.as_bytes()).unwrap();
    assert_eq!(ds.provenance.num_entities, 4);
    assert_eq!(ds.records.len(), 2);
    let ids = |s: &cqa_core::symbolic::EntitySet| s.iter().map(|e| e.0).collect::<Vec<_>>();
    assert_eq!(ids(&ds.records[0].train_answers), [1, 2]);
    assert_eq!(ids(&ds.records[1].test_answers), [0, 3]);
    let mut out = Vec::new();
    write_dataset(&mut out, &ds).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
}
