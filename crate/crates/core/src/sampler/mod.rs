//! Benchmark generation by reverse grounding: pick an answer node, then walk
//! the query type from the root down, choosing predecessors along in-edges.

mod io;

pub use io::{read_dataset, write_dataset, DatasetError, FORMAT_NAME, FORMAT_VERSION};

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{EntityId, GraphLayers, KnowledgeGraph, Layer};
use crate::query::{Branches, Node, Query, QueryType, Shape};
use crate::rng::{self, Rng};
use crate::symbolic::{answer, EntitySet};

pub const DEFAULT_MAX_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("layer has no edges")]
    EmptyLayer,
    #[error("grounding {formula} failed after {retries} attempts")]
    RetriesExhausted { formula: String, retries: usize },
}

/// Grounding hit a node without the required predecessor.
struct DeadEnd;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub per_type_count: usize,
    pub seed: u64,
    pub max_retries: usize,
    pub source_layer: Layer,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { per_type_count: 20, seed: 0, max_retries: DEFAULT_MAX_RETRIES, source_layer: Layer::Train }
    }
}

impl SamplerConfig {
    /// Hash of the configuration and the type list, recorded in provenance.
    pub fn hash(&self, types: &[QueryType]) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "count={};seed={};retries={};layer={:?};types=",
            self.per_type_count, self.seed, self.max_retries, self.source_layer
        ));
        for t in types {
            h.update(t.formula.as_bytes());
            h.update(b"|");
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// A grounded query with its answers on each graph layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedQueryRecord {
    pub type_formula: String,
    pub query: Query,
    pub train_answers: EntitySet,
    pub valid_answers: EntitySet,
    pub test_answers: EntitySet,
}

impl GroundedQueryRecord {
    pub fn from_layers(type_formula: String, query: Query, layers: &GraphLayers) -> Self {
        GroundedQueryRecord {
            type_formula,
            train_answers: answer(&layers.train, &query),
            valid_answers: answer(&layers.valid, &query),
            test_answers: answer(&layers.test, &query),
            query,
        }
    }

    pub fn answers(&self, layer: Layer) -> &EntitySet {
        match layer {
            Layer::Train => &self.train_answers,
            Layer::Valid => &self.valid_answers,
            Layer::Test => &self.test_answers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kg: String,
    pub seed: u64,
    pub config_hash: String,
    pub num_entities: usize,
    pub num_relations: usize,
    pub source_layer: Layer,
}

impl Provenance {
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("provenance serializes"));
        hex::encode(&digest[..8])
    }
}

/// Records ordered by type (in the order the types were given), then by
/// record index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub provenance: Provenance,
    pub records: Vec<GroundedQueryRecord>,
}

impl Dataset {
    /// `(formula, records)` for each type, in order of first appearance.
    pub fn groups(&self) -> Vec<(&str, Vec<&GroundedQueryRecord>)> {
        let mut out: Vec<(&str, Vec<&GroundedQueryRecord>)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(f, _)| *f == r.type_formula) {
                Some((_, v)) => v.push(r),
                None => out.push((&r.type_formula, vec![r])),
            }
        }
        out
    }
}

/// Outcome of [`sample_dataset`]: the data plus the types that were dropped.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub dataset: Dataset,
    pub skipped: Vec<(String, GroundError)>,
}

fn uniform_entity(layer: &KnowledgeGraph, rng: &mut Rng) -> EntityId {
    EntityId(rng.gen_range(0..layer.num_entities() as u32))
}

fn ground(layer: &KnowledgeGraph, shape: &Shape, v: EntityId, rng: &mut Rng, retries: usize) -> Result<Query, DeadEnd> {
    match shape {
        Node::Anchor(()) => Ok(Node::Anchor(v)),
        Node::Projection((), child) => {
            let &(r, u) = layer.in_edges(v).choose(rng).ok_or(DeadEnd)?;
            Ok(Node::Projection(r, Box::new(ground(layer, child, u, rng, retries)?)))
        }
        Node::Intersection(b) => {
            let children = b.iter().map(|c| ground(layer, c, v, rng, retries)).collect::<Result<Vec<_>, _>>()?;
            Ok(Node::Intersection(Branches::new(children).expect("same arity as the type")))
        }
        Node::Union(b) => {
            let mut children = Vec::with_capacity(b.len());
            for (i, c) in b.iter().enumerate() {
                // the first operand keeps v; later operands start from fresh nodes
                let q =
                    if i == 0 { ground(layer, c, v, rng, retries)? } else { ground_anywhere(layer, c, rng, retries)? };
                children.push(q);
            }
            Ok(Node::Union(Branches::new(children).expect("same arity as the type")))
        }
        Node::Negation(child) => Ok(Node::Negation(Box::new(ground_anywhere(layer, child, rng, retries)?))),
    }
}

/// Grounds at an independently sampled node, retrying dead ends locally.
fn ground_anywhere(layer: &KnowledgeGraph, shape: &Shape, rng: &mut Rng, retries: usize) -> Result<Query, DeadEnd> {
    for _ in 0..retries.max(1) {
        let w = uniform_entity(layer, rng);
        if let Ok(q) = ground(layer, shape, w, rng, retries) {
            return Ok(q);
        }
    }
    Err(DeadEnd)
}

/// One grounding attempt from a uniformly drawn answer node. Succeeds only
/// when the executor confirms the node is an answer of the result.
fn try_ground(layer: &KnowledgeGraph, shape: &Shape, rng: &mut Rng, retries: usize) -> Option<(Query, EntityId)> {
    let v = uniform_entity(layer, rng);
    let q = ground(layer, shape, v, rng, retries).ok()?;
    answer(layer, &q).contains(v).then_some((q, v))
}

/// Reverse-grounds `qtype` on `layer`. Returns the query and the sampled
/// answer node `v`, with `v ∈ answer(layer, query)` guaranteed.
pub fn ground_type(
    layer: &KnowledgeGraph,
    qtype: &QueryType,
    rng: &mut Rng,
    max_retries: usize,
) -> Result<(Query, EntityId), GroundError> {
    if layer.num_edges() == 0 {
        return Err(GroundError::EmptyLayer);
    }
    (0..max_retries.max(1))
        .find_map(|_| try_ground(layer, &qtype.shape, rng, max_retries))
        .ok_or_else(|| GroundError::RetriesExhausted { formula: qtype.formula.clone(), retries: max_retries })
}

/// Samples `cfg.per_type_count` distinct queries per type from the source
/// layer and attaches answers from all three layers. Large answer sets are
/// kept. A type that exhausts its retry budget is skipped with a warning.
pub fn sample_dataset(layers: &GraphLayers, types: &[QueryType], cfg: &SamplerConfig, kg_name: &str) -> SampleOutcome {
    let source = layers.get(cfg.source_layer);
    let per_type: Vec<Result<Vec<GroundedQueryRecord>, GroundError>> =
        types.par_iter().enumerate().map(|(ti, t)| sample_type(layers, source, t, ti, cfg)).collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (t, res) in types.iter().zip(per_type) {
        match res {
            Ok(rs) => records.extend(rs),
            Err(e) => {
                log::warn!("skipping type {}: {e}", t.formula);
                skipped.push((t.formula.clone(), e));
            }
        }
    }
    let provenance = Provenance {
        kg: kg_name.to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(types),
        num_entities: layers.num_entities(),
        num_relations: layers.num_relations(),
        source_layer: cfg.source_layer,
    };
    SampleOutcome { dataset: Dataset { provenance, records }, skipped }
}

fn sample_type(
    layers: &GraphLayers,
    source: &KnowledgeGraph,
    t: &QueryType,
    type_index: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<GroundedQueryRecord>, GroundError> {
    if cfg.per_type_count == 0 {
        return Ok(Vec::new());
    }
    if source.num_edges() == 0 {
        return Err(GroundError::EmptyLayer);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(cfg.per_type_count);
    for k in 0..cfg.per_type_count {
        let mut r = rng::stream(cfg.seed, &[type_index as u64, k as u64]);
        let q = (0..cfg.max_retries.max(1))
            .find_map(|_| {
                try_ground(source, &t.shape, &mut r, cfg.max_retries).map(|(q, _)| q).filter(|q| !seen.contains(q))
            })
            .ok_or_else(|| GroundError::RetriesExhausted { formula: t.formula.clone(), retries: cfg.max_retries })?;
        seen.insert(q.clone());
        out.push(GroundedQueryRecord::from_layers(t.formula.clone(), q, layers));
    }
    Ok(out)
}

/// Per-type record counts and answer-set-size histograms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeSummary {
    pub formula: String,
    pub count: usize,
    /// `(bucket upper bound, count)` over train-layer answer-set sizes; buckets
    /// are `0, 1, 2–3, 4–7, …` (powers of two).
    pub train_histogram: Vec<(usize, usize)>,
    pub test_histogram: Vec<(usize, usize)>,
}

fn histogram(sizes: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut buckets: Vec<(usize, usize)> = Vec::new();
    for s in sizes {
        // 0, 1, 3, 7, 15, ...
        let bound = (s + 1).next_power_of_two() - 1;
        match buckets.iter_mut().find(|(b, _)| *b == bound) {
            Some((_, c)) => *c += 1,
            None => buckets.push((bound, 1)),
        }
    }
    buckets.sort_unstable();
    buckets
}

pub fn summarize(ds: &Dataset) -> Vec<TypeSummary> {
    ds.groups()
        .into_iter()
        .map(|(formula, recs)| TypeSummary {
            formula: formula.to_string(),
            count: recs.len(),
            train_histogram: histogram(recs.iter().map(|r| r.train_answers.len())),
            test_histogram: histogram(recs.iter().map(|r| r.test_answers.len())),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{split_edges, synthetic, EdgeTriple, RelationId};
    use crate::query::{builtin_query_types, parse_formula};

    fn layers() -> GraphLayers {
        split_edges(&synthetic(100, 5, 600, 11), (8, 1, 1), 3).unwrap()
    }

    #[test]
    fn forced_single_choice() {
        // only edge into 2 is (0, r1, 2)
        let g = KnowledgeGraph::new(3, 2, [EdgeTriple::new(0, 1, 2)]).unwrap();
        let t = parse_formula("(p,(e))").unwrap();
        let mut r = rng::stream(1, &[]);
        let (q, v) = ground_type(&g, &t, &mut r, 64).unwrap();
        assert_eq!(v, EntityId(2));
        assert_eq!(q, Node::Projection(RelationId(1), Box::new(Node::Anchor(EntityId(0)))));
        assert!(answer(&g, &q).contains(v));
    }

    #[test]
    fn intersection_anchors_are_predecessors_of_v() {
        let l = layers();
        let t = parse_formula("(i,(p,(e)),(p,(e)))").unwrap();
        let mut r = rng::stream(5, &[]);
        for _ in 0..20 {
            let (q, v) = ground_type(&l.train, &t, &mut r, 64).unwrap();
            for c in q.children() {
                let Node::Projection(rel, a) = c else { panic!() };
                let Node::Anchor(a) = a.as_ref() else { panic!() };
                assert!(l.train.fwd(*a, *rel).contains(&v));
            }
        }
    }

    #[test]
    fn all_fol_types_contain_their_seed_node() {
        let l = layers();
        let b = builtin_query_types();
        let mut r = rng::stream(9, &[]);
        for t in b.all_fol() {
            for _ in 0..10 {
                let (q, v) = ground_type(&l.train, t, &mut r, 64).unwrap();
                assert_eq!(q.shape(), t.shape);
                assert!(answer(&l.train, &q).contains(v), "{}", t.formula);
            }
        }
    }

    #[test]
    fn empty_layer_is_an_error() {
        let g = KnowledgeGraph::empty(4, 1);
        let t = parse_formula("(p,(e))").unwrap();
        assert_eq!(ground_type(&g, &t, &mut rng::stream(0, &[]), 8).unwrap_err(), GroundError::EmptyLayer);
    }

    #[test]
    fn dataset_counts_layers_and_determinism() {
        let l = layers();
        let types = builtin_query_types().in_distribution;
        let cfg = SamplerConfig { per_type_count: 20, seed: 4, ..Default::default() };
        let out = sample_dataset(&l, &types, &cfg, "synthetic");
        assert!(out.skipped.is_empty(), "{:?}", out.skipped);
        assert_eq!(out.dataset.records.len(), 580);
        for rec in &out.dataset.records {
            assert_eq!(rec.query.shape().to_string(), rec.type_formula);
            assert_eq!(rec.train_answers, answer(&l.train, &rec.query));
            assert_eq!(rec.test_answers, answer(&l.test, &rec.query));
            assert!(!rec.train_answers.is_empty());
        }
        let groups = out.dataset.groups();
        assert_eq!(groups.len(), 29);
        assert!(groups.iter().all(|(_, v)| v.len() == 20));
        let again = sample_dataset(&l, &types, &cfg, "synthetic");
        assert_eq!(again.dataset, out.dataset);
    }

    #[test]
    fn zero_count_gives_empty_dataset() {
        let l = layers();
        let types = builtin_query_types().in_distribution;
        let cfg = SamplerConfig { per_type_count: 0, ..Default::default() };
        let out = sample_dataset(&l, &types, &cfg, "kg");
        assert!(out.dataset.records.is_empty());
        assert_eq!(out.dataset.provenance.num_entities, 100);
        assert!(!out.dataset.provenance.config_hash.is_empty());
    }

    #[test]
    fn histogram_buckets() {
        assert_eq!(histogram([0, 1, 2, 3, 4, 7, 8].into_iter()), vec![(0, 1), (1, 1), (3, 2), (7, 2), (15, 1)]);
    }
}
