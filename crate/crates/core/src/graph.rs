//! Knowledge graph storage: dense integer ids, forward/backward adjacency
//! indexes and cumulative train/valid/test layering.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A directed labelled edge `relation(head, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeTriple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl EdgeTriple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        EdgeTriple { head: EntityId(head), relation: RelationId(relation), tail: EntityId(tail) }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: empty relation field")]
    EmptyRelation { line: usize },
    #[error("line {line}: {kind} id {id} out of range (size {size})")]
    IdOutOfRange { line: usize, kind: &'static str, id: u64, size: usize },
    #[error("line {line}: unknown {kind} label {label:?}")]
    UnknownLabel { line: usize, kind: &'static str, label: String },
    #[error("edge {0:?} outside the graph's id space")]
    EdgeOutOfRange(EdgeTriple),
    #[error("cannot split {edges} edges into {parts} non-empty parts")]
    TooFewEdges { edges: usize, parts: usize },
    #[error("split ratios must be positive")]
    BadRatios,
}

type Result<T> = std::result::Result<T, GraphError>;

const SPLIT_STREAM: u64 = 1;
const SYNTH_STREAM: u64 = 2;

/// Entity and relation universe plus indexed, de-duplicated edges.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    num_entities: usize,
    num_relations: usize,
    edges: Vec<EdgeTriple>,
    fwd: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    bwd: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    in_edges: Vec<Vec<(RelationId, EntityId)>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.num_entities == other.num_entities
            && self.num_relations == other.num_relations
            && self.edges == other.edges
    }
}

impl Eq for KnowledgeGraph {}

impl KnowledgeGraph {
    /// Builds a graph, silently dropping duplicate edges.
    pub fn new(num_entities: usize, num_relations: usize, edges: impl IntoIterator<Item = EdgeTriple>) -> Result<Self> {
        let set: BTreeSet<EdgeTriple> = edges.into_iter().collect();
        for e in &set {
            if e.head.index() >= num_entities || e.tail.index() >= num_entities || e.relation.index() >= num_relations {
                return Err(GraphError::EdgeOutOfRange(*e));
            }
        }
        let edges: Vec<EdgeTriple> = set.into_iter().collect();
        let mut fwd: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut bwd: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut in_edges = vec![Vec::new(); num_entities];
        // edges are sorted by (head, relation, tail), so fwd lists come out sorted
        for e in &edges {
            fwd.entry((e.head, e.relation)).or_default().push(e.tail);
            bwd.entry((e.tail, e.relation)).or_default().push(e.head);
            in_edges[e.tail.index()].push((e.relation, e.head));
        }
        for list in bwd.values_mut() {
            list.sort_unstable();
        }
        for list in &mut in_edges {
            list.sort_unstable();
        }
        Ok(KnowledgeGraph { num_entities, num_relations, edges, fwd, bwd, in_edges })
    }

    pub fn empty(num_entities: usize, num_relations: usize) -> Self {
        Self::new(num_entities, num_relations, std::iter::empty()).expect("no edges to validate")
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// All edges, sorted by `(head, relation, tail)`.
    pub fn edges(&self) -> &[EdgeTriple] {
        &self.edges
    }

    pub fn contains(&self, edge: &EdgeTriple) -> bool {
        self.edges.binary_search(edge).is_ok()
    }

    /// Sorted tails `t` with `relation(head, t)`.
    pub fn fwd(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.fwd.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Sorted heads `h` with `relation(h, tail)`.
    pub fn bwd(&self, tail: EntityId, relation: RelationId) -> &[EntityId] {
        self.bwd.get(&(tail, relation)).map_or(&[], Vec::as_slice)
    }

    /// Every `(relation, head)` with an edge into `tail`.
    pub fn in_edges(&self, tail: EntityId) -> &[(RelationId, EntityId)] {
        self.in_edges.get(tail.index()).map_or(&[], Vec::as_slice)
    }
}

/// Label-to-id maps read from `id<TAB>label` sidecar files.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    labels: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Dictionary {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            let (id, label) = line
                .split_once('\t')
                .ok_or_else(|| GraphError::Malformed { line: line_no, reason: "expected `id<TAB>label`".into() })?;
            let id: u32 =
                id.parse().map_err(|_| GraphError::Malformed { line: line_no, reason: format!("bad id {id:?}") })?;
            pairs.push((id, label.to_string(), line_no));
        }
        let size = pairs.len();
        let mut labels = vec![None; size];
        for (id, label, line) in pairs {
            let slot = labels.get_mut(id as usize).ok_or(GraphError::IdOutOfRange {
                line,
                kind: "dictionary",
                id: id as u64,
                size,
            })?;
            if slot.is_some() {
                return Err(GraphError::Malformed { line, reason: format!("duplicate id {id}") });
            }
            *slot = Some(label);
        }
        let labels: Vec<String> = labels.into_iter().map(Option::unwrap_or_default).collect();
        let ids = labels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
        Ok(Dictionary { labels, ids })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    fn resolve(&self, field: &str, line: usize, kind: &'static str) -> Result<u32> {
        if let Some(&id) = self.ids.get(field) {
            return Ok(id);
        }
        match field.parse::<u64>() {
            Ok(id) if id < self.len() as u64 => Ok(id as u32),
            Ok(id) => Err(GraphError::IdOutOfRange { line, kind, id, size: self.len() }),
            Err(_) => Err(GraphError::UnknownLabel { line, kind, label: field.to_string() }),
        }
    }
}

/// Optional entity and relation dictionaries.
#[derive(Debug, Clone, Default)]
pub struct Dictionaries {
    pub entities: Option<Dictionary>,
    pub relations: Option<Dictionary>,
}

/// Parses `head<TAB>relation<TAB>tail` lines into triples.
///
/// Without dictionaries every field must be a non-negative integer.
pub fn parse_triples(text: &str, dicts: &Dictionaries) -> Result<Vec<EdgeTriple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(GraphError::Malformed {
                line: line_no,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[1].is_empty() {
            return Err(GraphError::EmptyRelation { line: line_no });
        }
        let entity = |f: &str| field_id(f, dicts.entities.as_ref(), line_no, "entity");
        let head = entity(fields[0])?;
        let relation = field_id(fields[1], dicts.relations.as_ref(), line_no, "relation")?;
        let tail = entity(fields[2])?;
        out.push(EdgeTriple::new(head, relation, tail));
    }
    Ok(out)
}

fn field_id(field: &str, dict: Option<&Dictionary>, line: usize, kind: &'static str) -> Result<u32> {
    match dict {
        Some(d) => d.resolve(field, line, kind),
        None => field.parse::<u32>().map_err(|_| GraphError::Malformed {
            line,
            reason: format!("{kind} field {field:?} is not an integer id"),
        }),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
}

/// Universe sizes: dictionary sizes when given, else one past the largest id seen.
fn universe(dicts: &Dictionaries, edges: &[EdgeTriple]) -> (usize, usize) {
    let entities = dicts.entities.as_ref().map_or_else(
        || edges.iter().map(|e| e.head.index().max(e.tail.index()) + 1).max().unwrap_or(0),
        Dictionary::len,
    );
    let relations = dicts
        .relations
        .as_ref()
        .map_or_else(|| edges.iter().map(|e| e.relation.index() + 1).max().unwrap_or(0), Dictionary::len);
    (entities, relations)
}

pub fn load_triples(path: &Path, dicts: &Dictionaries) -> Result<KnowledgeGraph> {
    let edges = parse_triples(&read(path)?, dicts)?;
    let (ne, nr) = universe(dicts, &edges);
    KnowledgeGraph::new(ne, nr, edges)
}

pub fn write_triples(path: &Path, edges: &[EdgeTriple]) -> Result<()> {
    let mut buf = Vec::with_capacity(edges.len() * 12);
    for e in edges {
        writeln!(buf, "{}\t{}\t{}", e.head, e.relation, e.tail).expect("write to vec");
    }
    fs::write(path, buf).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
}

/// Cumulative train ⊆ valid ⊆ test graphs over one id space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphLayers {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Layer::Train),
            "valid" => Ok(Layer::Valid),
            "test" => Ok(Layer::Test),
            other => Err(format!("unknown layer {other:?}")),
        }
    }
}

impl GraphLayers {
    /// Layers the three edge partitions cumulatively.
    ///
    /// Valid/test edges that repeat an earlier partition are dropped with a warning.
    pub fn from_partitions(
        num_entities: usize,
        num_relations: usize,
        train: &[EdgeTriple],
        valid: &[EdgeTriple],
        test: &[EdgeTriple],
    ) -> Result<Self> {
        let train = KnowledgeGraph::new(num_entities, num_relations, train.iter().copied())?;
        let dups = valid.iter().filter(|e| train.contains(e)).count();
        if dups > 0 {
            log::warn!("{dups} validation edges duplicate training edges; deduplicated");
        }
        let valid = KnowledgeGraph::new(num_entities, num_relations, train.edges().iter().chain(valid).copied())?;
        let dups = test.iter().filter(|e| valid.contains(e)).count();
        if dups > 0 {
            log::warn!("{dups} test edges duplicate earlier edges; deduplicated");
        }
        let test = KnowledgeGraph::new(num_entities, num_relations, valid.edges().iter().chain(test).copied())?;
        Ok(GraphLayers { train, valid, test })
    }

    pub fn get(&self, layer: Layer) -> &KnowledgeGraph {
        match layer {
            Layer::Train => &self.train,
            Layer::Valid => &self.valid,
            Layer::Test => &self.test,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.test.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.test.num_relations()
    }
}

pub fn layer_graphs(train: &Path, valid: &Path, test: &Path, dicts: &Dictionaries) -> Result<GraphLayers> {
    let tr = parse_triples(&read(train)?, dicts)?;
    let va = parse_triples(&read(valid)?, dicts)?;
    let te = parse_triples(&read(test)?, dicts)?;
    let all: Vec<EdgeTriple> = tr.iter().chain(&va).chain(&te).copied().collect();
    let (ne, nr) = universe(dicts, &all);
    GraphLayers::from_partitions(ne, nr, &tr, &va, &te)
}

/// File names inside a knowledge-graph directory.
pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const ENTITY_DICT_FILE: &str = "entities.dict";
pub const RELATION_DICT_FILE: &str = "relations.dict";

/// Loads `train.txt`/`valid.txt`/`test.txt` (plus optional
/// `entities.dict`/`relations.dict`) from a directory.
pub fn load_dir(dir: &Path) -> Result<GraphLayers> {
    let dict = |name: &str| {
        let p = dir.join(name);
        p.exists().then(|| Dictionary::load(&p)).transpose()
    };
    let dicts = Dictionaries { entities: dict(ENTITY_DICT_FILE)?, relations: dict(RELATION_DICT_FILE)? };
    layer_graphs(&dir.join(TRAIN_FILE), &dir.join(VALID_FILE), &dir.join(TEST_FILE), &dicts)
}

/// Writes the three layer deltas so that [`load_dir`] reproduces `layers`.
pub fn write_dir(dir: &Path, layers: &GraphLayers) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| GraphError::Io { path: dir.to_path_buf(), source })?;
    let delta = |upper: &KnowledgeGraph, lower: Option<&KnowledgeGraph>| -> Vec<EdgeTriple> {
        upper.edges().iter().filter(|e| lower.is_none_or(|l| !l.contains(e))).copied().collect()
    };
    write_triples(&dir.join(TRAIN_FILE), &delta(&layers.train, None))?;
    write_triples(&dir.join(VALID_FILE), &delta(&layers.valid, Some(&layers.train)))?;
    write_triples(&dir.join(TEST_FILE), &delta(&layers.test, Some(&layers.valid)))?;
    Ok(())
}

/// Shuffles the edges with a seeded stream and splits them by `ratios`
/// into cumulative layers. The valid and test shares are rounded down;
/// train receives the remainder.
pub fn split_edges(kg: &KnowledgeGraph, ratios: (u32, u32, u32), seed: u64) -> Result<GraphLayers> {
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(GraphError::BadRatios);
    }
    let n = kg.num_edges();
    let total = (a + b + c) as usize;
    let n_valid = n * b as usize / total;
    let n_test = n * c as usize / total;
    if n < 3 || n_valid == 0 || n_test == 0 {
        return Err(GraphError::TooFewEdges { edges: n, parts: 3 });
    }
    let mut edges = kg.edges().to_vec();
    edges.shuffle(&mut rng::stream(seed, &[SPLIT_STREAM]));
    let n_train = n - n_valid - n_test;
    let (train, rest) = edges.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    GraphLayers::from_partitions(kg.num_entities(), kg.num_relations(), train, valid, test)
}

/// A uniformly random graph with exactly `num_edges` distinct edges
/// (capped at the number of possible edges).
pub fn synthetic(num_entities: usize, num_relations: usize, num_edges: usize, seed: u64) -> KnowledgeGraph {
    let mut r = rng::stream(seed, &[SYNTH_STREAM]);
    let cap = num_entities * num_entities * num_relations;
    let target = num_edges.min(cap);
    let mut set = BTreeSet::new();
    while set.len() < target {
        set.insert(EdgeTriple::new(
            r.gen_range(0..num_entities as u32),
            r.gen_range(0..num_relations as u32),
            r.gen_range(0..num_entities as u32),
        ));
    }
    // insertion order is discarded by the set; the result depends only on the seed
    KnowledgeGraph::new(num_entities, num_relations, set).expect("ids drawn in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    const TOY: &str = "0\t0\t1\n0\t0\t2\n1\t1\t2\n2\t0\t3\n0\t0\t1\n3\t1\t0\n";

    #[test]
    fn toy_file_deduplicates_and_indexes_match_hand_adjacency() {
        let edges = parse_triples(TOY, &Dictionaries::default()).unwrap();
        assert_eq!(edges.len(), 6);
        let (ne, nr) = universe(&Dictionaries::default(), &edges);
        let kg = KnowledgeGraph::new(ne, nr, edges).unwrap();
        assert_eq!((kg.num_entities(), kg.num_relations(), kg.num_edges()), (4, 2, 5));

        let mut fwd: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
        fwd.insert((0, 0), vec![1, 2]);
        fwd.insert((1, 1), vec![2]);
        fwd.insert((2, 0), vec![3]);
        fwd.insert((3, 1), vec![0]);
        for h in 0..4 {
            for r in 0..2 {
                let got: Vec<u32> = kg.fwd(EntityId(h), RelationId(r)).iter().map(|e| e.0).collect();
                assert_eq!(got, fwd.get(&(h, r)).cloned().unwrap_or_default(), "fwd ({h},{r})");
            }
        }
        let back: Vec<u32> = kg.bwd(EntityId(2), RelationId(0)).iter().map(|e| e.0).collect();
        assert_eq!(back, vec![0]);
        assert_eq!(kg.in_edges(EntityId(2)), &[(RelationId(0), EntityId(0)), (RelationId(1), EntityId(1))]);
        assert!(kg.fwd(EntityId(9), RelationId(0)).is_empty());
    }

    #[test]
    fn empty_file_with_dictionaries_keeps_dictionary_sizes() {
        let dicts = Dictionaries {
            entities: Some(Dictionary::parse("0\ta\n1\tb\n2\tc\n3\td\n4\te\n").unwrap()),
            relations: Some(Dictionary::parse("0\tx\n1\ty\n").unwrap()),
        };
        let edges = parse_triples("", &dicts).unwrap();
        let (ne, nr) = universe(&dicts, &edges);
        let kg = KnowledgeGraph::new(ne, nr, edges).unwrap();
        assert_eq!((kg.num_entities(), kg.num_relations(), kg.num_edges()), (5, 2, 0));
    }

    #[test]
    fn labels_resolve_through_dictionaries() {
        let dicts = Dictionaries {
            entities: Some(Dictionary::parse("0\tMadCow\n1\tPrion\n").unwrap()),
            relations: Some(Dictionary::parse("0\tAssoc\n").unwrap()),
        };
        let edges = parse_triples("MadCow\tAssoc\tPrion\n1\t0\t0\n", &dicts).unwrap();
        assert_eq!(edges, vec![EdgeTriple::new(0, 0, 1), EdgeTriple::new(1, 0, 0)]);
        let err = parse_triples("0\t0\t5\n", &dicts).unwrap_err();
        assert!(matches!(err, GraphError::IdOutOfRange { line: 1, id: 5, .. }), "{err}");
        let err = parse_triples("Nope\t0\t1\n", &dicts).unwrap_err();
        assert!(matches!(err, GraphError::UnknownLabel { .. }));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let d = Dictionaries::default();
        match parse_triples("0\t0\t1\n0\t1\n", &d).unwrap_err() {
            GraphError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        assert!(matches!(parse_triples("0\t0\t1\n\n3\t\t1\n", &d).unwrap_err(), GraphError::EmptyRelation { line: 3 }));
        assert!(matches!(parse_triples("a\t0\t1\n", &d).unwrap_err(), GraphError::Malformed { line: 1, .. }));
    }

    #[test]
    fn load_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        fs::write(&p, TOY).unwrap();
        let d = Dictionaries::default();
        assert_eq!(load_triples(&p, &d).unwrap(), load_triples(&p, &d).unwrap());
    }

    #[test]
    fn layering_is_cumulative() {
        let edges: Vec<_> = (0..10).map(|i| EdgeTriple::new(i, 0, (i + 1) % 10)).collect();
        let layers = GraphLayers::from_partitions(10, 1, &edges[..8], &edges[8..9], &edges[9..]).unwrap();
        assert_eq!((layers.train.num_edges(), layers.valid.num_edges(), layers.test.num_edges()), (8, 9, 10));
        let same = GraphLayers::from_partitions(10, 1, &edges, &[], &[]).unwrap();
        assert_eq!(same.train, same.valid);
        assert_eq!(same.valid, same.test);
        // a repeated train edge in valid is dropped, not an error
        let dup = GraphLayers::from_partitions(10, 1, &edges[..8], &edges[..2], &edges[9..]).unwrap();
        assert_eq!(dup.valid.num_edges(), 8);
    }

    #[test]
    fn split_sizes_determinism_and_subsets() {
        let kg = synthetic(30, 3, 100, 1);
        let a = split_edges(&kg, (8, 1, 1), 7).unwrap();
        let b = split_edges(&kg, (8, 1, 1), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.num_edges(), 80);
        assert_eq!(a.valid.num_edges() - a.train.num_edges(), 10);
        assert_eq!(a.test.num_edges() - a.valid.num_edges(), 10);
        assert_eq!(a.test.edges(), kg.edges());

        let small = synthetic(10, 2, 10, 3);
        let l = split_edges(&small, (8, 1, 1), 5).unwrap();
        assert!(l.train.edges().iter().all(|e| l.valid.contains(e)));
        assert!(l.valid.edges().iter().all(|e| l.test.contains(e)));
        assert_eq!((l.train.num_edges(), l.valid.num_edges(), l.test.num_edges()), (8, 9, 10));

        let tiny = synthetic(5, 1, 2, 0);
        assert!(matches!(split_edges(&tiny, (8, 1, 1), 0), Err(GraphError::TooFewEdges { .. })));
    }

    #[test]
    fn directory_round_trip() {
        let kg = synthetic(20, 3, 60, 9);
        let layers = split_edges(&kg, (8, 1, 1), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dir(dir.path(), &layers).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(back.test.edges(), layers.test.edges());
        assert_eq!(back.train.edges(), layers.train.edges());
    }
}
