//! Filtered ranking metrics.
//!
//! Each query is scored once; every target answer is then ranked among the
//! entities that are not other known answers. Per-query values average over
//! targets, per-type values over queries, and the headline averages types
//! with equal weight.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{Model, ModelError};
use crate::graph::EntityId;
use crate::query::{builtin_query_types, parse_formula, Query};
use crate::sampler::{Dataset, GroundedQueryRecord};
use crate::symbolic::EntitySet;

pub const HIT_KS: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Targets `[q]_train`; other train answers are filtered.
    Entailment,
    /// Targets `[q]_test \ [q]_val`; other test answers are filtered.
    Inference,
    /// Targets `[q]_val \ [q]_train`; other valid answers are filtered.
    ValidationSwap,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Entailment => "entailment",
            Mode::Inference => "inference",
            Mode::ValidationSwap => "validation-swap",
        }
    }

    /// `(targets, known answers)` of a record under this mode.
    pub fn targets(self, r: &GroundedQueryRecord) -> (EntitySet, &EntitySet) {
        match self {
            Mode::Entailment => (r.train_answers.clone(), &r.train_answers),
            Mode::Inference => (r.test_answers.difference(&r.valid_answers), &r.test_answers),
            Mode::ValidationSwap => (r.valid_answers.difference(&r.train_answers), &r.valid_answers),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Mode::Entailment, Mode::Inference, Mode::ValidationSwap]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Filtering {
    #[default]
    Filtered,
    Raw,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("target {target} outside {universe} scored entities")]
    Target { target: u32, universe: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `1 + #{v' ∉ filter, v' ≠ target : s(v') > s(target)}
///    + ½·#{v' ∉ filter, v' ≠ target : s(v') = s(target)}`.
pub fn rank(scores: &[f64], target: EntityId, filter: &EntitySet) -> Result<f64, EvalError> {
    let t = target.index();
    let st = *scores.get(t).ok_or(EvalError::Target { target: target.0, universe: scores.len() })?;
    let (mut above, mut tied) = (0usize, 0usize);
    for (v, &s) in scores.iter().enumerate() {
        if v == t || filter.contains(EntityId(v as u32)) {
            continue;
        }
        if s > st {
            above += 1;
        } else if s == st {
            tied += 1;
        }
    }
    Ok(1.0 + above as f64 + 0.5 * tied as f64)
}

/// MRR and Hit@{1,3,10}.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits: [f64; 3],
}

impl Metrics {
    fn from_ranks(ranks: &[f64]) -> Metrics {
        let n = ranks.len() as f64;
        let mut m = Metrics::default();
        for &r in ranks {
            m.mrr += 1.0 / r;
            for (h, &k) in m.hits.iter_mut().zip(&HIT_KS) {
                *h += f64::from(u8::from(r <= k as f64));
            }
        }
        m.mrr /= n;
        m.hits.iter_mut().for_each(|h| *h /= n);
        m
    }

    fn mean<'a>(items: impl IntoIterator<Item = &'a Metrics>) -> Option<Metrics> {
        let mut acc = Metrics::default();
        let mut n = 0usize;
        for m in items {
            acc.mrr += m.mrr;
            acc.hits.iter_mut().zip(&m.hits).for_each(|(a, b)| *a += b);
            n += 1;
        }
        (n > 0).then(|| {
            acc.mrr /= n as f64;
            acc.hits.iter_mut().for_each(|h| *h /= n as f64);
            acc
        })
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [("mrr", self.mrr), ("hit@1", self.hits[0]), ("hit@3", self.hits[1]), ("hit@10", self.hits[2])]
    }
}

/// Anything that can score every entity for a query.
pub trait Scorer {
    fn scores(&self, q: &Query) -> Result<Vec<f64>, EvalError>;
}

impl Scorer for Model {
    fn scores(&self, q: &Query) -> Result<Vec<f64>, EvalError> {
        let e = self.encode(q)?;
        Ok(self.score_all(e.view()).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub formula: String,
    pub depth: usize,
    pub distribution: String,
    /// Queries that contributed.
    pub queries: usize,
    /// Queries without targets under this mode.
    pub excluded: usize,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mode: Mode,
    pub types: Vec<TypeMetrics>,
    pub mean_over_types: Option<Metrics>,
    pub mean_over_queries: Option<Metrics>,
    pub by_depth: BTreeMap<usize, Metrics>,
    pub by_distribution: BTreeMap<String, Metrics>,
    pub queries: usize,
    pub excluded: usize,
}

/// Metrics of one query, or `None` if it has no targets under `mode`.
pub fn query_metrics(
    scores: &[f64],
    rec: &GroundedQueryRecord,
    mode: Mode,
    filtering: Filtering,
) -> Result<Option<Metrics>, EvalError> {
    let (targets, known) = mode.targets(rec);
    if targets.is_empty() {
        return Ok(None);
    }
    let empty = EntitySet::empty(known.universe());
    let mut ranks = Vec::with_capacity(targets.len());
    for v in targets.iter() {
        // rank() skips the target itself, so `known` acts as known \ {v}
        let r = match filtering {
            Filtering::Filtered => rank(scores, v, known)?,
            Filtering::Raw => rank(scores, v, &empty)?,
        };
        ranks.push(r);
    }
    Ok(Some(Metrics::from_ranks(&ranks)))
}

pub fn evaluate(
    scorer: &(impl Scorer + Sync),
    ds: &Dataset,
    mode: Mode,
    filtering: Filtering,
) -> Result<MetricReport, EvalError> {
    let per_query: Vec<Option<Metrics>> = ds
        .records
        .par_iter()
        .map(|r| {
            let (targets, _) = mode.targets(r);
            if targets.is_empty() {
                return Ok(None);
            }
            query_metrics(&scorer.scores(&r.query)?, r, mode, filtering)
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(aggregate(ds, &per_query, mode))
}

/// Builds a report from per-record metrics, aligned with `ds.records`.
pub fn aggregate(ds: &Dataset, per_query: &[Option<Metrics>], mode: Mode) -> MetricReport {
    let builtin = builtin_query_types();
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&Option<Metrics>>> = BTreeMap::new();
    for (r, m) in ds.records.iter().zip(per_query) {
        let f = r.type_formula.as_str();
        if !groups.contains_key(f) {
            order.push(f);
        }
        groups.entry(f).or_default().push(m);
    }
    let types: Vec<TypeMetrics> = order
        .iter()
        .map(|f| {
            let ms = &groups[f];
            let kept: Vec<&Metrics> = ms.iter().filter_map(|m| m.as_ref()).collect();
            TypeMetrics {
                formula: f.to_string(),
                depth: parse_formula(f).map(|t| t.depth()).unwrap_or(0),
                distribution: builtin.distribution(f).as_str().to_string(),
                queries: kept.len(),
                excluded: ms.len() - kept.len(),
                metrics: Metrics::mean(kept),
            }
        })
        .collect();
    let scored: Vec<&TypeMetrics> = types.iter().filter(|t| t.metrics.is_some()).collect();
    let mut by_depth = BTreeMap::new();
    let mut by_distribution = BTreeMap::new();
    for t in &scored {
        by_depth.entry(t.depth).or_insert_with(Vec::new).push(t.metrics.as_ref().expect("filtered"));
        by_distribution
            .entry(t.distribution.clone())
            .or_insert_with(Vec::new)
            .push(t.metrics.as_ref().expect("filtered"));
    }
    MetricReport {
        mode,
        mean_over_types: Metrics::mean(scored.iter().filter_map(|t| t.metrics.as_ref())),
        mean_over_queries: Metrics::mean(per_query.iter().flatten()),
        by_depth: by_depth.into_iter().map(|(k, v)| (k, Metrics::mean(v).expect("nonempty"))).collect(),
        by_distribution: by_distribution.into_iter().map(|(k, v)| (k, Metrics::mean(v).expect("nonempty"))).collect(),
        queries: per_query.iter().flatten().count(),
        excluded: per_query.iter().filter(|m| m.is_none()).count(),
        types,
    }
}

fn fmt_metrics(m: Option<&Metrics>) -> String {
    match m {
        Some(m) => format!("{:>8.4} {:>8.4} {:>8.4} {:>8.4}", m.mrr, m.hits[0], m.hits[1], m.hits[2]),
        None => format!("{:>8} {:>8} {:>8} {:>8}", "-", "-", "-", "-"),
    }
}

impl MetricReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let width = self.types.iter().map(|t| t.formula.len()).max().unwrap_or(0).max(24);
        let _ = writeln!(s, "mode: {}  (queries {}, excluded {})", self.mode.as_str(), self.queries, self.excluded);
        let _ = writeln!(
            s,
            "{:<width$} {:>5} {:>5} {:>6} {:>8} {:>8} {:>8} {:>8}",
            "type", "depth", "dist", "n", "mrr", "hit@1", "hit@3", "hit@10"
        );
        for t in &self.types {
            let _ = writeln!(
                s,
                "{:<width$} {:>5} {:>5} {:>6} {}",
                t.formula,
                t.depth,
                t.distribution,
                t.queries,
                fmt_metrics(t.metrics.as_ref())
            );
        }
        for (d, m) in &self.by_depth {
            let _ = writeln!(s, "{:<width$} {:>5} {:>5} {:>6} {}", "depth", d, "", "", fmt_metrics(Some(m)));
        }
        for (d, m) in &self.by_distribution {
            let _ = writeln!(s, "{:<width$} {:>5} {:>5} {:>6} {}", "distribution", "", d, "", fmt_metrics(Some(m)));
        }
        let _ = writeln!(
            s,
            "{:<width$} {:>5} {:>5} {:>6} {}",
            "MEAN OVER TYPES",
            "",
            "",
            "",
            fmt_metrics(self.mean_over_types.as_ref())
        );
        let _ = writeln!(
            s,
            "{:<width$} {:>5} {:>5} {:>6} {}",
            "MEAN OVER QUERIES",
            "",
            "",
            self.queries,
            fmt_metrics(self.mean_over_queries.as_ref())
        );
        s
    }

    /// One JSON object per (scope, key, metric).
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            mode: &'a str,
            scope: &'a str,
            #[serde(rename = "type")]
            formula: Option<&'a str>,
            depth: Option<usize>,
            distribution: Option<&'a str>,
            metric: &'a str,
            value: f64,
            queries: Option<usize>,
        }
        let mode = self.mode.as_str();
        let mut out = String::new();
        let mut push = |scope, formula, depth, distribution, queries, m: &Metrics| {
            for (metric, value) in m.named() {
                let line = Line { mode, scope, formula, depth, distribution, metric, value, queries };
                out.push_str(&serde_json::to_string(&line).expect("plain data"));
                out.push('\n');
            }
        };
        for t in &self.types {
            if let Some(m) = &t.metrics {
                push("type", Some(&t.formula), Some(t.depth), Some(&t.distribution), Some(t.queries), m);
            }
        }
        for (d, m) in &self.by_depth {
            push("depth", None, Some(*d), None, None, m);
        }
        for (d, m) in &self.by_distribution {
            push("distribution", None, None, Some(d), None, m);
        }
        if let Some(m) = &self.mean_over_types {
            push("mean-over-types", None, None, None, None, m);
        }
        if let Some(m) = &self.mean_over_queries {
            push("mean-over-queries", None, None, None, Some(self.queries), m);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_grounded;
    use crate::sampler::Provenance;

    fn set(ids: &[u32]) -> EntitySet {
        EntitySet::from_ids(10, ids.iter().map(|&i| EntityId(i)))
    }

    #[test]
    fn rank_rules() {
        let s = [0.1, 0.9, 0.5, 0.9, 0.2];
        let none = EntitySet::empty(5);
        assert_eq!(rank(&[3.0, 1.0, 2.0], EntityId(0), &EntitySet::empty(3)).unwrap(), 1.0);
        assert_eq!(rank(&s, EntityId(1), &none).unwrap(), 1.5);
        // filtering the tied entity removes the half
        assert_eq!(rank(&s, EntityId(1), &EntitySet::singleton(5, EntityId(3))).unwrap(), 1.0);
        assert_eq!(rank(&s, EntityId(4), &none).unwrap(), 4.0);
        assert!(rank(&s, EntityId(9), &none).is_err());
    }

    #[test]
    fn rank_matches_enumeration() {
        let scores = [0.3, 0.8, 0.3, 0.1, 0.9, 0.3, 0.5, 0.2, 0.8, 0.0];
        let filter = set(&[4, 8]);
        for t in 0..10u32 {
            let st = scores[t as usize];
            let mut r = 1.0;
            for v in 0..10u32 {
                if v == t || v == 4 || v == 8 {
                    continue;
                }
                let sv = scores[v as usize];
                if sv > st {
                    r += 1.0;
                }
                if sv == st {
                    r += 0.5;
                }
            }
            assert_eq!(rank(&scores, EntityId(t), &filter).unwrap(), r, "target {t}");
        }
    }

    fn record(q: &str, train: &[u32], valid: &[u32], test: &[u32]) -> GroundedQueryRecord {
        let query = parse_grounded(q).unwrap();
        GroundedQueryRecord {
            type_formula: query.shape().to_string(),
            query,
            train_answers: set(train),
            valid_answers: set(valid),
            test_answers: set(test),
        }
    }

    fn dataset(records: Vec<GroundedQueryRecord>) -> Dataset {
        Dataset {
            provenance: Provenance {
                kg: "fixture".into(),
                seed: 0,
                config_hash: String::new(),
                num_entities: 10,
                num_relations: 2,
                source_layer: crate::graph::Layer::Test,
            },
            records,
        }
    }

    /// Scores each query by a fixed table keyed on its anchor.
    struct Table(Vec<(Query, Vec<f64>)>);

    impl Scorer for Table {
        fn scores(&self, q: &Query) -> Result<Vec<f64>, EvalError> {
            Ok(self.0.iter().find(|(k, _)| k == q).expect("fixture query").1.clone())
        }
    }

    #[test]
    fn inference_excludes_queries_without_new_answers() {
        let r = record("(p,(0),(e,(1)))", &[2], &[2], &[2]);
        let ds = dataset(vec![r.clone()]);
        let t = Table(vec![(r.query.clone(), vec![0.0; 10])]);
        let rep = evaluate(&t, &ds, Mode::Inference, Filtering::Filtered).unwrap();
        assert_eq!(rep.excluded, 1);
        assert_eq!(rep.queries, 0);
        assert!(rep.mean_over_types.is_none());
        let rep = evaluate(&t, &ds, Mode::Entailment, Filtering::Filtered).unwrap();
        // ten-way tie: 1 + 0.5 * 9
        assert_eq!(rep.mean_over_types.unwrap().mrr, 1.0 / 5.5);
    }

    #[test]
    fn scaling_scores_changes_nothing() {
        let r = record("(p,(0),(e,(1)))", &[2, 5], &[2, 5], &[2, 5, 7]);
        let s: Vec<f64> = (0..10).map(|i| ((i * 7) % 10) as f64 / 10.0).collect();
        let a = query_metrics(&s, &r, Mode::Inference, Filtering::Filtered).unwrap();
        let scaled: Vec<f64> = s.iter().map(|x| x * 3.5).collect();
        let b = query_metrics(&scaled, &r, Mode::Inference, Filtering::Filtered).unwrap();
        assert_eq!(a, b);
        let raw = query_metrics(&s, &r, Mode::Inference, Filtering::Raw).unwrap().unwrap();
        assert!(raw.mrr <= a.unwrap().mrr);
    }

    #[test]
    fn report_outputs_mention_every_type() {
        let r1 = record("(p,(0),(e,(1)))", &[2], &[2], &[2, 3]);
        let r2 = record("(p,(1),(p,(0),(e,(1))))", &[4], &[4], &[4, 6]);
        let ds = dataset(vec![r1.clone(), r2.clone()]);
        let s: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let t = Table(vec![(r1.query, s.clone()), (r2.query, s)]);
        let rep = evaluate(&t, &ds, Mode::Inference, Filtering::Filtered).unwrap();
        let table = rep.to_table();
        assert!(table.contains("(p,(e))") && table.contains("(p,(p,(e)))"));
        assert!(table.contains("MEAN OVER TYPES") && table.contains("MEAN OVER QUERIES"));
        let lines = rep.to_jsonl();
        assert_eq!(lines.lines().count(), 4 * (2 + 2 + 1 + 1 + 1));
        assert_eq!(rep.by_depth.len(), 2);
        assert_eq!(rep.by_distribution.keys().collect::<Vec<_>>(), vec!["in"]);
    }
}
