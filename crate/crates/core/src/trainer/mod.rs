//! Full-softmax training of query encoders with Adam.
//!
//! `p(q, v) = exp⟨e_q, e_v⟩ / Σ_u exp⟨e_q, e_u⟩` over every entity, and a
//! batch of `N` query–answer pairs costs `L = −(1/N) Σ log p(q_i, v_i)`.

mod checkpoint;
mod config;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{ConfigError, Precision, TrainConfig, KEYS as CONFIG_KEYS};

use std::collections::HashMap;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{log_sum_exp, softmax_in_place, Model, ModelError};
use crate::eval::{evaluate, Filtering, Mode};
use crate::graph::EntityId;
use crate::linearize::{linearize, Token, Vocabulary};
use crate::rng;
use crate::sampler::Dataset;

const SHUFFLE_STREAM: u64 = 4;
/// Distinct queries per gradient work unit. Fixed so the reduction order,
/// and hence the result, does not depend on the thread count.
const CHUNK: usize = 8;
const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_EPOCHS: usize = 3;

/// One `(record index, answer)` pair per train-layer answer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pairs {
    pub pairs: Vec<(usize, EntityId)>,
    /// Records without train answers.
    pub skipped: usize,
}

pub fn make_pairs(ds: &Dataset) -> Pairs {
    let mut out = Pairs::default();
    for (i, r) in ds.records.iter().enumerate() {
        if r.train_answers.is_empty() {
            out.skipped += 1;
        }
        out.pairs.extend(r.train_answers.iter().map(|v| (i, v)));
    }
    out
}

/// Padded token rows with one answer per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub width: usize,
    /// Row-major `len × width`, padded with `PAD`.
    pub tokens: Vec<Token>,
    pub lengths: Vec<usize>,
    pub answers: Vec<EntityId>,
}

impl Batch {
    pub fn new(rows: &[(&[Token], EntityId)]) -> Batch {
        let width = rows.iter().map(|(t, _)| t.len()).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(rows.len() * width);
        for (t, _) in rows {
            tokens.extend_from_slice(t);
            tokens.extend(std::iter::repeat_n(Token::PAD, width - t.len()));
        }
        Batch {
            width,
            tokens,
            lengths: rows.iter().map(|(t, _)| t.len()).collect(),
            answers: rows.iter().map(|&(_, v)| v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn mask(&self, row: usize, pos: usize) -> bool {
        pos < self.lengths[row]
    }

    /// Row `i` without padding.
    pub fn row(&self, i: usize) -> &[Token] {
        &self.tokens[i * self.width..i * self.width + self.lengths[i]]
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite loss {loss} in a batch of {rows} rows (epoch {epoch})")]
    NonFinite { loss: f64, rows: usize, epoch: usize },
    #[error(
        "diverged at epoch {epoch}: loss {loss:.4} stayed above {factor}× the initial {initial:.4} for {span} epochs"
    )]
    Diverged { epoch: usize, loss: f64, initial: f64, factor: f64, span: usize },
    #[error("no training pairs")]
    NoPairs,
    #[error("evaluation: {0}")]
    Eval(#[from] crate::eval::EvalError),
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// `max |Σ_v p(q, v) − 1|` over the batch's queries.
    pub prob_sum_error: f64,
    /// Distinct queries encoded.
    pub queries: usize,
}

struct Partial {
    loss: f64,
    grad: Vec<f64>,
    prob_err: f64,
}

fn group_loss(
    model: &Model,
    tokens: &[Token],
    answers: &[EntityId],
    inv_n: f64,
    part: &mut Partial,
) -> Result<(), ModelError> {
    let input = model.prepare_tokens(tokens)?;
    let fwd = model.forward(&input)?;
    let scores = model.score_all(fwd.embedding.view());
    let s = scores.as_slice().expect("contiguous");
    let lse = log_sum_exp(s);
    let mut p = s.to_vec();
    softmax_in_place(&mut p);
    part.prob_err = part.prob_err.max((p.iter().sum::<f64>() - 1.0).abs());
    let k = answers.len() as f64;
    let mut ds: Vec<f64> = p.iter().map(|&pi| pi * k * inv_n).collect();
    for v in answers {
        part.loss += lse - s[v.index()];
        ds[v.index()] -= inv_n;
    }
    let d_emb = model.score_backward(fwd.embedding.view(), Array1::from(ds).view(), &mut part.grad);
    model.backward(&input, &fwd, d_emb.view(), &mut part.grad);
    Ok(())
}

/// Mean negative log-likelihood of the batch and its gradient with respect
/// to every parameter. Identical rows are encoded once.
pub fn loss(model: &Model, batch: &Batch) -> Result<LossOutput, ModelError> {
    let n = batch.len();
    let mut index: HashMap<&[Token], usize> = HashMap::new();
    let mut groups: Vec<(&[Token], Vec<EntityId>)> = Vec::new();
    for i in 0..n {
        let row = batch.row(i);
        let g = *index.entry(row).or_insert_with(|| {
            groups.push((row, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(batch.answers[i]);
    }
    let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let np = model.num_params();
    let partials: Vec<Partial> = groups
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut part = Partial { loss: 0.0, grad: vec![0.0; np], prob_err: 0.0 };
            for (tokens, answers) in chunk {
                group_loss(model, tokens, answers, inv_n, &mut part)?;
            }
            Ok(part)
        })
        .collect::<Result<_, ModelError>>()?;
    let mut out = LossOutput { loss: 0.0, grad: vec![0.0; np], prob_sum_error: 0.0, queries: groups.len() };
    for p in partials {
        out.loss += p.loss;
        out.grad.iter_mut().zip(&p.grad).for_each(|(a, b)| *a += b);
        out.prob_sum_error = out.prob_sum_error.max(p.prob_err);
    }
    out.loss *= inv_n;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(n: usize) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Trips once the epoch loss has exceeded `factor ×` the first epoch's
/// loss for `span` consecutive epochs.
#[derive(Debug, Clone)]
pub struct DivergenceGuard {
    initial: Option<f64>,
    above: usize,
    pub factor: f64,
    pub span: usize,
}

impl Default for DivergenceGuard {
    fn default() -> Self {
        DivergenceGuard { initial: None, above: 0, factor: DIVERGENCE_FACTOR, span: DIVERGENCE_EPOCHS }
    }
}

impl DivergenceGuard {
    /// Records an epoch loss; true when training should halt.
    pub fn observe(&mut self, loss: f64) -> bool {
        let init = *self.initial.get_or_insert(loss);
        self.above = if loss > self.factor * init { self.above + 1 } else { 0 };
        self.above >= self.span
    }

    pub fn initial(&self) -> Option<f64> {
        self.initial
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Mean-over-types MRR with validation answers as targets and training
    /// answers as the known set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_mrr: Option<f64>,
    pub prob_sum_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub pairs: usize,
    pub skipped_records: usize,
}

/// The vocabulary a dataset's ids live in.
pub fn dataset_vocabulary(ds: &Dataset) -> Vocabulary {
    Vocabulary::new(ds.provenance.num_entities, ds.provenance.num_relations)
}

/// Trains from a fresh initialization.
pub fn train(cfg: &TrainConfig, ds: &Dataset, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let model = Model::new(cfg.model.clone(), dataset_vocabulary(ds), cfg.seed)?;
    let ckpt = Checkpoint { adam: Adam::new(model.num_params()), model, config: cfg.clone(), epoch: 0 };
    resume(ckpt, ds, on_epoch)
}

/// Continues training a checkpoint up to `config.epochs`.
pub fn resume(
    mut ckpt: Checkpoint,
    ds: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    let cfg = ckpt.config.clone();
    let pairs = make_pairs(ds);
    if pairs.skipped > 0 {
        log::warn!("{} records have no training answers and were skipped", pairs.skipped);
    }
    if pairs.pairs.is_empty() && cfg.epochs > ckpt.epoch {
        return Err(TrainError::NoPairs);
    }
    let tokens: Vec<Vec<Token>> = ds
        .records
        .iter()
        .map(|r| linearize(&r.query, ckpt.model.vocab()).map(|s| s.as_slice().to_vec()))
        .collect::<Result<_, _>>()
        .map_err(ModelError::from)?;
    let mut log = Vec::new();
    let mut guard = DivergenceGuard::default();
    for epoch in ckpt.epoch + 1..=cfg.epochs {
        let mut order = pairs.pairs.clone();
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut total = 0.0;
        let mut prob_err: f64 = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<(&[Token], EntityId)> = chunk.iter().map(|&(r, v)| (tokens[r].as_slice(), v)).collect();
            let batch = Batch::new(&rows);
            let out = loss(&ckpt.model, &batch)?;
            if !out.loss.is_finite() {
                return Err(TrainError::NonFinite { loss: out.loss, rows: batch.len(), epoch });
            }
            total += out.loss * batch.len() as f64;
            prob_err = prob_err.max(out.prob_sum_error);
            ckpt.adam.update(ckpt.model.params_mut(), &out.grad, &cfg);
        }
        ckpt.epoch = epoch;
        let mean = total / order.len() as f64;
        let valid_mrr = if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            evaluate(&ckpt.model, ds, Mode::ValidationSwap, Filtering::Filtered)?.mean_over_types.map(|m| m.mrr)
        } else {
            None
        };
        let rec = EpochRecord { epoch, loss: mean, valid_mrr, prob_sum_error: prob_err };
        log::info!("epoch {epoch}: loss {mean:.5}");
        on_epoch(&rec);
        log.push(rec);
        if guard.observe(mean) {
            return Err(TrainError::Diverged {
                epoch,
                loss: mean,
                initial: guard.initial().unwrap_or(mean),
                factor: guard.factor,
                span: guard.span,
            });
        }
    }
    Ok(TrainOutcome { checkpoint: ckpt, log, pairs: pairs.pairs.len(), skipped_records: pairs.skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{Architecture, ModelConfig};
    use crate::graph::{split_edges, synthetic};
    use crate::query::{parse_formula, parse_grounded};
    use crate::sampler::{sample_dataset, SamplerConfig};

    fn toy_dataset() -> Dataset {
        let l = split_edges(&synthetic(40, 4, 200, 1), (8, 1, 1), 1).unwrap();
        let types: Vec<_> =
            ["(p,(e))", "(p,(p,(e)))", "(i,(p,(e)),(p,(e)))"].iter().map(|f| parse_formula(f).unwrap()).collect();
        let cfg = SamplerConfig { per_type_count: 10, seed: 2, ..Default::default() };
        sample_dataset(&l, &types, &cfg, "toy").dataset
    }

    fn tiny(arch: Architecture) -> TrainConfig {
        TrainConfig {
            model: ModelConfig { dim: 8, layers: 1, heads: 2, max_len: 32, rpe_clip: 4, ..ModelConfig::desk(arch) },
            batch_size: 16,
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn pairs_count_answers() {
        let ds = toy_dataset();
        let p = make_pairs(&ds);
        let want: usize = ds.records.iter().map(|r| r.train_answers.len()).sum();
        assert_eq!(p.pairs.len(), want);
        assert_eq!(make_pairs(&Dataset { records: vec![], ..ds }).pairs.len(), 0);
    }

    #[test]
    fn zero_model_loss_is_log_universe() {
        let v = Vocabulary::new(100, 3);
        let m = Model::zeros(tiny(Architecture::Lstm).model, v).unwrap();
        let q = linearize(&parse_grounded("(p,(1),(e,(4)))").unwrap(), &v).unwrap();
        let b = Batch::new(&[(q.as_slice(), EntityId(7)), (q.as_slice(), EntityId(9))]);
        let out = loss(&m, &b).unwrap();
        assert!((out.loss - 100f64.ln()).abs() < 1e-12);
        assert_eq!(out.queries, 1);
        let one = Model::zeros(tiny(Architecture::Lstm).model, Vocabulary::new(1, 3)).unwrap();
        let q1 = linearize(&parse_grounded("(p,(1),(e,(0)))").unwrap(), one.vocab()).unwrap();
        assert_eq!(loss(&one, &Batch::new(&[(q1.as_slice(), EntityId(0))])).unwrap().loss, 0.0);
    }

    #[test]
    fn batch_padding_and_mask() {
        let a = [Token::LPAREN, Token::P, Token(9), Token(20), Token::RPAREN];
        let b = [Token(21)];
        let batch = Batch::new(&[(&a, EntityId(1)), (&b, EntityId(2))]);
        assert_eq!(batch.width, 5);
        assert_eq!(batch.row(1), &b);
        assert!(batch.mask(1, 0) && !batch.mask(1, 1));
        assert_eq!(batch.tokens[6], Token::PAD);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = toy_dataset();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 1, ..tiny(Architecture::Lstm) };
        let out = train(&cfg, &ds, |_| {}).unwrap();
        let init = Model::new(cfg.model.clone(), dataset_vocabulary(&ds), cfg.seed).unwrap();
        assert_eq!(out.checkpoint.model.params(), init.params());
    }

    #[test]
    fn zero_epochs_is_initialization_and_runs_repeat() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 0, ..tiny(Architecture::TransformerRpe) };
        let out = train(&cfg, &ds, |_| {}).unwrap();
        let init = Model::new(cfg.model.clone(), dataset_vocabulary(&ds), cfg.seed).unwrap();
        assert_eq!(out.checkpoint.model.params(), init.params());
        assert!(out.log.is_empty());
        for arch in Architecture::ALL {
            let cfg = tiny(arch);
            let a = train(&cfg, &ds, |_| {}).unwrap();
            let b = train(&cfg, &ds, |_| {}).unwrap();
            assert_eq!(a.checkpoint.model.params(), b.checkpoint.model.params(), "{arch}");
            assert!(a.log.iter().all(|r| r.prob_sum_error < 1e-9));
        }
    }

    #[test]
    fn reduction_is_independent_of_thread_count() {
        let ds = toy_dataset();
        let cfg = tiny(Architecture::TreeLstm);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| train(&cfg, &ds, |_| {}).unwrap());
        let b = four.install(|| train(&cfg, &ds, |_| {}).unwrap());
        assert_eq!(a.checkpoint.model.params(), b.checkpoint.model.params());
    }

    #[test]
    fn loss_decreases_on_toy_data() {
        let ds = toy_dataset();
        let cfg = TrainConfig { epochs: 15, learning_rate: 1e-2, ..tiny(Architecture::Lstm) };
        let out = train(&cfg, &ds, |_| {}).unwrap();
        assert!(out.log.last().unwrap().loss < out.log[0].loss);
    }

    #[test]
    fn pad_row_is_never_read() {
        let v = Vocabulary::new(30, 4);
        let mut m = Model::new(tiny(Architecture::TransformerApe).model, v, 1).unwrap();
        let long = linearize(&parse_grounded("(p,(1),(p,(2),(e,(4))))").unwrap(), &v).unwrap();
        let short = linearize(&parse_grounded("(p,(1),(e,(4)))").unwrap(), &v).unwrap();
        let b = Batch::new(&[(long.as_slice(), EntityId(3)), (short.as_slice(), EntityId(5))]);
        let before = loss(&m, &b).unwrap().loss;
        let pad = m.embedding_table().row_range(Token::PAD.index());
        m.params_mut()[pad].iter_mut().for_each(|x| *x += 5.0);
        assert_eq!(loss(&m, &b).unwrap().loss, before);
    }

    #[test]
    fn loss_matches_reference_recomputation() {
        let v = Vocabulary::new(10, 3);
        let m = Model::new(tiny(Architecture::Lstm).model, v, 3).unwrap();
        let q1 = parse_grounded("(p,(0),(e,(2)))").unwrap();
        let q2 = parse_grounded("(i,(p,(1),(e,(3))),(p,(2),(e,(5))))").unwrap();
        let (t1, t2) = (linearize(&q1, &v).unwrap(), linearize(&q2, &v).unwrap());
        let b = Batch::new(&[(t1.as_slice(), EntityId(4)), (t2.as_slice(), EntityId(8))]);
        let out = loss(&m, &b).unwrap();
        let mut want = 0.0;
        for (q, target) in [(&q1, 4usize), (&q2, 8)] {
            let e = m.encode(q).unwrap();
            let s: Vec<f64> = (0..10)
                .map(|i| {
                    let row = m.answer_table().row(m.params(), i);
                    row.iter().zip(e.iter()).map(|(a, b)| a * b).sum()
                })
                .collect();
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            want -= (s[target].exp() / z).ln();
        }
        want /= 2.0;
        assert!((out.loss - want).abs() < 1e-12, "{} vs {want}", out.loss);
    }

    #[test]
    fn batch_loss_gradient_matches_differences() {
        let v = Vocabulary::new(6, 3);
        for arch in Architecture::ALL {
            let m = Model::new(tiny(arch).model, v, 7).unwrap();
            let q1 = linearize(&parse_grounded("(p,(0),(e,(2)))").unwrap(), &v).unwrap();
            let q2 = linearize(&parse_grounded("(u,(p,(1),(e,(3))),(n,(e,(5))))").unwrap(), &v).unwrap();
            let b =
                Batch::new(&[(q1.as_slice(), EntityId(4)), (q2.as_slice(), EntityId(1)), (q1.as_slice(), EntityId(0))]);
            let g = loss(&m, &b).unwrap().grad;
            let f = |p: &[f64]| {
                let mm = Model::from_params(m.config().clone(), v, p.to_vec()).unwrap();
                loss(&mm, &b).unwrap().loss
            };
            let r = crate::encoders::grad_check(f, m.params(), &g, 1e-5, 3000, 1).unwrap();
            assert!(r.max_rel_error < 1e-4, "{arch}: {r:?}");
        }
    }

    #[test]
    fn divergence_guard_needs_three_consecutive_epochs() {
        let mut g = DivergenceGuard::default();
        assert!(!g.observe(1.0));
        assert!(!g.observe(11.0));
        assert!(!g.observe(12.0));
        assert!(!g.observe(9.0));
        assert!(!g.observe(20.0));
        assert!(!g.observe(20.0));
        assert!(g.observe(10.5));
    }
}
