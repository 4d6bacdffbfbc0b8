//! Query encoders over a unified token embedding table.
//!
//! Sequence encoders (bidirectional LSTM, Transformer) read the linearized
//! query and return the state at position 0. Tree encoders read the query
//! tree and return the root state. Answer scores are inner products between
//! the query embedding and entity rows of the table.
//!
//! Parameters live in one flat `f64` buffer described by a [`ParamLayout`];
//! gradients use the same layout.

mod grad_check;
mod lstm;
mod nn;
mod params;
mod transformer;
mod tree_lstm;

pub use grad_check::{grad_check, GradCheckError, GradCheckReport, REL_FLOOR};
pub use nn::{log_sum_exp, softmax_in_place};
pub use params::{ParamLayout, Tensor, TensorSpec};
pub use transformer::PositionKind;
pub use tree_lstm::FlatTree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linearize::{delinearize, linearize, LinearizeError, Token, Vocabulary};
use crate::query::Query;
use crate::rng;
use transformer::Transformer;

const INIT_STREAM: u64 = 3;
const MAX_PARAMS: usize = 1 << 30;
const MAX_DIM: usize = 1 << 14;
const MAX_LAYERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "tree-lstm")]
    TreeLstm,
    #[serde(rename = "tree-lstm-no-cell")]
    TreeLstmNoMemoryCell,
    #[serde(rename = "transformer-ape")]
    TransformerApe,
    #[serde(rename = "transformer-rpe")]
    TransformerRpe,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Lstm,
        Architecture::TreeLstm,
        Architecture::TreeLstmNoMemoryCell,
        Architecture::TransformerApe,
        Architecture::TransformerRpe,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::TreeLstm => "tree-lstm",
            Architecture::TreeLstmNoMemoryCell => "tree-lstm-no-cell",
            Architecture::TransformerApe => "transformer-ape",
            Architecture::TransformerRpe => "transformer-rpe",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, Architecture::TreeLstm | Architecture::TreeLstmNoMemoryCell)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Architecture::ALL.into_iter().find(|a| a.tag() == s).ok_or_else(|| format!("unknown architecture {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub dim: usize,
    pub layers: usize,
    /// Attention heads (Transformer only).
    pub heads: usize,
    /// Absolute position table size (Transformer-APE only).
    pub max_len: usize,
    /// Maximum relative distance (Transformer-RPE only).
    pub rpe_clip: usize,
    /// Score against the entity rows of the input table instead of a
    /// separate answer table.
    pub tied_embeddings: bool,
}

impl ModelConfig {
    pub fn desk(architecture: Architecture) -> Self {
        ModelConfig { architecture, dim: 64, layers: 2, heads: 4, max_len: 128, rpe_clip: 16, tied_embeddings: true }
    }

    pub fn paper_scale(architecture: Architecture) -> Self {
        ModelConfig { dim: 400, layers: 3, heads: 16, ..Self::desk(architecture) }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.dim == 0 || self.layers == 0 {
            return bad("dim and layers must be positive".into());
        }
        if self.dim > MAX_DIM || self.layers > MAX_LAYERS || self.max_len > MAX_DIM || self.rpe_clip > MAX_DIM {
            return bad(format!("sizes exceed limits (dim ≤ {MAX_DIM}, layers ≤ {MAX_LAYERS})"));
        }
        match self.architecture {
            Architecture::Lstm if !self.dim.is_multiple_of(2) => {
                bad(format!("bidirectional LSTM needs an even dim, got {}", self.dim))
            }
            Architecture::TransformerApe | Architecture::TransformerRpe
                if self.heads == 0 || !self.dim.is_multiple_of(self.heads) =>
            {
                bad(format!("dim {} is not divisible by {} heads", self.dim, self.heads))
            }
            Architecture::TransformerApe if self.max_len == 0 => bad("max_len must be positive".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error("sequence of {len} tokens exceeds the position table ({max})")]
    TooLong { len: usize, max: usize },
    #[error("token id {0} is outside the embedding table")]
    TokenOutOfRange(u32),
}

#[derive(Debug, Clone)]
enum Body {
    Lstm(Vec<lstm::Layer>),
    Tree(Vec<tree_lstm::Layer>),
    Transformer(Transformer),
}

/// An encoder input: token ids for sequence models, a flattened tree for
/// tree models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Sequence(Vec<Token>),
    Tree(FlatTree),
}

impl Input {
    fn tokens(&self) -> &[Token] {
        match self {
            Input::Sequence(t) => t,
            Input::Tree(t) => &t.tokens,
        }
    }
}

enum TraceInner {
    Lstm(lstm::Trace),
    Tree(tree_lstm::Trace),
    Transformer(transformer::Trace),
}

/// Result of a forward pass, kept for the backward pass.
pub struct Forward {
    pub embedding: Array1<f64>,
    trace: TraceInner,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabulary,
    layout: ParamLayout,
    params: Vec<f64>,
    embedding: Tensor,
    answers: Tensor,
    body: Body,
}

impl Model {
    fn skeleton(config: ModelConfig, vocab: Vocabulary) -> Result<Model, ModelError> {
        let (layout, embedding, answers, body) = Self::plan(&config, &vocab)?;
        let params = vec![0.0; layout.len()];
        Ok(Model { config, vocab, layout, params, embedding, answers, body })
    }

    fn plan(config: &ModelConfig, vocab: &Vocabulary) -> Result<(ParamLayout, Tensor, Tensor, Body), ModelError> {
        config.validate()?;
        let d = config.dim;
        if vocab.size().checked_mul(d).is_none_or(|n| n > MAX_PARAMS) {
            return Err(ModelError::Config(format!("{} × {d} embedding table is too large", vocab.size())));
        }
        let mut layout = ParamLayout::default();
        let embedding = layout.add("embedding", vocab.size(), d);
        let answers = if config.tied_embeddings {
            Tensor { offset: embedding.offset + vocab.entity_offset() * d, rows: vocab.num_entities(), cols: d }
        } else {
            layout.add("answers", vocab.num_entities(), d)
        };
        let body = match config.architecture {
            Architecture::Lstm => Body::Lstm(lstm::build(&mut layout, d, config.layers)),
            Architecture::TreeLstm => Body::Tree(tree_lstm::build(&mut layout, d, config.layers, true)),
            Architecture::TreeLstmNoMemoryCell => Body::Tree(tree_lstm::build(&mut layout, d, config.layers, false)),
            Architecture::TransformerApe => Body::Transformer(Transformer::build(
                &mut layout,
                d,
                config.layers,
                config.heads,
                PositionKind::Absolute { max_len: config.max_len },
            )),
            Architecture::TransformerRpe => Body::Transformer(Transformer::build(
                &mut layout,
                d,
                config.layers,
                config.heads,
                PositionKind::Relative { clip: config.rpe_clip },
            )),
        };
        if layout.len() > MAX_PARAMS {
            return Err(ModelError::Config(format!("{} parameters exceed the limit", layout.len())));
        }
        Ok((layout, embedding, answers, body))
    }

    /// Number of parameters a model with this configuration would have.
    pub fn param_count(config: &ModelConfig, vocab: &Vocabulary) -> Result<usize, ModelError> {
        Ok(Self::plan(config, vocab)?.0.len())
    }

    /// All parameters drawn uniformly from `±1/√d`; layer norms start as
    /// the identity.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Model, ModelError> {
        let mut m = Self::skeleton(config, vocab)?;
        let bound = 1.0 / (m.config.dim as f64).sqrt();
        let mut r = rng::stream(seed, &[INIT_STREAM]);
        m.params.iter_mut().for_each(|p| *p = r.gen_range(-bound..bound));
        if let Body::Transformer(t) = &m.body {
            t.init_norms(&mut m.params);
        }
        Ok(m)
    }

    pub fn zeros(config: ModelConfig, vocab: Vocabulary) -> Result<Model, ModelError> {
        Self::skeleton(config, vocab)
    }

    /// Rebuilds a model around stored parameters; the buffer length must
    /// match the layout implied by `config` and `vocab`.
    pub fn from_params(config: ModelConfig, vocab: Vocabulary, params: Vec<f64>) -> Result<Model, ModelError> {
        let (layout, embedding, answers, body) = Self::plan(&config, &vocab)?;
        if params.len() != layout.len() {
            return Err(ModelError::Config(format!("expected {} parameters, found {}", layout.len(), params.len())));
        }
        Ok(Model { config, vocab, layout, params, embedding, answers, body })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn embedding_table(&self) -> Tensor {
        self.embedding
    }

    pub fn answer_table(&self) -> Tensor {
        self.answers
    }

    /// One table row per token.
    pub fn embed(&self, tokens: &[Token]) -> Result<Array2<f64>, ModelError> {
        let d = self.config.dim;
        let mut x = Array2::zeros((tokens.len(), d));
        for (i, t) in tokens.iter().enumerate() {
            if t.index() >= self.vocab.size() {
                return Err(ModelError::TokenOutOfRange(t.0));
            }
            x.row_mut(i).assign(&ArrayView1::from(self.embedding.row(&self.params, t.index())));
        }
        Ok(x)
    }

    fn check_len(&self, len: usize) -> Result<(), ModelError> {
        if let Body::Transformer(t) = &self.body {
            if let Some(max) = t.max_len() {
                if len > max {
                    return Err(ModelError::TooLong { len, max });
                }
            }
        }
        Ok(())
    }

    pub fn prepare(&self, q: &Query) -> Result<Input, ModelError> {
        if self.config.architecture.is_tree() {
            return Ok(Input::Tree(FlatTree::from_query(q, &self.vocab)?));
        }
        let seq = linearize(q, &self.vocab)?;
        self.check_len(seq.len())?;
        Ok(Input::Sequence(seq.as_slice().to_vec()))
    }

    /// Accepts a linearized sequence for any architecture; tree models
    /// rebuild the tree from it.
    pub fn prepare_tokens(&self, tokens: &[Token]) -> Result<Input, ModelError> {
        if self.config.architecture.is_tree() {
            let q = delinearize(tokens, &self.vocab)?;
            return Ok(Input::Tree(FlatTree::from_query(&q, &self.vocab)?));
        }
        if let Some(t) = tokens.iter().find(|t| t.index() >= self.vocab.size()) {
            return Err(ModelError::TokenOutOfRange(t.0));
        }
        self.check_len(tokens.len())?;
        Ok(Input::Sequence(tokens.to_vec()))
    }

    pub fn forward(&self, input: &Input) -> Result<Forward, ModelError> {
        let x = self.embed(input.tokens())?;
        let p = &self.params;
        let (embedding, trace) = match (&self.body, input) {
            (Body::Lstm(layers), Input::Sequence(_)) => {
                let (e, t) = lstm::forward(layers, p, x);
                (e, TraceInner::Lstm(t))
            }
            (Body::Transformer(tf), Input::Sequence(s)) => {
                self.check_len(s.len())?;
                let (e, t) = tf.forward(p, x);
                (e, TraceInner::Transformer(t))
            }
            (Body::Tree(layers), Input::Tree(tree)) => {
                let (e, t) = tree_lstm::forward(layers, p, tree, x);
                (e, TraceInner::Tree(t))
            }
            _ => return Err(ModelError::Config(format!("input kind does not match {}", self.config.architecture))),
        };
        Ok(Forward { embedding, trace })
    }

    /// Accumulates into `grad` the gradient of a scalar whose derivative
    /// with respect to the query embedding is `d_emb`.
    pub fn backward(&self, input: &Input, fwd: &Forward, d_emb: ArrayView1<f64>, grad: &mut [f64]) {
        let p = &self.params;
        let dx = match (&self.body, &fwd.trace, input) {
            (Body::Lstm(layers), TraceInner::Lstm(t), _) => lstm::backward(layers, p, t, d_emb, grad),
            (Body::Transformer(tf), TraceInner::Transformer(t), _) => tf.backward(p, t, d_emb, grad),
            (Body::Tree(layers), TraceInner::Tree(t), Input::Tree(tree)) => {
                tree_lstm::backward(layers, p, tree, t, d_emb, grad)
            }
            _ => unreachable!("trace produced by this model for this input"),
        };
        for (i, tok) in input.tokens().iter().enumerate() {
            let row = self.embedding.row_mut(grad, tok.index());
            row.iter_mut().zip(dx.row(i)).for_each(|(g, d)| *g += d);
        }
    }

    pub fn encode(&self, q: &Query) -> Result<Array1<f64>, ModelError> {
        Ok(self.forward(&self.prepare(q)?)?.embedding)
    }

    /// `⟨e_q, e_v⟩` for every entity `v`.
    pub fn score_all(&self, e_q: ArrayView1<f64>) -> Array1<f64> {
        self.answers.view(&self.params).dot(&e_q)
    }

    /// Adds `Σ_v d_scores[v] · e_v` to the query-embedding gradient it
    /// returns, and `d_scores[v] · e_q` to each answer row of `grad`.
    pub fn score_backward(&self, e_q: ArrayView1<f64>, d_scores: ArrayView1<f64>, grad: &mut [f64]) -> Array1<f64> {
        let d_emb = self.answers.view(&self.params).t().dot(&d_scores);
        nn::add_outer(self.answers.view_mut(grad), d_scores, e_q);
        d_emb
    }
}
