//! Linearization of computation trees into bracketed token sequences over a
//! unified vocabulary, and the inverse used for round-trip checking.
//!
//! Token-id layout (fixed, recorded in checkpoints through
//! [`Vocabulary::layout_hash`]):
//!
//! | ids                      | tokens                         |
//! |--------------------------|--------------------------------|
//! | 0..7                     | `PAD [(] [)] [P] [I] [U] [N]`  |
//! | 7 .. 7+R                 | relations                      |
//! | 7+R .. 7+R+V             | entities                       |

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Dictionary, EntityId, KnowledgeGraph, RelationId};
use crate::query::{Branches, Node, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl Token {
    pub const PAD: Token = Token(0);
    pub const LPAREN: Token = Token(1);
    pub const RPAREN: Token = Token(2);
    pub const P: Token = Token(3);
    pub const I: Token = Token(4);
    pub const U: Token = Token(5);
    pub const N: Token = Token(6);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const NUM_SPECIAL: usize = 7;
const LAYOUT_VERSION: u32 = 1;

/// What a token id stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Pad,
    LParen,
    RParen,
    P,
    I,
    U,
    N,
    Relation(RelationId),
    Entity(EntityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    num_relations: usize,
    num_entities: usize,
}

impl Vocabulary {
    pub fn new(num_entities: usize, num_relations: usize) -> Self {
        Vocabulary { num_relations, num_entities }
    }

    pub fn for_graph(kg: &KnowledgeGraph) -> Self {
        Self::new(kg.num_entities(), kg.num_relations())
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn size(&self) -> usize {
        NUM_SPECIAL + self.num_relations + self.num_entities
    }

    /// First entity token id.
    pub fn entity_offset(&self) -> usize {
        NUM_SPECIAL + self.num_relations
    }

    pub fn relation_token(&self, r: RelationId) -> Option<Token> {
        (r.index() < self.num_relations).then(|| Token((NUM_SPECIAL + r.index()) as u32))
    }

    pub fn entity_token(&self, e: EntityId) -> Option<Token> {
        (e.index() < self.num_entities).then(|| Token((self.entity_offset() + e.index()) as u32))
    }

    pub fn kind(&self, t: Token) -> Option<TokenKind> {
        let i = t.index();
        Some(match i {
            0 => TokenKind::Pad,
            1 => TokenKind::LParen,
            2 => TokenKind::RParen,
            3 => TokenKind::P,
            4 => TokenKind::I,
            5 => TokenKind::U,
            6 => TokenKind::N,
            _ if i < self.entity_offset() => TokenKind::Relation(RelationId((i - NUM_SPECIAL) as u32)),
            _ if i < self.size() => TokenKind::Entity(EntityId((i - self.entity_offset()) as u32)),
            _ => return None,
        })
    }

    /// Identifies the id layout and universe sizes; checkpoints refuse to
    /// load against a vocabulary with a different hash.
    pub fn layout_hash(&self) -> String {
        let digest =
            Sha256::digest(format!("cqa-vocab-v{LAYOUT_VERSION}:{}:{}", self.num_relations, self.num_entities));
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearizeError {
    #[error("{kind} id {id} is outside the vocabulary")]
    IdOutOfVocabulary { kind: &'static str, id: u32 },
    #[error("token {0} is outside the vocabulary")]
    UnknownToken(u32),
    #[error("empty token sequence")]
    Empty,
    #[error("unbalanced parentheses at token {0}")]
    Unbalanced(usize),
    #[error("unexpected token {token:?} at position {pos}")]
    Unexpected { pos: usize, token: TokenKind },
    #[error("'{op}' at position {pos} has {found} operand(s)")]
    Arity { op: char, pos: usize, found: usize },
    #[error("trailing tokens from position {0}")]
    Trailing(usize),
    #[error("nesting too deep at position {0}")]
    TooDeep(usize),
}

/// A linearized query. Raw sequences never contain `PAD`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn as_slice(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Debug text such as `[(][P][r7][e12][)]`.
    pub fn render(&self, vocab: &Vocabulary) -> String {
        self.render_with(vocab, None, None)
    }

    /// Like [`render`](Self::render), substituting dictionary labels when present.
    pub fn render_with(
        &self,
        vocab: &Vocabulary,
        relations: Option<&Dictionary>,
        entities: Option<&Dictionary>,
    ) -> String {
        let mut s = String::with_capacity(self.tokens.len() * 4);
        for &t in &self.tokens {
            let _ = match vocab.kind(t) {
                Some(TokenKind::Pad) => write!(s, "[PAD]"),
                Some(TokenKind::LParen) => write!(s, "[(]"),
                Some(TokenKind::RParen) => write!(s, "[)]"),
                Some(TokenKind::P) => write!(s, "[P]"),
                Some(TokenKind::I) => write!(s, "[I]"),
                Some(TokenKind::U) => write!(s, "[U]"),
                Some(TokenKind::N) => write!(s, "[N]"),
                Some(TokenKind::Relation(r)) => match relations.and_then(|d| d.label(r.0)) {
                    Some(l) => write!(s, "[{l}]"),
                    None => write!(s, "[r{r}]"),
                },
                Some(TokenKind::Entity(e)) => match entities.and_then(|d| d.label(e.0)) {
                    Some(l) => write!(s, "[{l}]"),
                    None => write!(s, "[e{e}]"),
                },
                None => write!(s, "[?{}]", t.0),
            };
        }
        s
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.tokens.iter().map(|t| t.0.to_string()).collect();
        f.write_str(&ids.join(" "))
    }
}

pub fn build_vocabulary(kg: &KnowledgeGraph) -> Vocabulary {
    Vocabulary::for_graph(kg)
}

/// Projection → `[(][P][rel] child [)]`; intersection/union →
/// `[(][I|U] children… [)]`; negation → `[(][N] child [)]`; anchor → its
/// entity token.
pub fn linearize(q: &Query, vocab: &Vocabulary) -> Result<TokenSequence, LinearizeError> {
    let mut tokens = Vec::new();
    emit(q, vocab, &mut tokens)?;
    Ok(TokenSequence { tokens })
}

fn emit(n: &Query, vocab: &Vocabulary, out: &mut Vec<Token>) -> Result<(), LinearizeError> {
    match n {
        Node::Anchor(e) => {
            out.push(vocab.entity_token(*e).ok_or(LinearizeError::IdOutOfVocabulary { kind: "entity", id: e.0 })?)
        }
        Node::Projection(r, c) => {
            let rel =
                vocab.relation_token(*r).ok_or(LinearizeError::IdOutOfVocabulary { kind: "relation", id: r.0 })?;
            out.extend([Token::LPAREN, Token::P, rel]);
            emit(c, vocab, out)?;
            out.push(Token::RPAREN);
        }
        Node::Intersection(b) | Node::Union(b) => {
            let op = if matches!(n, Node::Intersection(_)) { Token::I } else { Token::U };
            out.extend([Token::LPAREN, op]);
            for c in b {
                emit(c, vocab, out)?;
            }
            out.push(Token::RPAREN);
        }
        Node::Negation(c) => {
            out.extend([Token::LPAREN, Token::N]);
            emit(c, vocab, out)?;
            out.push(Token::RPAREN);
        }
    }
    Ok(())
}

const MAX_NESTING: usize = 256;

/// Rebuilds the computation tree from a linearized sequence.
pub fn delinearize(tokens: &[Token], vocab: &Vocabulary) -> Result<Query, LinearizeError> {
    if tokens.is_empty() {
        return Err(LinearizeError::Empty);
    }
    let mut r = Reader { tokens, vocab, pos: 0 };
    let q = r.node(0)?;
    if r.pos != tokens.len() {
        return Err(LinearizeError::Trailing(r.pos));
    }
    Ok(q)
}

struct Reader<'a> {
    tokens: &'a [Token],
    vocab: &'a Vocabulary,
    pos: usize,
}

impl Reader<'_> {
    fn next(&mut self) -> Result<TokenKind, LinearizeError> {
        let t = *self.tokens.get(self.pos).ok_or(LinearizeError::Unbalanced(self.pos))?;
        self.pos += 1;
        self.vocab.kind(t).ok_or(LinearizeError::UnknownToken(t.0))
    }

    fn peek_is_rparen(&self) -> bool {
        self.tokens.get(self.pos) == Some(&Token::RPAREN)
    }

    fn node(&mut self, depth: usize) -> Result<Query, LinearizeError> {
        let pos = self.pos;
        if depth > MAX_NESTING {
            return Err(LinearizeError::TooDeep(pos));
        }
        match self.next()? {
            TokenKind::Entity(e) => return Ok(Node::Anchor(e)),
            TokenKind::LParen => {}
            token => return Err(LinearizeError::Unexpected { pos, token }),
        }
        let op_pos = self.pos;
        let op = self.next()?;
        let node = match op {
            TokenKind::P => {
                let rel_pos = self.pos;
                let r = match self.next()? {
                    TokenKind::Relation(r) => r,
                    token => return Err(LinearizeError::Unexpected { pos: rel_pos, token }),
                };
                Node::Projection(r, Box::new(self.single('P', op_pos, depth)?))
            }
            TokenKind::N => Node::Negation(Box::new(self.single('N', op_pos, depth)?)),
            TokenKind::I | TokenKind::U => {
                let mut children = Vec::new();
                while !self.peek_is_rparen() {
                    if self.pos >= self.tokens.len() {
                        return Err(LinearizeError::Unbalanced(self.pos));
                    }
                    children.push(self.node(depth + 1)?);
                }
                let c = if op == TokenKind::I { 'I' } else { 'U' };
                let found = children.len();
                let b = Branches::new(children).ok_or(LinearizeError::Arity { op: c, pos: op_pos, found })?;
                if op == TokenKind::I {
                    Node::Intersection(b)
                } else {
                    Node::Union(b)
                }
            }
            token => return Err(LinearizeError::Unexpected { pos: op_pos, token }),
        };
        self.close()?;
        Ok(node)
    }

    fn single(&mut self, op: char, op_pos: usize, depth: usize) -> Result<Query, LinearizeError> {
        if self.peek_is_rparen() {
            return Err(LinearizeError::Arity { op, pos: op_pos, found: 0 });
        }
        let child = self.node(depth + 1)?;
        if !self.peek_is_rparen() && self.pos < self.tokens.len() {
            return Err(LinearizeError::Arity { op, pos: op_pos, found: 2 });
        }
        Ok(child)
    }

    fn close(&mut self) -> Result<(), LinearizeError> {
        let pos = self.pos;
        match self.next() {
            Ok(TokenKind::RParen) => Ok(()),
            Ok(token) => Err(LinearizeError::Unexpected { pos, token }),
            Err(e) => Err(e),
        }
    }
}

/// Expected token count: anchors + 3·projections + 2·(intersections + unions + negations).
pub fn expected_len(q: &Query) -> usize {
    use crate::query::OperatorKind::*;
    q.count(Anchor) + 4 * q.count(Projection) + 3 * (q.count(Intersection) + q.count(Union) + q.count(Negation))
}
