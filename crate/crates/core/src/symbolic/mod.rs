//! Exact set-semantics query execution, plus an independent disjunctive
//! normal form translation and brute-force evaluator used as an oracle.

mod dnf;
mod set;

pub use dnf::{answer_dnf, to_dnf, Clause, Dnf, DnfError, Literal, Term, Var, DEFAULT_BUDGET};
pub use set::EntitySet;

use crate::graph::KnowledgeGraph;
use crate::query::{Node, Query};

/// Evaluates `q` on `layer`: anchors are singletons, projections follow
/// forward edges, intersection/union combine children left to right and
/// negation takes the absolute complement.
///
/// # Panics
/// If an anchor id lies outside the layer's universe; validate queries
/// from untrusted sources with [`Query::validate`] first.
pub fn answer(layer: &KnowledgeGraph, q: &Query) -> EntitySet {
    let n = layer.num_entities();
    match q {
        Node::Anchor(e) => EntitySet::singleton(n, *e),
        Node::Projection(r, c) => {
            let from = answer(layer, c);
            let mut out = EntitySet::empty(n);
            for e in from.iter() {
                for &t in layer.fwd(e, *r) {
                    out.insert(t);
                }
            }
            out
        }
        Node::Intersection(b) => {
            let mut it = b.iter();
            let mut acc = answer(layer, it.next().expect("two or more branches"));
            for c in it {
                acc.intersect_with(&answer(layer, c));
            }
            acc
        }
        Node::Union(b) => {
            let mut it = b.iter();
            let mut acc = answer(layer, it.next().expect("two or more branches"));
            for c in it {
                acc.union_with(&answer(layer, c));
            }
            acc
        }
        Node::Negation(c) => answer(layer, c).complement(),
    }
}
