//! Disjunctive normal form of a grounded query and a brute-force evaluator
//! over variable assignments.
//!
//! Variable 0 is the target `V_?`; every other variable is existentially
//! quantified within its clause. A negated sub-query whose clause has its own
//! existential variables (such as `(n,(p,(p,(e))))`) cannot be written as a
//! negated atom, so it becomes a [`Literal::NotExists`] block that scopes
//! those variables locally.

use std::collections::BTreeSet;

use thiserror::Error;

use super::EntitySet;
use crate::graph::{EntityId, KnowledgeGraph, RelationId};
use crate::query::{Node, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    pub const TARGET: Var = Var(0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    Const(EntityId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    /// `relation(head, tail)`, or its negation.
    Atom { negated: bool, relation: RelationId, head: Term, tail: Term },
    /// `var = entity`, or its negation. Produced for anchors outside a projection.
    Pin { negated: bool, var: Var, entity: EntityId },
    /// `¬∃ vars. literals`.
    NotExists { vars: Vec<Var>, literals: Vec<Literal> },
}

impl Literal {
    fn free_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Literal::Atom { head, tail, .. } => {
                for t in [head, tail] {
                    if let Term::Var(v) = t {
                        out.insert(*v);
                    }
                }
            }
            Literal::Pin { var, .. } => {
                out.insert(*var);
            }
            Literal::NotExists { vars, literals } => {
                let mut inner = BTreeSet::new();
                literals.iter().for_each(|l| l.free_vars(&mut inner));
                out.extend(inner.into_iter().filter(|v| !vars.contains(v)));
            }
        }
    }

    /// Number of variables quantified anywhere inside, counting nested blocks.
    fn bound_count(&self) -> usize {
        match self {
            Literal::NotExists { vars, literals } => {
                vars.len() + literals.iter().map(Literal::bound_count).sum::<usize>()
            }
            _ => 0,
        }
    }

    /// The negation as a conjunction of literals.
    fn negate(&self) -> Vec<Literal> {
        match self {
            Literal::Atom { negated, relation, head, tail } => {
                vec![Literal::Atom { negated: !negated, relation: *relation, head: *head, tail: *tail }]
            }
            Literal::Pin { negated, var, entity } => {
                vec![Literal::Pin { negated: !negated, var: *var, entity: *entity }]
            }
            // ¬¬∃x.φ = ∃x.φ; x is fresh, so it joins the enclosing clause's existentials
            Literal::NotExists { literals, .. } => literals.clone(),
        }
    }
}

/// A conjunction of literals. An empty clause is `true`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Clause {
    pub literals: Vec<Literal>,
}

impl Clause {
    /// Variables free in the clause (including the target, when mentioned).
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.literals.iter().for_each(|l| l.free_vars(&mut s));
        s
    }

    /// Existential variables: free variables other than the target.
    pub fn existentials(&self) -> Vec<Var> {
        self.free_vars().into_iter().filter(|&v| v != Var::TARGET).collect()
    }

    pub fn mentions_target(&self) -> bool {
        self.free_vars().contains(&Var::TARGET)
    }

    fn arity(&self) -> usize {
        self.existentials().len() + self.literals.iter().map(Literal::bound_count).sum::<usize>()
    }
}

/// `c_1 ∨ … ∨ c_n`; an empty clause list is `false`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Dnf {
    pub clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DnfError {
    #[error("normal form exceeds {0} clauses")]
    TooManyClauses(usize),
    #[error("enumeration needs {needed:e} assignments, budget is {budget:e}")]
    BudgetExceeded { needed: f64, budget: f64 },
}

const MAX_CLAUSES: usize = 4096;

/// Default enumeration budget for [`answer_dnf`]: nominal `|V|^(k+1)` assignments.
pub const DEFAULT_BUDGET: f64 = 1e12;

pub fn to_dnf(q: &Query) -> Result<Dnf, DnfError> {
    let mut next = 1;
    let clauses = translate(q, Var::TARGET, &mut next)?;
    Ok(Dnf { clauses })
}

fn translate(n: &Query, target: Var, next: &mut u32) -> Result<Vec<Clause>, DnfError> {
    Ok(match n {
        Node::Anchor(e) => vec![Clause { literals: vec![Literal::Pin { negated: false, var: target, entity: *e }] }],
        Node::Projection(r, c) => {
            if let Node::Anchor(a) = c.as_ref() {
                return Ok(vec![Clause { literals: vec![atom(*r, Term::Const(*a), Term::Var(target))] }]);
            }
            let y = Var(*next);
            *next += 1;
            let mut clauses = translate(c, y, next)?;
            for cl in &mut clauses {
                cl.literals.push(atom(*r, Term::Var(y), Term::Var(target)));
            }
            clauses
        }
        Node::Intersection(b) => {
            let mut acc = vec![Clause::default()];
            for c in b {
                acc = product(&acc, &translate(c, target, next)?)?;
            }
            acc
        }
        Node::Union(b) => {
            let mut acc = Vec::new();
            for c in b {
                acc.extend(translate(c, target, next)?);
            }
            acc
        }
        Node::Negation(c) => negate(&translate(c, target, next)?, target)?,
    })
}

fn atom(relation: RelationId, head: Term, tail: Term) -> Literal {
    Literal::Atom { negated: false, relation, head, tail }
}

/// Conjunction of two DNFs by distribution.
fn product(a: &[Clause], b: &[Clause]) -> Result<Vec<Clause>, DnfError> {
    if a.len() * b.len() > MAX_CLAUSES {
        return Err(DnfError::TooManyClauses(MAX_CLAUSES));
    }
    Ok(a.iter()
        .flat_map(|x| {
            b.iter().map(move |y| Clause { literals: x.literals.iter().chain(&y.literals).cloned().collect() })
        })
        .collect())
}

/// `¬(c_1 ∨ … ∨ c_n) = ¬c_1 ∧ … ∧ ¬c_n`, each `¬c_i` expanded by De Morgan
/// unless it has local existentials, in which case it stays a `NotExists` block.
fn negate(dnf: &[Clause], target: Var) -> Result<Vec<Clause>, DnfError> {
    let mut acc = vec![Clause::default()];
    for c in dnf {
        let locals: Vec<Var> = c.free_vars().into_iter().filter(|&v| v != target).collect();
        let neg: Vec<Clause> = if locals.is_empty() {
            c.literals.iter().map(|l| Clause { literals: l.negate() }).collect()
        } else {
            vec![Clause { literals: vec![Literal::NotExists { vars: locals, literals: c.literals.clone() }] }]
        };
        acc = product(&acc, &neg)?;
    }
    Ok(acc)
}

/// Brute-force evaluation: `v` is an answer iff some clause has a satisfying
/// assignment of its existential variables with `V_? = v`.
///
/// Assignments are enumerated depth-first and each literal is checked as soon
/// as its variables are bound. The budget guards the nominal `|V|^(k+1)`
/// search space, where `k` is the largest per-clause variable count.
pub fn answer_dnf(layer: &KnowledgeGraph, dnf: &Dnf, budget: f64) -> Result<EntitySet, DnfError> {
    let n = layer.num_entities();
    let k = dnf.clauses.iter().map(Clause::arity).max().unwrap_or(0);
    let needed = (n as f64).powi(k as i32 + 1);
    if needed > budget {
        return Err(DnfError::BudgetExceeded { needed, budget });
    }
    let max_var = dnf.clauses.iter().flat_map(|c| c.literals.iter()).map(max_var_id).max().unwrap_or(0);
    let mut asg: Vec<Option<u32>> = vec![None; max_var as usize + 1];
    // deeper variables carry larger ids and sit next to anchors; bind them first
    let orders: Vec<Vec<Var>> = dnf
        .clauses
        .iter()
        .map(|c| {
            let mut v = c.existentials();
            v.reverse();
            v
        })
        .collect();
    let mut out = EntitySet::empty(n);
    for v in 0..n as u32 {
        asg[0] = Some(v);
        let hit = dnf.clauses.iter().zip(&orders).any(|(c, order)| search(layer, &c.literals, order, &mut asg));
        if hit {
            out.insert(EntityId(v));
        }
    }
    Ok(out)
}

fn max_var_id(l: &Literal) -> u32 {
    match l {
        Literal::Atom { head, tail, .. } => [head, tail]
            .iter()
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.0),
                Term::Const(_) => None,
            })
            .max()
            .unwrap_or(0),
        Literal::Pin { var, .. } => var.0,
        Literal::NotExists { vars, literals } => {
            vars.iter().map(|v| v.0).chain(literals.iter().map(max_var_id)).max().unwrap_or(0)
        }
    }
}

fn search(layer: &KnowledgeGraph, lits: &[Literal], order: &[Var], asg: &mut Vec<Option<u32>>) -> bool {
    for l in lits {
        if let Some(false) = eval(layer, l, asg) {
            return false;
        }
    }
    let Some((&var, rest)) = order.split_first() else {
        return true;
    };
    let slot = var.0 as usize;
    for e in 0..layer.num_entities() as u32 {
        asg[slot] = Some(e);
        if search(layer, lits, rest, asg) {
            asg[slot] = None;
            return true;
        }
    }
    asg[slot] = None;
    false
}

/// Truth value of a literal, or `None` while any of its free variables is unbound.
fn eval(layer: &KnowledgeGraph, l: &Literal, asg: &mut Vec<Option<u32>>) -> Option<bool> {
    let value = |t: &Term, asg: &[Option<u32>]| match t {
        Term::Const(e) => Some(e.0),
        Term::Var(v) => asg[v.0 as usize],
    };
    match l {
        Literal::Atom { negated, relation, head, tail } => {
            let h = value(head, asg)?;
            let t = value(tail, asg)?;
            let holds = layer.fwd(EntityId(h), *relation).binary_search(&EntityId(t)).is_ok();
            Some(holds != *negated)
        }
        Literal::Pin { negated, var, entity } => {
            let v = asg[var.0 as usize]?;
            Some((v == entity.0) != *negated)
        }
        Literal::NotExists { vars, literals } => {
            let mut free = BTreeSet::new();
            l.free_vars(&mut free);
            if free.iter().any(|v| asg[v.0 as usize].is_none()) {
                return None;
            }
            let mut order = vars.clone();
            order.sort_unstable_by(|a, b| b.cmp(a));
            Some(!search(layer, literals, &order, asg))
        }
    }
}
