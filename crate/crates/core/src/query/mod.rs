//! Query structures: abstract query types (`(p,(e))`) and grounded
//! computation trees (`(p,(7),(e,(12)))`), with a parser and canonical printer
//! for both notations.

mod builtin;
mod sexpr;

use std::fmt;

use thiserror::Error;

use crate::graph::{EntityId, KnowledgeGraph, RelationId};
use sexpr::SExpr;

pub use builtin::{builtin_query_types, BuiltinTypes, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    Anchor,
    Projection,
    Intersection,
    Union,
    Negation,
}

/// Two or more operands of an intersection or union.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Branches<T>(Vec<T>);

impl<T> Branches<T> {
    /// `None` unless there are at least two branches.
    pub fn new(items: Vec<T>) -> Option<Self> {
        (items.len() >= 2).then_some(Branches(items))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<'a, T> IntoIterator for &'a Branches<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A query tree. `R` labels projections and `E` labels anchors; both are
/// `()` for abstract query types and ids for grounded queries.
///
/// Arity is enforced by construction: projections and negations own exactly
/// one child and intersections/unions hold [`Branches`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node<R, E> {
    Anchor(E),
    Projection(R, Box<Node<R, E>>),
    Intersection(Branches<Node<R, E>>),
    Union(Branches<Node<R, E>>),
    Negation(Box<Node<R, E>>),
}

/// Abstract structure of a query type.
pub type Shape = Node<(), ()>;

/// A grounded computation tree; its root is the target variable.
pub type Query = Node<RelationId, EntityId>;

impl<R, E> Node<R, E> {
    pub fn kind(&self) -> OperatorKind {
        match self {
            Node::Anchor(_) => OperatorKind::Anchor,
            Node::Projection(..) => OperatorKind::Projection,
            Node::Intersection(_) => OperatorKind::Intersection,
            Node::Union(_) => OperatorKind::Union,
            Node::Negation(_) => OperatorKind::Negation,
        }
    }

    pub fn children(&self) -> &[Node<R, E>] {
        match self {
            Node::Anchor(_) => &[],
            Node::Projection(_, c) | Node::Negation(c) => std::slice::from_ref(c.as_ref()),
            Node::Intersection(b) | Node::Union(b) => b.as_slice(),
        }
    }

    /// Number of nodes of `kind` in the tree.
    pub fn count(&self, kind: OperatorKind) -> usize {
        let own = usize::from(self.kind() == kind);
        own + self.children().iter().map(|c| c.count(kind)).sum::<usize>()
    }

    pub fn num_anchors(&self) -> usize {
        self.count(OperatorKind::Anchor)
    }

    /// Largest number of projections on any root-to-leaf path.
    pub fn depth(&self) -> usize {
        let below = self.children().iter().map(Node::depth).max().unwrap_or(0);
        below + usize::from(matches!(self, Node::Projection(..)))
    }

    /// Replaces labels, keeping the structure.
    pub fn map<R2, E2>(&self, rel: &impl Fn(&R) -> R2, ent: &impl Fn(&E) -> E2) -> Node<R2, E2> {
        let many = |b: &Branches<Node<R, E>>| Branches(b.iter().map(|c| c.map(rel, ent)).collect());
        match self {
            Node::Anchor(e) => Node::Anchor(ent(e)),
            Node::Projection(r, c) => Node::Projection(rel(r), Box::new(c.map(rel, ent))),
            Node::Intersection(b) => Node::Intersection(many(b)),
            Node::Union(b) => Node::Union(many(b)),
            Node::Negation(c) => Node::Negation(Box::new(c.map(rel, ent))),
        }
    }

    /// The query type obtained by erasing all ids.
    pub fn shape(&self) -> Shape {
        self.map(&|_| (), &|_| ())
    }
}

impl Query {
    /// Checks every id against the universe sizes.
    pub fn validate(&self, num_entities: usize, num_relations: usize) -> Result<(), ParseError> {
        match self {
            Node::Anchor(e) if e.index() >= num_entities => Err(ParseError::new(
                0,
                ParseErrorKind::IdOutOfRange { kind: "entity", id: e.0 as u64, size: num_entities },
            )),
            Node::Projection(r, _) if r.index() >= num_relations => Err(ParseError::new(
                0,
                ParseErrorKind::IdOutOfRange { kind: "relation", id: r.0 as u64, size: num_relations },
            )),
            _ => self.children().iter().try_for_each(|c| c.validate(num_entities, num_relations)),
        }
    }

    /// Anchor entities in left-to-right order.
    pub fn anchors(&self) -> Vec<EntityId> {
        let mut out = Vec::new();
        fn walk(n: &Query, out: &mut Vec<EntityId>) {
            match n {
                Node::Anchor(e) => out.push(*e),
                _ => n.children().iter().for_each(|c| walk(c, out)),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Projection relations in pre-order.
    pub fn relations(&self) -> Vec<RelationId> {
        let mut out = Vec::new();
        fn walk(n: &Query, out: &mut Vec<RelationId>) {
            if let Node::Projection(r, _) = n {
                out.push(*r);
            }
            n.children().iter().for_each(|c| walk(c, out));
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedEnd,
    UnexpectedChar,
    Expected(&'static str),
    TrailingInput,
    TooDeep,
    UnknownOperator(String),
    Arity { op: char, expected: &'static str, found: usize },
    BadId(String),
    IdOutOfRange { kind: &'static str, id: u64, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at offset {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub(crate) fn new(offset: usize, kind: ParseErrorKind) -> Self {
        ParseError { offset, kind }
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParseErrorKind::*;
        match self {
            UnexpectedEnd => f.write_str("unexpected end of input (unbalanced parentheses)"),
            UnexpectedChar => f.write_str("unexpected character"),
            Expected(what) => write!(f, "expected {what}"),
            TrailingInput => f.write_str("trailing input after query"),
            TooDeep => f.write_str("nesting too deep"),
            UnknownOperator(op) => write!(f, "unknown operator {op:?}"),
            Arity { op, expected, found } => {
                write!(f, "operator '{op}' takes {expected} operand(s), found {found}")
            }
            BadId(s) => write!(f, "invalid id {s:?}"),
            IdOutOfRange { kind, id, size } => write!(f, "{kind} id {id} out of range (size {size})"),
        }
    }
}

/// A named query type: its structure plus canonical formula text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryType {
    pub shape: Shape,
    pub formula: String,
}

impl QueryType {
    pub fn from_shape(shape: Shape) -> Self {
        let formula = shape.to_string();
        QueryType { shape, formula }
    }

    pub fn depth(&self) -> usize {
        self.shape.depth()
    }

    pub fn num_anchors(&self) -> usize {
        self.shape.num_anchors()
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.formula)
    }
}

/// Parses formula notation such as `(i,(n,(p,(e))),(p,(e)))`.
pub fn parse_formula(text: &str) -> Result<QueryType, ParseError> {
    let sx = sexpr::parse(text)?;
    Ok(QueryType::from_shape(shape_from(&sx)?))
}

/// Parses grounded notation such as `(p,(7),(u,(p,(3),(e,(12))),(p,(3),(e,(45)))))`.
pub fn parse_grounded(text: &str) -> Result<Query, ParseError> {
    grounded_from(&sexpr::parse(text)?)
}

/// [`parse_grounded`] plus id validation against `graph`.
pub fn parse_grounded_for(text: &str, graph: &KnowledgeGraph) -> Result<Query, ParseError> {
    let q = parse_grounded(text)?;
    q.validate(graph.num_entities(), graph.num_relations())?;
    Ok(q)
}

/// Splits `(op, args...)` into the operator letter and its operands.
fn operator<'s, 'a>(sx: &'s SExpr<'a>) -> Result<(char, &'s [SExpr<'a>], usize), ParseError> {
    match sx {
        SExpr::List { items, at } => match &items[0] {
            SExpr::Atom { text, .. } if matches!(*text, "p" | "i" | "u" | "n" | "e") => {
                Ok((text.as_bytes()[0] as char, &items[1..], *at))
            }
            SExpr::Atom { text, at } => Err(ParseError::new(*at, ParseErrorKind::UnknownOperator(text.to_string()))),
            other => Err(ParseError::new(other.offset(), ParseErrorKind::Expected("an operator letter"))),
        },
        SExpr::Atom { at, .. } => Err(ParseError::new(*at, ParseErrorKind::Expected("'('"))),
    }
}

fn arity_error(op: char, expected: &'static str, found: usize, at: usize) -> ParseError {
    ParseError::new(at, ParseErrorKind::Arity { op, expected, found })
}

fn shape_from(sx: &SExpr<'_>) -> Result<Shape, ParseError> {
    let (op, args, at) = operator(sx)?;
    match op {
        'e' if args.is_empty() => Ok(Node::Anchor(())),
        'e' => Err(arity_error(op, "0", args.len(), at)),
        'p' | 'n' if args.len() == 1 => {
            let child = Box::new(shape_from(&args[0])?);
            Ok(if op == 'p' { Node::Projection((), child) } else { Node::Negation(child) })
        }
        'p' | 'n' => Err(arity_error(op, "1", args.len(), at)),
        _ => branches(op, args, at, shape_from),
    }
}

fn grounded_from(sx: &SExpr<'_>) -> Result<Query, ParseError> {
    let (op, args, at) = operator(sx)?;
    match op {
        'e' if args.len() == 1 => Ok(Node::Anchor(EntityId(id_list(&args[0])?))),
        'e' => Err(arity_error(op, "1 id", args.len(), at)),
        'p' if args.len() == 2 => {
            Ok(Node::Projection(RelationId(id_list(&args[0])?), Box::new(grounded_from(&args[1])?)))
        }
        'p' => Err(arity_error(op, "1 id + 1", args.len(), at)),
        'n' if args.len() == 1 => Ok(Node::Negation(Box::new(grounded_from(&args[0])?))),
        'n' => Err(arity_error(op, "1", args.len(), at)),
        _ => branches(op, args, at, grounded_from),
    }
}

fn branches<R, E>(
    op: char,
    args: &[SExpr<'_>],
    at: usize,
    sub: fn(&SExpr<'_>) -> Result<Node<R, E>, ParseError>,
) -> Result<Node<R, E>, ParseError> {
    let children = args.iter().map(sub).collect::<Result<Vec<_>, _>>()?;
    let b = Branches::new(children).ok_or_else(|| arity_error(op, "2 or more", args.len(), at))?;
    Ok(if op == 'i' { Node::Intersection(b) } else { Node::Union(b) })
}

/// `(<digits>)`
fn id_list(sx: &SExpr<'_>) -> Result<u32, ParseError> {
    match sx {
        SExpr::List { items, at } => match items.as_slice() {
            [SExpr::Atom { text, at }] => {
                text.parse::<u32>().map_err(|_| ParseError::new(*at, ParseErrorKind::BadId(text.to_string())))
            }
            _ => Err(ParseError::new(*at, ParseErrorKind::Expected("a parenthesized id"))),
        },
        SExpr::Atom { at, .. } => Err(ParseError::new(*at, ParseErrorKind::Expected("a parenthesized id"))),
    }
}

fn write_node<R, E>(
    n: &Node<R, E>,
    f: &mut fmt::Formatter<'_>,
    rel: &dyn Fn(&R, &mut fmt::Formatter<'_>) -> fmt::Result,
    ent: &dyn Fn(&E, &mut fmt::Formatter<'_>) -> fmt::Result,
) -> fmt::Result {
    match n {
        Node::Anchor(e) => {
            f.write_str("(e")?;
            ent(e, f)?;
            f.write_str(")")
        }
        Node::Projection(r, c) => {
            f.write_str("(p,")?;
            rel(r, f)?;
            write_node(c, f, rel, ent)?;
            f.write_str(")")
        }
        Node::Negation(c) => {
            f.write_str("(n,")?;
            write_node(c, f, rel, ent)?;
            f.write_str(")")
        }
        Node::Intersection(b) | Node::Union(b) => {
            f.write_str(if matches!(n, Node::Intersection(_)) { "(i" } else { "(u" })?;
            for c in b {
                f.write_str(",")?;
                write_node(c, f, rel, ent)?;
            }
            f.write_str(")")
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(self, f, &|_, _| Ok(()), &|_, _| Ok(()))
    }
}

/// Canonical grounded text: no whitespace, children in stored order.
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(self, f, &|r, f| write!(f, "({r}),"), &|e, f| write!(f, ",({e})"))
    }
}

pub fn serialize_grounded(q: &Query) -> String {
    q.to_string()
}

/// Convenience constructors for building grounded queries in code.
pub mod build {
    use super::*;

    pub fn anchor(e: u32) -> Query {
        Node::Anchor(EntityId(e))
    }

    pub fn proj(r: u32, child: Query) -> Query {
        Node::Projection(RelationId(r), Box::new(child))
    }

    pub fn neg(child: Query) -> Query {
        Node::Negation(Box::new(child))
    }

    /// # Panics
    /// With fewer than two children.
    pub fn inter(children: Vec<Query>) -> Query {
        Node::Intersection(Branches::new(children).expect("intersection needs two or more children"))
    }

    /// # Panics
    /// With fewer than two children.
    pub fn union(children: Vec<Query>) -> Query {
        Node::Union(Branches::new(children).expect("union needs two or more children"))
    }
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    const FIG2: &str = "(p,(7),(u,(p,(3),(e,(12))),(p,(3),(e,(45)))))";

    #[test]
    fn formula_depth_and_anchors() {
        let t = parse_formula("(p,(e))").unwrap();
        assert_eq!((t.depth(), t.num_anchors()), (1, 1));
        let t = parse_formula("(i,(n,(p,(e))),(p,(e)))").unwrap();
        assert_eq!((t.depth(), t.num_anchors()), (1, 2));
        let t = parse_formula("(u,(p,(e)), (p,(e)))").unwrap();
        assert_eq!(t.formula, "(u,(p,(e)),(p,(e)))");
    }

    #[test]
    fn formula_errors() {
        assert_eq!(parse_formula("(p,(e)").unwrap_err(), ParseError::new(6, ParseErrorKind::UnexpectedEnd));
        assert!(matches!(
            parse_formula("(n,(e),(e))").unwrap_err().kind,
            ParseErrorKind::Arity { op: 'n', found: 2, .. }
        ));
        assert!(matches!(parse_formula("(x,(e))").unwrap_err().kind, ParseErrorKind::UnknownOperator(_)));
        assert!(matches!(
            parse_formula("(i,(p,(e)))").unwrap_err().kind,
            ParseErrorKind::Arity { op: 'i', found: 1, .. }
        ));
    }

    #[test]
    fn figure_two_query_parses_and_round_trips() {
        let q = parse_grounded(FIG2).unwrap();
        let expected = proj(7, union(vec![proj(3, anchor(12)), proj(3, anchor(45))]));
        assert_eq!(q, expected);
        assert_eq!(serialize_grounded(&q), FIG2);
        assert_eq!(q.shape().to_string(), "(p,(u,(p,(e)),(p,(e))))");
        assert_eq!(q.anchors(), vec![EntityId(12), EntityId(45)]);
    }

    #[test]
    fn grounded_base_case_and_errors() {
        assert_eq!(parse_grounded("(e,(0))").unwrap(), anchor(0));
        assert_eq!(serialize_grounded(&anchor(5)), "(e,(5))");
        assert!(matches!(
            parse_grounded("(i,(p,(1),(e,(2))))").unwrap_err().kind,
            ParseErrorKind::Arity { op: 'i', .. }
        ));
        assert_eq!(parse_grounded("(e,1)").unwrap_err().kind, ParseErrorKind::Expected("a parenthesized id"));
        assert_eq!(parse_grounded("(e,(1)) (e,(2))").unwrap_err().kind, ParseErrorKind::TrailingInput);
        assert!(matches!(parse_grounded("(e,(99999999999))").unwrap_err().kind, ParseErrorKind::BadId(_)));
        assert!(matches!(parse_grounded("(p,(e,(1)))").unwrap_err().kind, ParseErrorKind::Arity { op: 'p', .. }));
    }

    #[test]
    fn ids_are_checked_against_a_graph() {
        let kg = KnowledgeGraph::empty(10, 2);
        assert!(parse_grounded_for("(p,(1),(e,(9)))", &kg).is_ok());
        assert!(matches!(
            parse_grounded_for("(p,(2),(e,(9)))", &kg).unwrap_err().kind,
            ParseErrorKind::IdOutOfRange { kind: "relation", .. }
        ));
        assert!(matches!(
            parse_grounded_for("(p,(1),(e,(10)))", &kg).unwrap_err().kind,
            ParseErrorKind::IdOutOfRange { kind: "entity", .. }
        ));
    }

    #[test]
    fn branches_reject_fewer_than_two() {
        assert!(Branches::<Query>::new(vec![]).is_none());
        assert!(Branches::new(vec![anchor(1)]).is_none());
        assert!(Branches::new(vec![anchor(1), anchor(2)]).is_some());
    }
}
