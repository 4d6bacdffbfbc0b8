//! The benchmark's query-type tables: 29 in-distribution and 29
//! out-of-distribution first-order types, and the 12 + 3 conjunctive subset.

use super::{parse_formula, QueryType};

const FOL_IN: [&str; 29] = [
    "(p,(e))",
    "(p,(p,(e)))",
    "(p,(p,(p,(e))))",
    "(p,(i,(p,(e)),(p,(e))))",
    "(p,(i,(p,(e)),(p,(p,(e)))))",
    "(p,(i,(n,(p,(e))),(p,(e))))",
    "(p,(i,(p,(p,(e))),(p,(p,(e)))))",
    "(p,(i,(n,(p,(e))),(p,(p,(e)))))",
    "(p,(u,(p,(e)),(p,(e))))",
    "(p,(u,(p,(e)),(p,(p,(e)))))",
    "(p,(u,(p,(p,(e))),(p,(p,(e)))))",
    "(i,(p,(e)),(p,(e)))",
    "(i,(p,(e)),(p,(p,(e))))",
    "(i,(p,(e)),(p,(p,(p,(e)))))",
    "(i,(n,(p,(e))),(p,(e)))",
    "(i,(n,(p,(p,(e)))),(p,(e)))",
    "(i,(p,(p,(e))),(p,(p,(e))))",
    "(i,(p,(p,(e))),(p,(p,(p,(e)))))",
    "(i,(n,(p,(e))),(p,(p,(e))))",
    "(i,(n,(p,(p,(e)))),(p,(p,(e))))",
    "(i,(p,(p,(p,(e)))),(p,(p,(p,(e)))))",
    "(i,(n,(p,(e))),(p,(p,(p,(e)))))",
    "(i,(n,(p,(p,(e)))),(p,(p,(p,(e)))))",
    "(u,(p,(e)),(p,(e)))",
    "(u,(p,(e)),(p,(p,(e))))",
    "(u,(p,(e)),(p,(p,(p,(e)))))",
    "(u,(p,(p,(e))),(p,(p,(e))))",
    "(u,(p,(p,(e))),(p,(p,(p,(e)))))",
    "(u,(p,(p,(p,(e)))),(p,(p,(p,(e)))))",
];

const FOL_OUT: [&str; 29] = [
    "(i,(i,(p,(e)),(p,(p,(p,(e))))),(p,(p,(e))))",
    "(u,(p,(e)),(p,(i,(n,(p,(e))),(p,(e)))))",
    "(p,(u,(i,(n,(p,(e))),(p,(e))),(p,(e))))",
    "(i,(n,(p,(e))),(p,(u,(p,(e)),(p,(p,(e))))))",
    "(p,(i,(p,(e)),(u,(p,(p,(e))),(p,(p,(e))))))",
    "(i,(p,(p,(p,(e)))),(p,(u,(p,(e)),(p,(p,(e))))))",
    "(u,(i,(n,(p,(e))),(p,(p,(p,(e))))),(p,(p,(p,(e)))))",
    "(i,(i,(p,(e)),(p,(p,(e)))),(p,(p,(p,(e)))))",
    "(i,(n,(u,(p,(e)),(p,(e)))),(p,(p,(e))))",
    "(u,(i,(p,(e)),(p,(p,(e)))),(p,(p,(e))))",
    "(i,(p,(e)),(u,(p,(p,(p,(e)))),(p,(p,(p,(e))))))",
    "(p,(i,(i,(n,(p,(e))),(p,(p,(e)))),(n,(p,(e)))))",
    "(u,(i,(p,(p,(e))),(p,(p,(p,(e))))),(p,(p,(p,(e)))))",
    "(p,(u,(i,(p,(e)),(p,(p,(e)))),(p,(p,(e)))))",
    "(i,(i,(p,(p,(e))),(p,(p,(p,(e))))),(p,(p,(e))))",
    "(i,(n,(p,(p,(e)))),(p,(i,(p,(e)),(p,(e)))))",
    "(i,(p,(p,(e))),(u,(p,(e)),(p,(e))))",
    "(i,(p,(e)),(u,(p,(p,(e))),(p,(p,(p,(e))))))",
    "(u,(i,(n,(p,(e))),(p,(p,(p,(e))))),(p,(p,(e))))",
    "(i,(i,(p,(e)),(p,(p,(p,(e))))),(n,(p,(p,(e)))))",
    "(u,(i,(p,(p,(e))),(p,(p,(e)))),(p,(p,(p,(e)))))",
    "(i,(i,(p,(p,(e))),(p,(p,(p,(e))))),(n,(p,(p,(e)))))",
    "(u,(i,(p,(e)),(p,(e))),(p,(p,(e))))",
    "(u,(p,(i,(n,(p,(e))),(p,(p,(e))))),(p,(p,(e))))",
    "(i,(p,(e)),(p,(i,(n,(p,(e))),(p,(p,(e))))))",
    "(u,(p,(p,(e))),(p,(u,(p,(p,(e))),(p,(p,(e))))))",
    "(i,(n,(p,(e))),(u,(p,(p,(e))),(p,(p,(e)))))",
    "(p,(i,(n,(p,(e))),(u,(p,(e)),(p,(p,(e))))))",
    "(i,(n,(i,(n,(p,(e))),(p,(e)))),(p,(p,(p,(e)))))",
];

const CONJ_IN: [&str; 12] = [
    "(p,(e))",
    "(p,(p,(e)))",
    "(p,(p,(p,(e))))",
    "(p,(i,(p,(e)),(p,(e))))",
    "(p,(i,(p,(e)),(p,(p,(e)))))",
    "(p,(i,(p,(p,(e))),(p,(p,(e)))))",
    "(i,(p,(e)),(p,(e)))",
    "(i,(p,(e)),(p,(p,(e))))",
    "(i,(p,(e)),(p,(p,(p,(e)))))",
    "(i,(p,(p,(e))),(p,(p,(e))))",
    "(i,(p,(p,(e))),(p,(p,(p,(e)))))",
    "(i,(p,(p,(p,(e)))),(p,(p,(p,(e)))))",
];

const CONJ_OUT: [&str; 3] = [
    "(i,(i,(p,(e)),(p,(p,(p,(e))))),(p,(p,(e))))",
    "(i,(i,(p,(e)),(p,(p,(e)))),(p,(p,(p,(e)))))",
    "(i,(i,(p,(p,(e))),(p,(p,(p,(e))))),(p,(p,(e))))",
];

/// Whether a type is seen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distribution {
    In,
    Out,
    /// Not one of the built-in tables.
    Other,
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::In => "in",
            Distribution::Out => "out",
            Distribution::Other => "other",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltinTypes {
    pub in_distribution: Vec<QueryType>,
    pub out_of_distribution: Vec<QueryType>,
    pub conjunctive_in: Vec<QueryType>,
    pub conjunctive_out: Vec<QueryType>,
}

impl BuiltinTypes {
    /// All 58 first-order types, in-distribution first.
    pub fn all_fol(&self) -> impl Iterator<Item = &QueryType> {
        self.in_distribution.iter().chain(&self.out_of_distribution)
    }

    pub fn distribution(&self, formula: &str) -> Distribution {
        if self.in_distribution.iter().any(|t| t.formula == formula) {
            Distribution::In
        } else if self.out_of_distribution.iter().any(|t| t.formula == formula) {
            Distribution::Out
        } else {
            Distribution::Other
        }
    }
}

fn parse_all(table: &[&str]) -> Vec<QueryType> {
    table.iter().map(|f| parse_formula(f).expect("built-in formula parses")).collect()
}

pub fn builtin_query_types() -> BuiltinTypes {
    BuiltinTypes {
        in_distribution: parse_all(&FOL_IN),
        out_of_distribution: parse_all(&FOL_OUT),
        conjunctive_in: parse_all(&CONJ_IN),
        conjunctive_out: parse_all(&CONJ_OUT),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::OperatorKind;

    // "Query Depth" columns of the type tables, row by row
    const FOL_IN_DEPTH: [usize; 29] =
        [1, 2, 3, 2, 3, 2, 3, 3, 2, 3, 3, 1, 2, 3, 1, 2, 2, 3, 2, 2, 3, 3, 3, 1, 2, 3, 2, 3, 3];
    const FOL_OUT_DEPTH: [usize; 29] =
        [3, 2, 2, 3, 3, 3, 3, 3, 2, 2, 3, 3, 3, 3, 3, 2, 2, 3, 3, 3, 3, 3, 2, 3, 3, 3, 2, 3, 3];
    const CONJ_IN_DEPTH: [usize; 12] = [1, 2, 3, 2, 3, 3, 1, 2, 3, 2, 3, 3];
    const CONJ_OUT_DEPTH: [usize; 3] = [3, 3, 3];

    #[test]
    fn table_sizes() {
        let b = builtin_query_types();
        assert_eq!(b.in_distribution.len(), 29);
        assert_eq!(b.out_of_distribution.len(), 29);
        assert_eq!(b.conjunctive_in.len(), 12);
        assert_eq!(b.conjunctive_out.len(), 3);
        assert!(b.out_of_distribution.iter().any(|t| t.formula == "(i,(i,(p,(e)),(p,(p,(p,(e))))),(p,(p,(e))))"));
    }

    #[test]
    fn depths_match_tables() {
        let b = builtin_query_types();
        for (types, depths) in [
            (&b.in_distribution, &FOL_IN_DEPTH[..]),
            (&b.out_of_distribution, &FOL_OUT_DEPTH[..]),
            (&b.conjunctive_in, &CONJ_IN_DEPTH[..]),
            (&b.conjunctive_out, &CONJ_OUT_DEPTH[..]),
        ] {
            for (t, &d) in types.iter().zip(depths) {
                assert_eq!(t.depth(), d, "{}", t.formula);
            }
        }
    }

    #[test]
    fn formulas_round_trip_and_are_distinct() {
        let b = builtin_query_types();
        let all: Vec<_> = b.all_fol().collect();
        for t in &all {
            assert_eq!(parse_formula(&t.formula).unwrap(), **t);
        }
        let unique: std::collections::HashSet<_> = all.iter().map(|t| &t.formula).collect();
        assert_eq!(unique.len(), 58);
    }

    #[test]
    fn anchor_counts_separate_the_splits() {
        let b = builtin_query_types();
        assert!(b.in_distribution.iter().all(|t| t.num_anchors() <= 2));
        assert!(b.out_of_distribution.iter().all(|t| t.num_anchors() == 3));
    }

    #[test]
    fn conjunctive_tables_are_negation_and_union_free_subsets() {
        let b = builtin_query_types();
        for t in b.conjunctive_in.iter().chain(&b.conjunctive_out) {
            assert_eq!(t.shape.count(OperatorKind::Negation), 0);
            assert_eq!(t.shape.count(OperatorKind::Union), 0);
            assert_ne!(b.distribution(&t.formula), Distribution::Other);
        }
    }
}
