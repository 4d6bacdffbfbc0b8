#![allow(dead_code)]

use std::cell::RefCell;

use cqa_core::graph::{EntityId, RelationId};
use cqa_core::query::{Query, Shape};
use rand::Rng;

/// Fills every slot of `shape` with uniform ids, ignoring the graph.
pub fn random_grounding(shape: &Shape, num_entities: u32, num_relations: u32, rng: &mut impl Rng) -> Query {
    let rng = RefCell::new(rng);
    shape.map(&|_| RelationId(rng.borrow_mut().gen_range(0..num_relations)), &|_| {
        EntityId(rng.borrow_mut().gen_range(0..num_entities))
    })
}
