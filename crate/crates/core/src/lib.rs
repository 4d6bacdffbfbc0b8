//! Complex query answering over knowledge graphs.
//!
//! Queries are computation trees of anchor, projection, intersection, union
//! and negation nodes. They can be answered exactly ([`symbolic`]) or
//! linearized into bracketed token sequences ([`linearize`]) and encoded by a
//! learned sequence or tree encoder ([`encoders`]) whose output is scored
//! against every entity embedding.

pub mod encoders;
pub mod eval;
pub mod graph;
pub mod linearize;
pub mod query;
pub mod rng;
pub mod sampler;
pub mod symbolic;
pub mod trainer;
