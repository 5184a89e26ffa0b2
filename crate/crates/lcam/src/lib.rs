//! A laboratory for query-limited maximum-matching experiments.
//!
//! The crate generates two families of bipartite graphs (a YES world with a
//! near-perfect matching and a NO world whose maximum matching is smaller by
//! a fixed margin), exposes them only through a randomized adjacency-list
//! oracle with per-query accounting, and bundles the attack algorithms and
//! tree-game experiments used to measure how hard the two worlds are to
//! tell apart.

#![forbid(unsafe_code)]

pub mod attacks;
pub mod construction;
pub mod exact;
pub mod graph;
pub mod oracle;
pub mod realizer;
pub mod report;
pub mod rng;
pub mod treegame;

pub use construction::{
    build_params, block_sizes, transition_table, validate_table, BlockLabel, BlockSizes,
    ConstructionParams, Part, Side, TransitionTable, Variant, World,
};
pub use realizer::Instance;
