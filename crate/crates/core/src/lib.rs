//! Padded decompositions, ball carving and coarse embeddings of graphs into
//! `ℤᴺ` with the `ℓ∞` metric.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, generators of
//! large inputs and the command line live in the `gridembed` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod carving;
pub mod decomposition;
pub mod embedding;
mod error;
pub mod generators;
pub mod graph;
pub mod lll;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{Graph, Partition};
