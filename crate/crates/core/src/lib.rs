//! Binary-partition graph attention.
//!
//! A sequence of `n` tokens is padded to a power of two and binary-partitioned
//! into a perfect tree of `2n - 1` nodes. Every token attends to a
//! fine-to-coarse set of context nodes (`k` per level and side), every span
//! node attends to the tokens it contains, and a stack of graph self-attention
//! layers updates all nodes synchronously.
//!
//! The crate is `no_std` and only needs `alloc`:
//!
//! - [`graph`] builds the tree, the labeled attention graph and an
//!   independent edge enumeration used to cross-check it.
//! - [`numeric`] holds the dense kernels with hand-written gradients.
//! - [`attention`] is multi-head graph self-attention with relation
//!   embeddings added to the keys.
//! - [`model`] stacks the layers, adds task heads, losses and a dense
//!   reference encoder.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attention;
pub mod error;
pub mod graph;
pub mod model;
pub mod numeric;
mod real;

pub use error::{Error, Result};
pub use real::Real;
