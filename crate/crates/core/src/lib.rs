//! Core of `fastcolor`: graph coloring as a zero-sum game against a baseline,
//! searched with MCTS and guided by a policy/value network over learned
//! message-passing vertex embeddings.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature only turns on
//! runtime SIMD detection in the matrix kernels and `std` support in `rand`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod coloring;
pub mod embedding;
mod error;
pub mod fcn;
pub mod gradients;
pub mod graph;
pub mod mcts;
pub mod nn;
pub mod rng;
pub mod selfplay;

pub use error::{Error, Result};
