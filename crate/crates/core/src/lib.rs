//! Trie-folding for leaf-labeled binary tries.
//!
//! A complete binary trie of height `h` whose `2^h` leaves carry next-hop
//! labels is folded into a level-structured DAG by merging identical
//! subtrees. The [`bounds`] module computes entropy-based upper bounds on the
//! width and bit size of that DAG, and [`experiments`] checks every bound
//! against exact expectations and Monte Carlo runs over random tries.
//!
//! Levels are counted from the leaves: level 0 holds the labels, level `h`
//! holds the root, and a node at level `j` spans `2^j` leaves.

pub mod bounds;
pub mod cli;
mod error;
pub mod experiments;
pub mod folding;
pub mod trie;

pub use error::{Error, Result};
pub use folding::{fold, FoldedDag, MemoryAccount};
pub use trie::{Address, Label, LeafTrie, NextHopDist, PrefixRule};
