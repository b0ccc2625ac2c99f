//! Value-of-computation guided Monte Carlo tree search.
//!
//! Frontier nodes of a search tree carry Normal beliefs about their values.
//! Meta-level policies decide which frontier node to refine next by scoring
//! the expected improvement in decision quality, and are compared against
//! UCT, Bayes-UCT and Thompson sampling on bandit-tree and peg solitaire
//! benchmarks.

pub mod belief;
pub mod error;
pub mod graph;
pub mod harness;
pub mod mdp;
pub mod normal;
pub mod policies;
pub mod pwl;
pub mod selftest;
pub mod values;
pub mod voc;

pub use error::{Error, Result};
