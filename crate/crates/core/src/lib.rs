//! Functional-role analysis of transformer attention heads.
//!
//! Attention exported from a checkpoint is loaded as a [`bundle::Bundle`].
//! For each functional role a [`sieve::Sieve`] names the tokens a head of
//! that role should attend to, [`score`] turns attention into per-sequence
//! sieve bias scores, and [`analysis::classify_heads`] assigns a role to a
//! head when a one-tailed z-test shows its mean score exceeds a threshold.
//! [`report`] renders the results; [`synth`] builds bundles with planted
//! roles for testing.

pub mod analysis;
pub mod bundle;
pub mod cli;
pub mod report;
pub mod score;
pub mod sieve;
pub mod stats;
pub mod synth;
