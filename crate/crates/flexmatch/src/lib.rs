//! Random bipartite matching under two-sided flexibility.
//!
//! A platform with `n` agents on each side chooses how much flexibility to
//! buy on each side: a left agent is flexible with probability `b_l`, a
//! right agent with probability `b_r`. Edges appear independently with a
//! rate that grows when either endpoint is flexible. This crate provides:
//!
//! - seeded random graph generators for the base model and several
//!   variants ([`graphs`]);
//! - exact and greedy matching algorithms ([`matching`]);
//! - reproducible Monte Carlo estimation of matching metrics, with sweep
//!   and heatmap drivers ([`estimator`]);
//! - closed-form characterizations of the non-isolation objective, the
//!   asymmetric-returns thresholds, and a tractable local variant
//!   ([`analytic`]);
//! - the degree-evolution fixed-point system whose solution gives the
//!   large-n matching rate of the leading greedy algorithm ([`ks_solver`]);
//! - interval certification of the one-sided-versus-balanced comparison
//!   and the curvature structure at the balanced point, plus a randomized
//!   check of the pair-coupling matching inequality ([`verifier`]);
//! - profit landscapes and greedy experimentation trajectories
//!   ([`experiment`]).
//!
//! With the default `parallel` feature, batch drivers fan out over a rayon
//! thread pool; results are bit-identical to the sequential fallback
//! because every replicate draws from its own counter-derived RNG stream
//! and aggregation is index-ordered.

pub mod analytic;
pub mod estimator;
pub mod experiment;
pub mod graphs;
pub mod ks_solver;
pub mod matching;
pub mod rng;
pub mod verifier;

pub use estimator::ExecMode;
pub use graphs::{BipartiteGraph, FlexAllocation, ModelParams, Variant};
pub use rng::RngSeed;
