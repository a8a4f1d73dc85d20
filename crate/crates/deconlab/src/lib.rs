//! deconlab: a simulation laboratory for substitute-confounder causal
//! estimators.
//!
//! The crate simulates structural causal models with known ground truth,
//! fits latent-variable models (probabilistic PCA, Poisson matrix
//! factorization, gaussian mixtures) to the causes alone, adjusts for the
//! inferred substitute confounder, and measures the bias of each estimator
//! against path-traced true effects. A catalog of pre-registered scenarios
//! covers the graph shapes where this pipeline provably helps, hurts, or
//! degenerates, and the harness sweeps them reproducibly.
//!
//! Reproducibility contract: all randomness flows through ChaCha8 streams
//! seeded by `rng::mix64(base_seed, replicate, stream_index)`; reruns with
//! the same seed are byte-identical, including across thread counts.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod factor;
pub mod graph;
pub mod harness;
pub mod mechanism;
pub mod rng;
pub mod scenarios;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
