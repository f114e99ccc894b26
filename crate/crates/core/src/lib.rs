//! Multitask tabular learning toolkit: a masked-attention transformer for
//! tabular multitask prediction, a correlation-controlled synthetic dataset
//! generator, evaluation metrics, and a deterministic training loop.
//!
//! The crate is organised as five layers:
//!
//! - [`numkit`] — dense f64 tensors, a reverse-mode gradient tape, a cyclic
//!   Jacobi eigensolver, Gram-Schmidt orthonormalization, and seeded sampling.
//! - [`benchgen`] — the synthetic multitask dataset generator: task weight
//!   vectors with exact pairwise cosine similarity, polynomial labels with
//!   per-task noise, and dataset (de)serialization.
//! - [`model`] — the multitask transformer (task tokens, masked inter-feature
//!   attention, inter-sample attention with optional rotary encoding) plus
//!   single-task and shared-bottom MLP baselines.
//! - [`metrics`] — AUC, explained variance, MSE, Pearson correlation, and the
//!   multitask gain.
//! - [`train`] — splits, standardization, losses, Adam, early stopping,
//!   checkpointing, and evaluation.

pub mod benchgen;
mod error;
pub mod metrics;
pub mod model;
pub mod numkit;
pub mod train;

pub use error::{Error, Result};
pub use numkit::{Rng, SymEigResult, Tape, Tensor, Var};

/// Version string embedded in reports, checkpoints, and dataset schemas.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
