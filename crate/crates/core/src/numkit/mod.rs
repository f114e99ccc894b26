//! Minimal deterministic numeric kernel.
//!
//! Dense row-major f64 tensors, a define-by-run gradient tape, a cyclic
//! Jacobi symmetric eigensolver, modified Gram-Schmidt, and a seeded
//! generator for normal/uniform sampling. Everything here is a pure function
//! of its inputs and the generator state; a fixed seed reproduces any
//! pipeline bit-identically within one build.

pub mod eig;
pub mod fd;
pub mod orth;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use eig::{sym_eig, SymEigResult};
pub use orth::gram_schmidt;
pub use rng::{splitmix64, Rng};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
