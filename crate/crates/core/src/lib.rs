//! Maximal Rényi divergence of subsystems of matrix product states.
//!
//! The crate is organised bottom-up: dense labelled tensors, matrix product
//! states and operators, Krylov eigensolvers (standard and generalized
//! Lanczos, conjugate gradient), two-site DMRG sweeps, and the divergence
//! pipeline on top. [`oracle`] holds brute-force dense references used to
//! validate everything at small sizes.

#![forbid(unsafe_code)]

pub mod divergence;
pub mod dmrg;
pub mod exec;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod mpo;
pub mod mps;
pub mod oracle;
pub mod pipeline;
pub mod tensor;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
