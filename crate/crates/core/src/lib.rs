//! Factorization of active-space electronic-structure Hamiltonians and
//! fault-tolerant resource estimation for qubitized phase estimation.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`hamiltonian`] — ingest and validate active-space integrals (FCIDUMP).
//! 2. [`factor`] — single factorization (pivoted Cholesky), double
//!    factorization, and tensor hypercontraction of the two-electron tensor.
//! 3. [`lambda`] — L1 norms of the factorized Hamiltonian coefficients,
//!    which set the phase-estimation iteration count.
//! 4. [`logical`] — Toffoli and logical-qubit cost models.
//! 5. [`surface`] — compilation of logical costs into surface-code physical
//!    resources (code distances, factories, runtime, failure probability).
//! 6. [`classical`] — DMRG cost scaling and discarded-weight extrapolation
//!    bookkeeping for quantum-vs-classical crossover comparisons.
//! 7. [`oracle`] — dense exact diagonalization for tiny active spaces, used
//!    to evaluate factorization truncation errors.
//! 8. [`report`] — pipeline orchestration, crossover tables, plot data.

pub mod classical;
pub mod error;
pub mod factor;
pub mod hamiltonian;
pub mod lambda;
pub mod linalg;
pub mod logical;
pub mod oracle;
pub mod report;
pub mod surface;

pub use error::{Error, Result};
