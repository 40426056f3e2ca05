//! Matrix semi-measures, contraction certificates, and trajectory-level
//! verification for network dynamical systems.
//!
//! A *semi-norm* `|v| = ‖Rv‖` (with `R` a full-rank wide matrix and `‖·‖` a
//! p-norm) measures a state vector only transversally to `Ker R`. The
//! *semi-measure* of a square matrix `A` is the one-sided derivative
//! `μ(A) = lim_{h→0⁺} (|I + hA| − 1)/h`, the natural generalisation of the
//! logarithmic norm. Semi-measures of Jacobians certify exponential
//! contraction of trajectory distances modulo a subspace — the workhorse
//! behind consensus, synchronization, and distributed-optimization
//! convergence proofs.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Provides |
//! |--------|----------|
//! | [`linalg`] | dense complex matrices, eigen/SVD/pseudoinverse (LAPACK-backed) |
//! | [`graph`] | weighted digraphs, Laplacians, spectral reduction matrices |
//! | [`measures`] | norms, semi-norms, matrix measures and semi-measures |
//! | [`tensor`] | (2,p) tensor norms for synchronization analysis |
//! | [`systems`] | the model zoo (consensus flows, primal-dual, oscillators, …) |
//! | [`certify`] | sampled contraction / invariance certificates |
//! | [`sim`] | adaptive integration and trajectory-level inequality checks |
//!
//! All public operations are pure functions over immutable values and are
//! freely sendable across threads.

pub mod certify;
pub mod graph;
pub mod linalg;
pub mod measures;
pub mod sim;
pub mod systems;
pub mod tensor;

mod lapack;
