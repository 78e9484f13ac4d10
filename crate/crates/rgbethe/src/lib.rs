//! Solvers and determinant machinery for Richardson-Gaudin integrable models
//! coupled to a single bosonic mode.
//!
//! The crate covers three model families built on the trigonometric and
//! hyperbolic realizations of the Gaudin algebra:
//!
//! * XXZ spin models (`n` spins, coupling `g`),
//! * the inhomogeneous Dicke model (spins + photon mode, coupling `G`),
//! * the extended (p+ip)-wave pairing model (quasispins + molecular boson).
//!
//! Eigenstates are handled in two equivalent representations: complex Bethe
//! rapidities solving the Richardson-Gaudin equations, and the real
//! eigenvalue-based variables Λ_i solving closed quadratic systems. Scalar
//! products, norms and local form factors are evaluated as small determinant
//! ratios in the Λ variables, and everything is cross-checked against a
//! permanent expansion and exact diagonalization in the conserved-excitation
//! sector.

pub mod detforms;
pub mod kernels;
pub mod models;
pub mod oracle;
pub mod solver;

mod dd;

pub mod cli;

pub use kernels::{GaudinKernel, KernelError, Realization};
pub use models::{BasisState, ModelError, ModelSpec, ModelVariant};
pub use solver::{BetheSolution, ContinuationPath, SolveConfig, SolverError};
