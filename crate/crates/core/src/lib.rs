//! Cumulative-Bernoulli-trials Markov chains in n success categories and
//! their complete spectral theory via multivariable Krawtchouk polynomials.
//!
//! The chain: a player holds N dice and n kinds of success. Each round the
//! successes already banked in category r survive a keep-roll with
//! probability alpha_r, and the remaining dice are rerolled into the
//! categories with probabilities beta_1..beta_n. Iterating gives a Markov
//! chain on the simplex of count vectors with sum <= N.
//!
//! What the crate provides, module by module:
//!
//! - [`combinatorics`]: multi-indices, graded-colex simplex enumeration, and
//!   exact binomial/multinomial primitives.
//! - [`hypergeo`]: the terminating matrix-argument hypergeometric series
//!   defining the polynomial family, its transformation identities, and a
//!   quadrature oracle for the integral representation.
//! - [`params`]: the parameter web — stationary weights eta, the polynomial
//!   matrix u solved from the eigenfunction condition, dual weights, norm
//!   factors, and all consistency relations between them.
//! - [`kernel`]: the dense transition kernel, reversibility checks, closed-
//!   form eigenpair verification, and spectral reconstruction.
//! - [`ortho`]: brute-force Gram matrices establishing orthogonality, dual
//!   orthogonality, the generating function, and a numerical adjudication of
//!   competing norm formulas.
//! - [`sim`]: a seeded Monte Carlo sampler of the dice process with
//!   chi-square comparisons against the analytic kernel and stationary law.
//! - [`acceptance`]: the end-to-end verification suite run by the CLI and
//!   the integration tests.

pub mod acceptance;
pub mod combinatorics;
pub mod error;
pub mod hypergeo;
pub mod kernel;
pub mod numerics;
pub mod ortho;
pub mod params;
pub mod sim;
pub mod tolerances;

pub use error::{CbtError, Result};
pub use tolerances::Tolerances;
