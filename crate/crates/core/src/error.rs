// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrices of inconsistent shape. Distinct from an assumption violation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A structural assumption of the test does not hold (for example ‖D‖ ≥ 1).
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("singular parameterization: {0}")]
    SingularParameterization(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// The boundary-value system for the delay Lyapunov matrix is rank deficient.
    #[error(
        "Lyapunov condition violated or numerically degenerate: boundary system rank {rank} of {size}, condition estimate {condition:.3e}"
    )]
    DegenerateBoundary {
        rank: usize,
        size: usize,
        condition: f64,
    },

    /// det(L) = 0, so the moment recursions are unavailable.
    #[error("moment recursion unavailable: det(L) = 0 (reciprocal condition {rcond:.3e})")]
    RecursionUnavailable { rcond: f64 },

    #[error("argument {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature tolerance not met: requested {requested:.3e}, achieved {achieved:.3e}")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("root finder failed: {0}")]
    RootFinder(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
