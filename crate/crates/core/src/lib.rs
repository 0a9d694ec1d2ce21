// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Exponential-stability test for linear neutral time-delay systems.

// Guards are written as `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chebyshev;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod lyapunov;
pub mod moments;
pub mod oracle;
pub mod quadrature;
pub mod scalar;
pub mod stability;
pub mod system;

pub use error::{Error, Result};
pub use scalar::Real;
