//! Explicit-kernel evaluation of the damped wave equation
//! `u_tt - Δu + u_t = 0` in `R^n`, and tracking of the spatial maximizers of
//! its solution ("time-delayed hot spots").
//!
//! Modules, bottom-up:
//! - [`specfun`]: modified Bessel functions, the kernel families `k_ℓ`, the weight `E_n`.
//! - [`initdata`]: bump-sum initial data with analytic gradients and support geometry.
//! - [`quadrature`]: Gauss–Legendre rules and adaptive ball/sphere integrators.
//! - [`pde`]: heat semigroup, solution operators, heat/wave parts and their derivatives.
//! - [`hotspots`]: maximizer search, tracking, escape experiments, concavity probes.
//! - [`verify`]: finite-difference oracle, PDE residuals, decay-rate fits.
//! - [`acceptance`]: the numbered acceptance criteria, shared by tests and the CLI.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the component formulas.
#![allow(clippy::needless_range_loop)]

pub mod acceptance;
pub mod hotspots;
pub mod initdata;
pub mod pde;
pub mod quadrature;
pub mod specfun;
pub mod verify;

/// Error type shared by all modules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },
    /// A numerical procedure could not reach its accuracy target.
    #[error("{op}: tolerance not met: {msg}")]
    Tolerance { op: &'static str, msg: String },
    /// Caller-supplied data violates a structural precondition.
    #[error("{op}: invalid input: {msg}")]
    Invalid { op: &'static str, msg: String },
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }
    pub(crate) fn tolerance(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Tolerance {
            op,
            msg: msg.into(),
        }
    }
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            op,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
