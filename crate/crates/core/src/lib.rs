//! Wasserstein natural gradient on one-dimensional parametric models.
//!
//! The crate pulls the L²-Wasserstein geometry of densities on ℝ back to a
//! finite-dimensional parameter space and uses the resulting metric tensor as
//! a preconditioner:
//!
//! - [`densities`]: the parametric families (Gaussian mixtures, Gamma,
//!   Gaussian, Laplace) with analytic CDFs and parameter derivatives.
//! - [`transport`]: one-dimensional optimal transport (Monge map, W₂,
//!   Kantorovich potential, W₂ gradient).
//! - [`metrics`]: Wasserstein and Fisher-Rao metric tensors, the modified
//!   Wasserstein tensor, the exact W₂ Hessian and the Gaussian closed form.
//! - [`optimize`]: the preconditioned descent schemes with backtracking line
//!   search.
//! - [`geodesics`]: discrete geodesics, Hamiltonian shooting and displacement
//!   interpolation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod densities;
pub mod error;
pub mod geodesics;
pub mod grid;
pub mod metrics;
pub mod optimize;
pub mod transport;

pub use densities::{FamilyKind, FamilySpec, Model, ParameterVector};
pub use error::{Error, Result};
pub use grid::Grid;
pub use metrics::{MetricKind, MetricMatrix};
pub use transport::{EmpiricalTarget, Target, TransportMap1D};
