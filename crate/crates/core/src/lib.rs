//! Numerical toolkit for constant-coefficient Kolmogorov operators
//!
//! ```text
//! L u = Tr(A D²u) + <Bx, Du> - ∂_t u
//! ```
//!
//! with a degenerate diffusion block A and a block-subdiagonal drift B.
//! The crate covers hypoellipticity checks, the underlying homogeneous Lie
//! group, the explicit Gaussian fundamental solution, exact and
//! Euler–Maruyama simulation of the associated SDE, minimum-energy control,
//! attainable sets, and Harnack chains along admissible curves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod domain;
pub mod error;
pub mod group;
pub mod harnack;
pub mod kernel;
pub mod linalg;
pub mod operator;
pub mod rng;
pub mod sde;
pub mod structure;

pub use domain::{AxisBox, BoxDomain};
pub use error::{KolmoError, Result};
pub use group::{CylinderParams, CylinderShape, GroupPoint};
pub use kernel::GramianBundle;
pub use operator::{validate_operator, DilationGroup, OperatorSpec, RawOperator};
