//! Numerical laboratory for rotationally symmetric translating solitons of
//! mean curvature flow and of flows by 1-homogeneous functions of the
//! principal curvatures.
//!
//! The crate is organised bottom-up:
//!
//! * [`speeds`] – admissible speed functions `f(κ)`, their derivatives, the
//!   dual speed on the face `κ₁ = 0`, and sampling checks of admissibility
//!   and concavity.
//! * [`matrix_calculus`] – `F(A) = f(eig A)` as a function of a symmetric
//!   matrix and the inverse-concavity quadratic form at cone-boundary points.
//! * [`cones`] – two-convexity, the pinching sets `Λ` and the constant `β₂`.
//! * [`bowl`] – the shooting solver for the rotationally symmetric translator
//!   together with pointwise geometry and independent oracles.
//! * [`estimates`] – verification of the curvature estimates, asymptotics,
//!   blow-down and linearized identities on solved profiles.

pub mod bowl;
pub mod cones;
pub mod error;
pub mod estimates;
pub mod matrix_calculus;
pub mod sampling;
pub mod speeds;

pub use error::{LabError, Result};
