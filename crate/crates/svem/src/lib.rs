//! Stochastic virtual element method for 2D/3D linear elasticity.
//!
//! The crate discretizes linear elasticity on arbitrary polygonal (2D) and
//! polyhedral (3D) meshes with low-order virtual elements, models an uncertain
//! Young's modulus as a truncated Karhunen-Loève random field, assembles the
//! resulting stochastic system in separated form `K(θ) = Σ ξ_i(θ) K_i`, and
//! solves it with three interchangeable propagation strategies:
//!
//! * [`pc`] — stochastic Galerkin projection onto an orthonormal polynomial
//!   chaos basis (one large coupled block system),
//! * [`win`] — a weakly intrusive iteration that builds a low-rank expansion
//!   `u(θ) ≈ Σ λ_i(θ) d_i` from alternating deterministic solves and
//!   per-sample scalar updates,
//! * [`mc`] — plain Monte Carlo reference with per-sample sparse solves.
//!
//! [`stats`] turns any of the three solution forms into mean/std fields and
//! kernel density estimates, and [`pipeline`] wires everything behind a
//! declarative run configuration (also exposed by the `svem` binary).

// Validation code writes `!(x > 0.0)` on purpose: unlike `x <= 0.0`, the
// negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod mesh;
pub mod pc;
pub mod pipeline;
pub mod random_field;
pub mod stats;
pub mod svee;
pub mod vem;
pub mod win;

pub use error::{Error, Result};
