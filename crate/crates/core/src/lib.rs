//! Koditschek feedback on compact embedded manifolds.
//!
//! The crate makes the graph `X(Q) ⊂ TQ` of a prescribed vector field an
//! exponentially attracting invariant manifold of a fully actuated
//! second-order system, integrates the closed loop on `S²` and `SO(3)`, and
//! measures how well the result behaves: exact residual decay, asymptotic
//! phase, and finite-time normal-attractivity / center-bunching certificates
//! built from numerical monodromy matrices.
//!
//! Everything is `no_std` + `alloc`; file formats and the CLI live in the
//! `naim-scenario` crate.

#![cfg_attr(not(test), no_std)]
// `!(x < tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod diagnostics;
pub mod error;
pub mod feedback;
pub mod field;
pub mod geometry;
pub mod integrate;
mod ode;
pub mod rigid_body;
pub mod rng;

pub use error::{Error, Result};
pub use feedback::{Actuation, ControlVector, FeedbackConfig};
pub use field::{ReferenceTrajectory, RotationField, SphereField, VectorField};
pub use geometry::{Ambient, Manifold, ManifoldKind, RotationGroup, ShapingMetric, Sphere, Tangent, WhichMetric};
pub use integrate::{AccelerationLaw, SimulationSettings, TangentState, Trajectory};
