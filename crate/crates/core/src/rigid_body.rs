//! Direct integration of the rigid-body Euler equations with two torque jets,
//!
//! ```text
//! Ṙ = R Ω^,    d/dt(𝕀Ω) = (𝕀Ω) × Ω + u₁e₁ + u₂e₂,
//! ```
//!
//! used as an independent check of the geometric pipeline on `SO(3)`.

use core::ops::{Add, Mul};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{hat, Manifold, RotationGroup};
use crate::ode::{rk4_increment, step_count};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub rotation: Matrix3<f64>,
    /// Body angular velocity `Ω`.
    pub omega: Vector3<f64>,
}

impl Add for BodyState {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        BodyState {
            rotation: self.rotation + rhs.rotation,
            omega: self.omega + rhs.omega,
        }
    }
}

impl Mul<f64> for BodyState {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        BodyState {
            rotation: self.rotation * rhs,
            omega: self.omega * rhs,
        }
    }
}

impl BodyState {
    /// Ambient velocity `R Ω^`.
    pub fn velocity(&self) -> Matrix3<f64> {
        self.rotation * hat(&self.omega)
    }

    pub fn kinetic_energy(&self, body: &RotationGroup) -> f64 {
        0.5 * self.omega.dot(&body.inertia_apply(&self.omega))
    }

    /// Angular momentum in the spatial frame, `R 𝕀Ω`.
    pub fn spatial_momentum(&self, body: &RotationGroup) -> Vector3<f64> {
        self.rotation * body.inertia_apply(&self.omega)
    }
}

fn rhs(body: &RotationGroup, torque: &Vector3<f64>, s: &BodyState) -> BodyState {
    let l = body.inertia_apply(&s.omega);
    BodyState {
        rotation: s.rotation * hat(&s.omega),
        omega: body.inertia_solve(&(l.cross(&s.omega) + torque)),
    }
}

/// Integrate with constant jet inputs `(u₁, u₂)` for `duration`, RK4 with
/// polar retraction of `R` after every step.
pub fn integrate_euler(
    body: &RotationGroup,
    initial: &BodyState,
    controls: [f64; 2],
    duration: f64,
    dt: f64,
) -> Result<BodyState> {
    if !(dt.is_finite() && dt > 0.0 && duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid("duration must be non-negative and dt positive"));
    }
    body.check_point(&initial.rotation)?;
    let torque = Vector3::new(controls[0], controls[1], 0.0);
    let (n, h) = step_count(duration, dt);
    let mut s = *initial;
    for k in 0..n {
        let d = rk4_increment(&s, h, |x| Ok(rhs(body, &torque, x)))?;
        let next = s + d;
        s = BodyState {
            rotation: body.retract(&next.rotation).map_err(|e| e.at_time(k as f64 * h))?,
            omega: next.omega,
        };
    }
    Ok(s)
}
