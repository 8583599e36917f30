use alloc::vec::Vec;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::RngCore;

use super::{Manifold, ManifoldKind, RETRACTION_RADIUS, TOL_MANIFOLD, TOL_TANGENT};
use crate::error::{Error, Result};
use crate::field::RotationField;
use crate::rng::unit_interval;

/// The hat map `ξ ↦ ξ^`, with `ξ^ w = ξ × w`.
pub fn hat(xi: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -xi[2], xi[1], //
        xi[2], 0.0, -xi[0], //
        -xi[1], xi[0], 0.0,
    )
}

/// `(A − Aᵀ)/2`.
pub fn skew_part(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a - a.transpose()) * 0.5
}

/// Inverse of [`hat`] applied to the skew part of `a`.
pub fn vee_unchecked(a: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

/// Inverse of [`hat`]; rejects matrices with a symmetric part above `1e-9`.
pub fn vee(a: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let defect = ((a + a.transpose()) * 0.5).norm();
    if !(defect <= TOL_TANGENT) {
        return Err(Error::NotSkew { defect });
    }
    Ok(vee_unchecked(a))
}

/// `SO(3)` with the left-invariant metric `g(Rξ^, Rη^) = ⟨ξ, 𝕀η⟩`,
/// `𝕀 = diag(I₁, I₂, I₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationGroup {
    inertia: Vector3<f64>,
    inertia_inv: Vector3<f64>,
}

impl RotationGroup {
    pub fn new(inertia: Vector3<f64>) -> Result<Self> {
        if !inertia.iter().all(|&i| i.is_finite() && i > 0.0) {
            return Err(Error::invalid("inertia entries must be finite and positive"));
        }
        Ok(RotationGroup {
            inertia,
            inertia_inv: inertia.map(|i| 1.0 / i),
        })
    }

    pub fn inertia(&self) -> Vector3<f64> {
        self.inertia
    }

    pub fn inertia_apply(&self, w: &Vector3<f64>) -> Vector3<f64> {
        self.inertia.component_mul(w)
    }

    pub fn inertia_solve(&self, w: &Vector3<f64>) -> Vector3<f64> {
        self.inertia_inv.component_mul(w)
    }

    /// Body velocity `Ω = (Rᵀ V)^∨` (skew part taken first).
    pub fn body_velocity(&self, r: &Matrix3<f64>, v: &Matrix3<f64>) -> Vector3<f64> {
        vee_unchecked(&(r.transpose() * v))
    }

    /// Torque-free body acceleration `Ω̇ = −𝕀⁻¹(Ω × 𝕀Ω)`.
    pub fn euler_body_acceleration(&self, omega: &Vector3<f64>) -> Vector3<f64> {
        -self.inertia_solve(&omega.cross(&self.inertia_apply(omega)))
    }

    /// Symmetric difference between the Levi-Civita connection of `g` and the
    /// one induced by the Frobenius embedding, in body coordinates.
    fn connection_correction(&self, xi: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
        let a = self.inertia_apply(x).cross(xi);
        let b = self.inertia_apply(xi).cross(x);
        -self.inertia_solve(&(a + b)) * 0.5
    }
}

impl Manifold for RotationGroup {
    type Point = Matrix3<f64>;
    type Field = RotationField;

    const KIND: ManifoldKind = ManifoldKind::RotationSO3;
    const DIM: usize = 3;

    fn check_point(&self, r: &Matrix3<f64>) -> Result<()> {
        if !r.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("point has non-finite entries"));
        }
        let orth = (r.transpose() * r - Matrix3::identity()).norm();
        let det = (r.determinant() - 1.0).abs();
        let defect = orth.max(det);
        if defect > TOL_MANIFOLD {
            return Err(Error::NotOnManifold { defect });
        }
        Ok(())
    }

    fn check_tangent(&self, r: &Matrix3<f64>, v: &Matrix3<f64>) -> Result<()> {
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("tangent vector has non-finite entries"));
        }
        let b = r.transpose() * v;
        let defect = ((b + b.transpose()) * 0.5).norm();
        if defect > TOL_TANGENT {
            return Err(Error::NotTangent { defect });
        }
        Ok(())
    }

    fn project(&self, r: &Matrix3<f64>, w: &Matrix3<f64>) -> Matrix3<f64> {
        r * skew_part(&(r.transpose() * w))
    }

    fn retract(&self, x: &Matrix3<f64>) -> Result<Matrix3<f64>> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::RetractionDomain {
                detail: "non-finite entries",
            });
        }
        let svd = x.svd(true, true);
        let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::RetractionDomain {
                detail: "singular value decomposition failed",
            });
        };
        let (imin, smin) = svd
            .singular_values
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((2, 0.0));
        if !(smin > RETRACTION_RADIUS) {
            return Err(Error::RetractionDomain {
                detail: "smallest singular value must exceed 0.5",
            });
        }
        let mut p = u * v_t;
        if p.determinant() < 0.0 {
            u.column_mut(imin).neg_mut();
            p = u * v_t;
        }
        Ok(p)
    }

    fn reproject(&self, r: &Matrix3<f64>, v: &Matrix3<f64>) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
        let rr = self.retract(r)?;
        Ok((rr, self.project(&rr, v)))
    }

    fn metric(&self, r: &Matrix3<f64>, v: &Matrix3<f64>, w: &Matrix3<f64>) -> f64 {
        let xi = self.body_velocity(r, v);
        let eta = self.body_velocity(r, w);
        xi.dot(&self.inertia_apply(&eta))
    }

    fn frame(&self, r: &Matrix3<f64>) -> Vec<Matrix3<f64>> {
        (0..3)
            .map(|i| r * hat(&Vector3::ith(i, 1.0 / libm::sqrt(self.inertia[i]))))
            .collect()
    }

    fn geodesic_acceleration(&self, r: &Matrix3<f64>, v: &Matrix3<f64>) -> Matrix3<f64> {
        let omega = self.body_velocity(r, v);
        let w = hat(&omega);
        r * (w * w + hat(&self.euler_body_acceleration(&omega)))
    }

    fn covariant_acceleration(&self, r: &Matrix3<f64>, v: &Matrix3<f64>, a: &Matrix3<f64>) -> Matrix3<f64> {
        let omega = self.body_velocity(r, v);
        let omega_dot = vee_unchecked(&(r.transpose() * a));
        let body = omega_dot + self.inertia_solve(&omega.cross(&self.inertia_apply(&omega)));
        r * hat(&body)
    }

    fn connection(
        &self,
        r: &Matrix3<f64>,
        v: &Matrix3<f64>,
        field_value: &Matrix3<f64>,
        field_derivative: &Matrix3<f64>,
    ) -> Matrix3<f64> {
        let xi = self.body_velocity(r, v);
        let x = self.body_velocity(r, field_value);
        let embedded = vee_unchecked(&(r.transpose() * field_derivative));
        r * hat(&(embedded + self.connection_correction(&xi, &x)))
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Matrix3<f64> {
        // Uniform unit quaternion by rejection from the 4-ball.
        loop {
            let c: [f64; 4] = core::array::from_fn(|_| 2.0 * unit_interval(rng) - 1.0);
            let n2: f64 = c.iter().map(|x| x * x).sum();
            if n2 > 1e-6 && n2 <= 1.0 {
                let q = UnitQuaternion::from_quaternion(Quaternion::new(c[0], c[1], c[2], c[3]));
                return q.to_rotation_matrix().into_inner();
            }
        }
    }

    fn control_columns(&self, r: &Matrix3<f64>, generators: &[Matrix3<f64>]) -> Vec<Matrix3<f64>> {
        generators.iter().map(|g| r * skew_part(g)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn body(i: [f64; 3]) -> RotationGroup {
        RotationGroup::new(Vector3::from(i)).expect("positive inertia")
    }

    #[test]
    fn hat_vee_examples() {
        assert_relative_eq!(hat(&Vector3::z()) * Vector3::x(), Vector3::y());
        let xi = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&xi)).ok(), Some(xi));
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        assert!(matches!(vee(&Matrix3::identity()), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn identity_has_no_skew_part() {
        let so3 = body([1.0, 2.0, 3.0]);
        assert_eq!(
            so3.project(&Matrix3::identity(), &Matrix3::identity()),
            Matrix3::zeros()
        );
    }

    #[test]
    fn metric_uses_inertia() {
        let so3 = body([1.0, 2.0, 3.0]);
        let r = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1)
            .to_rotation_matrix()
            .into_inner();
        for (i, expected) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            let v = r * hat(&Vector3::ith(i, 1.0));
            assert_relative_eq!(so3.metric(&r, &v, &v), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn retract_polar_factor() {
        let so3 = body([1.0, 2.0, 3.0]);
        let r = UnitQuaternion::from_euler_angles(0.1, 0.4, -0.7)
            .to_rotation_matrix()
            .into_inner();
        assert_relative_eq!(so3.retract(&r).unwrap_or_default(), r, epsilon = 1e-14);
        let x = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.001));
        assert_relative_eq!(
            so3.retract(&x).unwrap_or_default(),
            Matrix3::identity(),
            epsilon = 1e-14
        );
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let p = so3.retract(&reflection).unwrap_or_default();
        assert!((p.determinant() - 1.0).abs() < 1e-12);
        assert!(so3.retract(&(Matrix3::identity() * 0.3)).is_err());
    }

    #[test]
    fn principal_axis_spin_has_no_body_acceleration() {
        let so3 = body([1.0, 2.0, 3.0]);
        let r = Matrix3::identity();
        let v = hat(&Vector3::x());
        let a = so3.geodesic_acceleration(&r, &v);
        assert_relative_eq!(a, v * v, epsilon = 1e-15);
    }

    #[test]
    fn geodesic_acceleration_has_zero_covariant_part() {
        let so3 = body([1.0, 2.0, 3.0]);
        let r = UnitQuaternion::from_euler_angles(0.9, -0.3, 0.2)
            .to_rotation_matrix()
            .into_inner();
        let v = r * hat(&Vector3::new(0.4, -1.2, 0.7));
        let a = so3.geodesic_acceleration(&r, &v);
        assert!(so3.covariant_acceleration(&r, &v, &a).norm() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_inertia() {
        assert!(RotationGroup::new(Vector3::new(1.0, 0.0, 2.0)).is_err());
        assert!(RotationGroup::new(Vector3::new(1.0, f64::NAN, 2.0)).is_err());
    }
}
