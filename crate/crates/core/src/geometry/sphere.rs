use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use rand::RngCore;

use super::{Ambient, Manifold, ManifoldKind, RETRACTION_RADIUS, TOL_MANIFOLD, TOL_TANGENT};
use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::rng::unit_interval;

/// The unit sphere `S² ⊂ R³` with the round metric.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sphere;

impl Sphere {
    #[inline]
    fn pi(q: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
        w - q * w.dot(q)
    }
}

impl Manifold for Sphere {
    type Point = Vector3<f64>;
    type Field = SphereField;

    const KIND: ManifoldKind = ManifoldKind::SphereS2;
    const DIM: usize = 2;

    fn check_point(&self, q: &Vector3<f64>) -> Result<()> {
        if !q.is_finite() {
            return Err(Error::invalid("point has non-finite entries"));
        }
        let defect = (q.dot(q) - 1.0).abs();
        if defect > TOL_MANIFOLD {
            return Err(Error::NotOnManifold { defect });
        }
        Ok(())
    }

    fn check_tangent(&self, q: &Vector3<f64>, v: &Vector3<f64>) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::invalid("tangent vector has non-finite entries"));
        }
        let defect = v.dot(q).abs();
        if defect > TOL_TANGENT {
            return Err(Error::NotTangent { defect });
        }
        Ok(())
    }

    fn project(&self, q: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
        Self::pi(q, w)
    }

    fn retract(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let n = x.norm();
        // Normalization is well defined far outside; only the inner radius matters.
        if !(n >= 1.0 - RETRACTION_RADIUS && n.is_finite()) {
            return Err(Error::RetractionDomain {
                detail: "|x| must be at least 0.5",
            });
        }
        Ok(x / n)
    }

    fn reproject(&self, q: &Vector3<f64>, v: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let r = self.retract(q)?;
        // Differential of x ↦ x/|x| applied to v.
        let n = q.norm();
        Ok((r, Self::pi(&r, v) / n))
    }

    fn metric(&self, _q: &Vector3<f64>, v: &Vector3<f64>, w: &Vector3<f64>) -> f64 {
        v.dot(w)
    }

    fn frame(&self, q: &Vector3<f64>) -> Vec<Vector3<f64>> {
        let n = q.norm();
        let u = q / n;
        let k = (0..3).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap_or(0);
        let e1 = Self::pi(&u, &Vector3::ith(k, 1.0)).normalize();
        let e2 = u.cross(&e1);
        vec![e1, e2]
    }

    fn geodesic_acceleration(&self, q: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        -q * v.dot(v)
    }

    fn covariant_acceleration(&self, q: &Vector3<f64>, _v: &Vector3<f64>, a: &Vector3<f64>) -> Vector3<f64> {
        Self::pi(q, a)
    }

    fn connection(
        &self,
        q: &Vector3<f64>,
        _v: &Vector3<f64>,
        _field_value: &Vector3<f64>,
        field_derivative: &Vector3<f64>,
    ) -> Vector3<f64> {
        Self::pi(q, field_derivative)
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Vector3<f64> {
        loop {
            let x = Vector3::from_fn(|_, _| 2.0 * unit_interval(rng) - 1.0);
            let n2 = x.norm_squared();
            if n2 > 1e-6 && n2 <= 1.0 {
                return x / libm::sqrt(n2);
            }
        }
    }

    fn control_columns(&self, q: &Vector3<f64>, generators: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        generators.iter().map(|g| Self::pi(q, g)).collect()
    }

    fn pole_mask_direction(&self, q: &Vector3<f64>, radius: f64) -> Option<Vector3<f64>> {
        let cos_dist = (q[2].abs() / q.norm()).min(1.0);
        if libm::acos(cos_dist) < radius {
            // q × e1 spans T_qS² ∩ {v₁ = 0}.
            Some(Vector3::new(0.0, q[2], -q[1]).normalize())
        } else {
            None
        }
    }

    fn quadratic_form(&self, _q: &Vector3<f64>, a: &Matrix3<f64>, v: &Vector3<f64>, w: &Vector3<f64>) -> Option<f64> {
        Some(v.dot(&(a * w)))
    }

    fn quadratic_sharp(&self, q: &Vector3<f64>, a: &Matrix3<f64>, v: &Vector3<f64>) -> Option<Vector3<f64>> {
        Some(Self::pi(q, &(a * v)))
    }
}
