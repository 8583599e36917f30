//! Embedded-manifold geometry for the unit sphere `S² ⊂ R³` and the rotation
//! group `SO(3) ⊂ R^{3×3}`.
//!
//! Points and tangent vectors are stored in ambient coordinates; no charts are
//! used anywhere. Every manifold exposes the same small toolkit through the
//! [`Manifold`] trait: tangent projection, a retraction back onto the manifold,
//! the Riemannian metric `g`, the Levi-Civita connection and the geodesic
//! spray (as an ambient acceleration).

use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::field::VectorField;

mod metric;
mod rotation;
mod sphere;

pub use metric::{metric_eval, sharp_flat, ShapingMetric, WhichMetric};
pub use rotation::{hat, skew_part, vee, vee_unchecked, RotationGroup};
pub use sphere::Sphere;

/// Tolerance for the point invariants (`|q| = 1`, `RᵀR = Id`).
pub const TOL_MANIFOLD: f64 = 1e-9;
/// Tolerance for the tangency invariants.
pub const TOL_TANGENT: f64 = 1e-9;
/// Distance from the manifold within which [`Manifold::retract`] is defined.
pub const RETRACTION_RADIUS: f64 = 0.5;

/// A finite-dimensional real vector space that holds both points and tangent
/// vectors of an embedded manifold.
///
/// Flat indexing is row-major, which is also the CSV column order.
pub trait Ambient:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
{
    /// Number of ambient coordinates.
    const LEN: usize;

    fn zero() -> Self;

    /// Euclidean (Frobenius) inner product of the ambient space.
    fn inner(&self, other: &Self) -> f64;

    fn get(&self, index: usize) -> f64;

    fn from_fn(f: impl FnMut(usize) -> f64) -> Self;

    fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    fn is_finite(&self) -> bool {
        (0..Self::LEN).all(|i| self.get(i).is_finite())
    }

    fn to_vec(&self) -> Vec<f64> {
        (0..Self::LEN).map(|i| self.get(i)).collect()
    }

    fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != Self::LEN {
            return Err(Error::Dimension {
                expected: Self::LEN,
                found: values.len(),
            });
        }
        Ok(Self::from_fn(|i| values[i]))
    }
}

impl Ambient for Vector3<f64> {
    const LEN: usize = 3;

    fn zero() -> Self {
        Vector3::zeros()
    }

    fn inner(&self, other: &Self) -> f64 {
        self.dot(other)
    }

    fn get(&self, index: usize) -> f64 {
        self[index]
    }

    fn from_fn(mut f: impl FnMut(usize) -> f64) -> Self {
        Vector3::new(f(0), f(1), f(2))
    }
}

impl Ambient for Matrix3<f64> {
    const LEN: usize = 9;

    fn zero() -> Self {
        Matrix3::zeros()
    }

    fn inner(&self, other: &Self) -> f64 {
        self.dot(other)
    }

    fn get(&self, index: usize) -> f64 {
        self[(index / 3, index % 3)]
    }

    fn from_fn(mut f: impl FnMut(usize) -> f64) -> Self {
        Matrix3::from_fn(|r, c| f(3 * r + c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    SphereS2,
    RotationSO3,
}

/// A compact Riemannian manifold embedded in a Euclidean ambient space.
///
/// Apart from the `check_*` methods nothing here validates its inputs: these
/// are the hot path of the integrator and get evaluated at Runge-Kutta stage
/// points that sit slightly off the manifold.
pub trait Manifold: Clone + Debug + Send + Sync + 'static {
    type Point: Ambient;
    type Field: VectorField<Self>;

    const KIND: ManifoldKind;
    /// Intrinsic dimension.
    const DIM: usize;

    fn check_point(&self, q: &Self::Point) -> Result<()>;

    fn check_tangent(&self, q: &Self::Point, v: &Self::Point) -> Result<()>;

    /// Orthogonal projection (ambient inner product) of `w` onto `T_qQ`.
    fn project(&self, q: &Self::Point, w: &Self::Point) -> Self::Point;

    /// Closest-point style retraction of an ambient point onto the manifold.
    fn retract(&self, x: &Self::Point) -> Result<Self::Point>;

    /// Retract a drifted `(q, v)` pair onto `TQ`, carrying the velocity along.
    fn reproject(&self, q: &Self::Point, v: &Self::Point) -> Result<(Self::Point, Self::Point)>;

    /// The base Riemannian metric `g_q(v, w)`.
    fn metric(&self, q: &Self::Point, v: &Self::Point, w: &Self::Point) -> f64;

    /// A `g`-orthonormal basis of `T_qQ`.
    fn frame(&self, q: &Self::Point) -> Vec<Self::Point>;

    /// Ambient acceleration of the geodesic through `(q, v)`.
    fn geodesic_acceleration(&self, q: &Self::Point, v: &Self::Point) -> Self::Point;

    /// Covariant acceleration `∇_q̇ q̇` of a curve with ambient state
    /// `(q, q̇, q̈) = (q, v, a)`.
    fn covariant_acceleration(&self, q: &Self::Point, v: &Self::Point, a: &Self::Point) -> Self::Point;

    /// `∇_v X` from the field value `X(q)` and the ambient directional
    /// derivative `D_qX · v`.
    fn connection(
        &self,
        q: &Self::Point,
        v: &Self::Point,
        field_value: &Self::Point,
        field_derivative: &Self::Point,
    ) -> Self::Point;

    /// Draw a point from the normalised Riemannian volume (uniform measure).
    fn sample_point(&self, rng: &mut dyn RngCore) -> Self::Point;

    /// Tangent control columns at `q` generated by fixed ambient data.
    ///
    /// On `S²` the generators are projected onto `T_qS²`; on `SO(3)` they are
    /// Lie algebra elements that get left-translated to `R`.
    fn control_columns(&self, q: &Self::Point, generators: &[Self::Point]) -> Vec<Self::Point>;

    /// Unit spanning vector of the actuated line `D_q = {v : v₁ = 0}` when `q`
    /// lies within geodesic distance `radius` of a pole, `None` otherwise or
    /// when the manifold has no pole mask.
    fn pole_mask_direction(&self, _q: &Self::Point, _radius: f64) -> Option<Self::Point> {
        None
    }

    /// `vᵀ A w` in ambient coordinates, where supported.
    fn quadratic_form(&self, _q: &Self::Point, _a: &Matrix3<f64>, _v: &Self::Point, _w: &Self::Point) -> Option<f64> {
        None
    }

    /// `g♯` of the covector `z ↦ vᵀ A z`, where supported.
    fn quadratic_sharp(&self, _q: &Self::Point, _a: &Matrix3<f64>, _v: &Self::Point) -> Option<Self::Point> {
        None
    }

    fn norm(&self, q: &Self::Point, v: &Self::Point) -> f64 {
        libm::sqrt(self.metric(q, v, v).max(0.0))
    }

    /// Coordinates of a tangent vector in [`Manifold::frame`].
    fn frame_coordinates(&self, q: &Self::Point, v: &Self::Point) -> Vec<f64> {
        self.frame(q).iter().map(|e| self.metric(q, e, v)).collect()
    }
}

/// A tangent vector together with its base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent<P> {
    pub base: P,
    pub vec: P,
}

impl<P: Ambient> Tangent<P> {
    pub fn new<M: Manifold<Point = P>>(manifold: &M, base: P, vec: P) -> Result<Self> {
        manifold.check_point(&base)?;
        manifold.check_tangent(&base, &vec)?;
        Ok(Tangent { base, vec })
    }

    pub(crate) fn same_base(&self, other: &Self) -> Result<()> {
        if self.base == other.base {
            Ok(())
        } else {
            Err(Error::BaseMismatch)
        }
    }
}

/// Project an ambient vector onto the tangent space at a validated point.
pub fn project_tangent<M: Manifold>(manifold: &M, q: &M::Point, w: &M::Point) -> Result<Tangent<M::Point>> {
    manifold.check_point(q)?;
    if !w.is_finite() {
        return Err(Error::invalid("ambient vector has non-finite entries"));
    }
    Ok(Tangent {
        base: *q,
        vec: manifold.project(q, w),
    })
}

/// Levi-Civita covariant derivative `∇_v X` of a reference field.
pub fn covariant_derivative<M: Manifold>(manifold: &M, field: &M::Field, v: &Tangent<M::Point>) -> Tangent<M::Point> {
    let q = &v.base;
    let vec = manifold.connection(q, &v.vec, &field.eval(q), &field.derivative(q, &v.vec));
    Tangent { base: *q, vec }
}

/// Gram-Schmidt in a caller-supplied inner product; vectors whose remainder
/// falls below `drop_tol` (relative to their original norm) are skipped.
pub(crate) fn gram_schmidt<T, F>(vectors: &[T], inner: F, drop_tol: f64) -> Vec<T>
where
    T: Clone + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    F: Fn(&T, &T) -> f64,
{
    let mut basis: Vec<T> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = libm::sqrt(inner(v, v));
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let c = inner(&w, b);
                w = w - b.clone() * c;
            }
        }
        let n = libm::sqrt(inner(&w, &w));
        if n > drop_tol * scale {
            basis.push(w * (1.0 / n));
        }
    }
    basis
}
