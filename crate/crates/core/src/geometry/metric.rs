use alloc::format;

use nalgebra::Matrix3;

use super::{Manifold, ManifoldKind, Tangent};
use crate::error::{Error, Result};

/// The shaping metric `g̃` used in the damping term of the feedback law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapingMetric {
    SameAsBase,
    /// `g̃ = λ·g` with `λ > 0`.
    ScaledBase(f64),
    /// `g̃_q(v, w) = vᵀ A w` restricted to `T_qS²`, `A` symmetric positive
    /// definite. Only available on the sphere.
    AmbientQuadratic(Matrix3<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichMetric {
    Base,
    Shaping,
}

impl ShapingMetric {
    pub fn validate<M: Manifold>(&self, _manifold: &M) -> Result<()> {
        match *self {
            ShapingMetric::SameAsBase => Ok(()),
            ShapingMetric::ScaledBase(l) => {
                if l.is_finite() && l > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("scale factor must be positive, got {l}")))
                }
            }
            ShapingMetric::AmbientQuadratic(a) => {
                if M::KIND != ManifoldKind::SphereS2 {
                    return Err(Error::invalid(
                        "ambient quadratic shaping metrics are only supported on the sphere",
                    ));
                }
                if !a.iter().all(|x| x.is_finite()) {
                    return Err(Error::invalid("shaping matrix has non-finite entries"));
                }
                let asym = (a - a.transpose()).norm();
                if asym > 1e-12 * a.norm().max(1.0) {
                    return Err(Error::invalid("shaping matrix must be symmetric"));
                }
                if a.cholesky().is_none() {
                    return Err(Error::invalid("shaping matrix must be positive definite"));
                }
                Ok(())
            }
        }
    }

    /// `g̃_q(v, w)` without validation.
    pub fn eval<M: Manifold>(&self, m: &M, q: &M::Point, v: &M::Point, w: &M::Point) -> f64 {
        match self {
            ShapingMetric::SameAsBase => m.metric(q, v, w),
            ShapingMetric::ScaledBase(l) => l * m.metric(q, v, w),
            ShapingMetric::AmbientQuadratic(a) => m.quadratic_form(q, a, v, w).unwrap_or_else(|| m.metric(q, v, w)),
        }
    }

    /// `g♯ g̃♭ v` without validation.
    pub fn sharp_flat<M: Manifold>(&self, m: &M, q: &M::Point, v: &M::Point) -> M::Point {
        match self {
            ShapingMetric::SameAsBase => *v,
            ShapingMetric::ScaledBase(l) => *v * *l,
            ShapingMetric::AmbientQuadratic(a) => m.quadratic_sharp(q, a, v).unwrap_or(*v),
        }
    }
}

/// Evaluate `g` or `g̃` on two tangent vectors at the same base point.
pub fn metric_eval<M: Manifold>(
    manifold: &M,
    shaping: &ShapingMetric,
    which: WhichMetric,
    v: &Tangent<M::Point>,
    w: &Tangent<M::Point>,
) -> Result<f64> {
    v.same_base(w)?;
    match which {
        WhichMetric::Base => Ok(manifold.metric(&v.base, &v.vec, &w.vec)),
        WhichMetric::Shaping => {
            shaping.validate(manifold)?;
            Ok(shaping.eval(manifold, &v.base, &v.vec, &w.vec))
        }
    }
}

/// The unique tangent `w` with `g(w, ·) = g̃(v, ·)`.
pub fn sharp_flat<M: Manifold>(
    manifold: &M,
    shaping: &ShapingMetric,
    v: &Tangent<M::Point>,
) -> Result<Tangent<M::Point>> {
    shaping.validate(manifold)?;
    Ok(Tangent {
        base: v.base,
        vec: shaping.sharp_flat(manifold, &v.base, &v.vec),
    })
}
