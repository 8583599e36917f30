//! The prescribed first-order dynamics `q̇ = X(q)` and their flows.

use alloc::vec::Vec;
use core::fmt::Debug;

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{hat, Ambient, Manifold, RotationGroup, Sphere, Tangent};
use crate::ode::{rk4_increment, step_count};

/// A vector field on `M`, given through an ambient extension.
pub trait VectorField<M: Manifold>: Clone + Debug + PartialEq + Send + Sync {
    /// `X(q)`; tangent whenever `q` lies on the manifold.
    fn eval(&self, q: &M::Point) -> M::Point;

    /// Ambient directional derivative `D_qX · w` of the extension.
    fn derivative(&self, q: &M::Point, w: &M::Point) -> M::Point;

    /// Matrix of `D_qX` in the flat (row-major) ambient coordinates.
    fn jacobian_ambient(&self, q: &M::Point) -> DMatrix<f64> {
        let n = M::Point::LEN;
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = M::Point::from_fn(|i| if i == j { 1.0 } else { 0.0 });
            let col = self.derivative(q, &e);
            for i in 0..n {
                jac[(i, j)] = col.get(i);
            }
        }
        jac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphereField {
    /// `X(q) = a × q`, rigid rotation about `a`.
    Rotation { axis: Vector3<f64> },
    /// `X(q) = Aq − (qᵀAq) q`, the tangential part of a linear field.
    LinearProjected { matrix: Matrix3<f64> },
}

impl SphereField {
    pub fn rotation(axis: Vector3<f64>) -> Result<Self> {
        check_axis(&axis)?;
        Ok(SphereField::Rotation { axis })
    }

    pub fn linear_projected(matrix: Matrix3<f64>) -> Result<Self> {
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("field matrix has non-finite entries"));
        }
        Ok(SphereField::LinearProjected { matrix })
    }
}

impl VectorField<Sphere> for SphereField {
    fn eval(&self, q: &Vector3<f64>) -> Vector3<f64> {
        match self {
            SphereField::Rotation { axis } => axis.cross(q),
            SphereField::LinearProjected { matrix } => {
                let aq = matrix * q;
                aq - q * q.dot(&aq)
            }
        }
    }

    fn derivative(&self, q: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
        match self {
            SphereField::Rotation { axis } => axis.cross(w),
            SphereField::LinearProjected { matrix } => {
                let aq = matrix * q;
                let aw = matrix * w;
                aw - q * (w.dot(&aq) + q.dot(&aw)) - w * q.dot(&aq)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationField {
    /// `X(R) = R ξ^`, steady spin about the body axis `ξ`.
    Spin { axis: Vector3<f64> },
}

impl RotationField {
    pub fn spin(axis: Vector3<f64>) -> Result<Self> {
        check_axis(&axis)?;
        Ok(RotationField::Spin { axis })
    }
}

impl VectorField<RotationGroup> for RotationField {
    fn eval(&self, r: &Matrix3<f64>) -> Matrix3<f64> {
        match self {
            RotationField::Spin { axis } => r * hat(axis),
        }
    }

    fn derivative(&self, _r: &Matrix3<f64>, w: &Matrix3<f64>) -> Matrix3<f64> {
        match self {
            RotationField::Spin { axis } => w * hat(axis),
        }
    }
}

fn check_axis(axis: &Vector3<f64>) -> Result<()> {
    if !axis.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("axis has non-finite entries"));
    }
    if (axis.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("axis must be a unit vector"));
    }
    Ok(())
}

/// `X(q)` at a validated point.
pub fn eval_field<M: Manifold>(manifold: &M, field: &M::Field, q: &M::Point) -> Result<Tangent<M::Point>> {
    manifold.check_point(q)?;
    Ok(Tangent {
        base: *q,
        vec: field.eval(q),
    })
}

/// A sampled orbit of the reference field.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory<P> {
    pub times: Vec<f64>,
    pub points: Vec<P>,
}

/// One RK4 step of `q̇ = X(q)` followed by retraction.
pub fn flow_step<M: Manifold>(manifold: &M, field: &M::Field, q: &M::Point, h: f64) -> Result<M::Point> {
    let dq = rk4_increment(q, h, |x| Ok(field.eval(x)))?;
    manifold.retract(&(*q + dq))
}

/// Flow `q0` for the signed time `duration` with steps of at most `dt`.
pub fn flow_point<M: Manifold>(
    manifold: &M,
    field: &M::Field,
    q0: &M::Point,
    duration: f64,
    dt: f64,
) -> Result<M::Point> {
    check_step(dt)?;
    if !duration.is_finite() {
        return Err(Error::invalid("flow duration must be finite"));
    }
    let (n, h) = step_count(duration, dt);
    let mut q = *q0;
    for k in 0..n {
        q = flow_step(manifold, field, &q, h).map_err(|e| e.at_time(k as f64 * h))?;
    }
    Ok(q)
}

/// Flow from `q0` at time `t0` and sample at each of the increasing `times`.
pub fn flow_through<M: Manifold>(
    manifold: &M,
    field: &M::Field,
    q0: &M::Point,
    t0: f64,
    times: &[f64],
    dt: f64,
) -> Result<Vec<M::Point>> {
    let mut out = Vec::with_capacity(times.len());
    let mut q = *q0;
    let mut t = t0;
    for &s in times {
        q = flow_point(manifold, field, &q, s - t, dt).map_err(|e| e.at_time(t))?;
        t = s;
        out.push(q);
    }
    Ok(out)
}

/// Integrate `q̇ = X(q)` on `[0, duration]`, recording every step.
pub fn flow_reference<M: Manifold>(
    manifold: &M,
    field: &M::Field,
    q0: &M::Point,
    duration: f64,
    dt: f64,
) -> Result<ReferenceTrajectory<M::Point>> {
    check_step(dt)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("flow duration must be positive"));
    }
    manifold.check_point(q0)?;
    let (n, h) = step_count(duration, dt);
    let mut times = Vec::with_capacity(n + 1);
    let mut points = Vec::with_capacity(n + 1);
    times.push(0.0);
    points.push(*q0);
    let mut q = *q0;
    for k in 0..n {
        q = flow_step(manifold, field, &q, h).map_err(|e| e.at_time(k as f64 * h))?;
        times.push(if k + 1 == n { duration } else { (k + 1) as f64 * h });
        points.push(q);
    }
    Ok(ReferenceTrajectory { times, points })
}

fn check_step(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("time step must be positive"))
    }
}
