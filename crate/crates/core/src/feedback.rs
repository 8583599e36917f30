//! Actuation models, the Koditschek desired acceleration and the
//! pseudoinverse feedback that realizes it.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{hat, Ambient, Manifold, ManifoldKind, RotationGroup, ShapingMetric, Tangent};
use crate::integrate::{AccelerationLaw, TangentState};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Which accelerations the plant can produce.
#[derive(Debug, Clone, PartialEq)]
pub enum Actuation<P> {
    /// Every tangent acceleration is available.
    FullyActuated,
    /// Accelerations `Σ uⱼ Fⱼ(q)` with columns generated from fixed ambient
    /// data by [`Manifold::control_columns`].
    LinearColumns { generators: Vec<P> },
    /// Sphere only: within geodesic distance `mask_radius` of `(0, 0, ±1)`
    /// the first ambient component of the acceleration must vanish.
    PoleMasked { mask_radius: f64 },
}

impl Actuation<nalgebra::Matrix3<f64>> {
    /// The rigid-body control jets `R(𝕀⁻¹eᵢ)^` for the given body axes.
    pub fn rigid_body_jets(body: &RotationGroup, axes: &[usize]) -> Result<Self> {
        let generators = axes
            .iter()
            .map(|&i| {
                if i < 3 {
                    Ok(hat(&body.inertia_solve(&Vector3::ith(i, 1.0))))
                } else {
                    Err(Error::invalid(format!("torque axis index {i} out of range")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Actuation::LinearColumns { generators })
    }
}

/// Coefficients `u` of a [`Actuation::LinearColumns`] model.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    pub coeffs: Vec<f64>,
}

impl ControlVector {
    pub fn combine<P: Ambient>(&self, columns: &[P]) -> P {
        self.coeffs
            .iter()
            .zip(columns)
            .fold(P::zero(), |acc, (u, c)| acc + *c * *u)
    }
}

/// Gain, shaping metric, reference field and actuation of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackConfig<M: Manifold> {
    manifold: M,
    epsilon: f64,
    shaping: ShapingMetric,
    field: M::Field,
    actuation: Actuation<M::Point>,
}

impl<M: Manifold> FeedbackConfig<M> {
    pub fn new(
        manifold: M,
        epsilon: f64,
        shaping: ShapingMetric,
        field: M::Field,
        actuation: Actuation<M::Point>,
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        shaping.validate(&manifold)?;
        match &actuation {
            Actuation::FullyActuated => {}
            Actuation::LinearColumns { generators } => {
                if generators.is_empty() {
                    return Err(Error::invalid("at least one control column is required"));
                }
                if !generators.iter().all(Ambient::is_finite) {
                    return Err(Error::invalid("control generators have non-finite entries"));
                }
            }
            Actuation::PoleMasked { mask_radius } => {
                if M::KIND != ManifoldKind::SphereS2 {
                    return Err(Error::invalid("the pole mask is only defined on the sphere"));
                }
                if !(*mask_radius > 0.0 && *mask_radius < 1.0) {
                    return Err(Error::invalid("mask radius must lie in (0, 1)"));
                }
            }
        }
        Ok(FeedbackConfig {
            manifold,
            epsilon,
            shaping,
            field,
            actuation,
        })
    }

    pub fn manifold(&self) -> &M {
        &self.manifold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn shaping(&self) -> &ShapingMetric {
        &self.shaping
    }

    pub fn field(&self) -> &M::Field {
        &self.field
    }

    pub fn actuation(&self) -> &Actuation<M::Point> {
        &self.actuation
    }

    /// Same configuration with another gain.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(
            self.manifold.clone(),
            epsilon,
            self.shaping,
            self.field.clone(),
            self.actuation.clone(),
        )
    }

    /// `y = v − X(q)`.
    pub fn residual(&self, q: &M::Point, v: &M::Point) -> M::Point {
        *v - self.field.eval(q)
    }

    /// `∇_v X`.
    pub fn connection_term(&self, q: &M::Point, v: &M::Point) -> M::Point {
        let x = self.field.eval(q);
        let dx = self.field.derivative(q, v);
        self.manifold.connection(q, v, &x, &dx)
    }

    /// `G(v) = ∇_v X − ε⁻¹ g♯g̃♭(v − X(q))`, unvalidated.
    pub fn desired_accel(&self, q: &M::Point, v: &M::Point) -> M::Point {
        let y = self.residual(q, v);
        let damping = self.shaping.sharp_flat(&self.manifold, q, &y);
        self.connection_term(q, v) - damping * (1.0 / self.epsilon)
    }

    /// What the actuators actually deliver when asked for [`Self::desired_accel`].
    pub fn realized(&self, q: &M::Point, v: &M::Point) -> Result<M::Point> {
        let desired = self.desired_accel(q, v);
        match &self.actuation {
            Actuation::FullyActuated => Ok(desired),
            Actuation::LinearColumns { generators } => {
                let cols = self.manifold.control_columns(q, generators);
                let (u, _) = least_squares(&self.manifold, q, &cols, &desired)?;
                Ok(u.combine(&cols))
            }
            Actuation::PoleMasked { mask_radius } => match self.manifold.pole_mask_direction(q, *mask_radius) {
                Some(d) => {
                    let c = self.manifold.metric(q, &desired, &d) / self.manifold.metric(q, &d, &d);
                    Ok(d * c)
                }
                None => Ok(desired),
            },
        }
    }
}

impl<M: Manifold> AccelerationLaw<M> for FeedbackConfig<M> {
    fn manifold(&self) -> &M {
        &self.manifold
    }

    fn control_accel(&self, q: &M::Point, v: &M::Point) -> Result<M::Point> {
        self.realized(q, v)
    }
}

/// The Koditschek desired acceleration at a valid state.
pub fn koditschek_desired_accel<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    state: &TangentState<M::Point>,
) -> Tangent<M::Point> {
    Tangent {
        base: state.q,
        vec: cfg.desired_accel(&state.q, &state.v),
    }
}

/// The acceleration realized by the actuation model at a valid state.
pub fn realized_accel<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    state: &TangentState<M::Point>,
) -> Result<Tangent<M::Point>> {
    Ok(Tangent {
        base: state.q,
        vec: cfg.realized(&state.q, &state.v)?,
    })
}

/// Minimum-norm least-squares coefficients for `Σ uⱼ cⱼ ≈ target` in the
/// metric `g`, together with the `g`-norm of the residual.
///
/// Fails with [`Error::RankDeficient`] when the numerical rank of the column
/// map is below `min(m, dim Q)`.
pub fn least_squares<M: Manifold>(
    manifold: &M,
    q: &M::Point,
    columns: &[M::Point],
    target: &M::Point,
) -> Result<(ControlVector, f64)> {
    let frame = manifold.frame(q);
    let n = frame.len();
    let m = columns.len();
    if m == 0 {
        return Err(Error::RankDeficient { rank: 0 });
    }
    let f = DMatrix::from_fn(n, m, |i, j| manifold.metric(q, &frame[i], &columns[j]));
    let t = DVector::from_fn(n, |i, _| manifold.metric(q, &frame[i], target));
    if !f.iter().chain(t.iter()).all(|x| x.is_finite()) {
        return Err(Error::invalid("non-finite control columns or target"));
    }
    let sv = f.singular_values();
    let smax = sv.max();
    let cutoff = RANK_CUTOFF * smax;
    let rank = if smax > 0.0 {
        sv.iter().filter(|&&s| s > cutoff).count()
    } else {
        0
    };
    if rank < m.min(n) {
        return Err(Error::RankDeficient { rank });
    }
    // Full rank, so the pseudoinverse comes from a QR factorization. The
    // singular vectors are avoided: they lose accuracy when singular values
    // cluster.
    let coeffs = if m >= n {
        let qr = f.transpose().qr();
        let z = qr
            .r()
            .transpose()
            .solve_lower_triangular(&t)
            .ok_or(Error::RankDeficient { rank })?;
        qr.q() * z
    } else {
        let qr = f.clone().qr();
        let rhs = qr.q().transpose() * &t;
        qr.r()
            .solve_upper_triangular(&rhs)
            .ok_or(Error::RankDeficient { rank })?
    };
    let residual = (&f * &coeffs - &t).norm();
    Ok((
        ControlVector {
            coeffs: coeffs.iter().copied().collect(),
        },
        residual,
    ))
}

/// Moore-Penrose feedback `u = F*(FF*)⁻¹ target`; the target must lie in the
/// span of the columns.
pub fn pseudoinverse_feedback<M: Manifold>(
    manifold: &M,
    columns: &[Tangent<M::Point>],
    target: &Tangent<M::Point>,
) -> Result<ControlVector> {
    for c in columns {
        c.same_base(target)?;
    }
    let cols: Vec<M::Point> = columns.iter().map(|c| c.vec).collect();
    let (u, residual) = least_squares(manifold, &target.base, &cols, &target.vec)?;
    let scale = manifold.norm(&target.base, &target.vec).max(1.0);
    if residual > RANK_CUTOFF * scale {
        return Err(Error::Infeasible { residual });
    }
    Ok(u)
}
