//! Time stepping of second-order systems on `TQ` and numerical monodromy.

use alloc::vec::Vec;
use core::ops::{Add, Mul};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::feedback::{ControlVector, FeedbackConfig};
use crate::field::VectorField;
use crate::geometry::{gram_schmidt, Ambient, Manifold};
use crate::ode::{rk4_increment, step_count};

/// A point of `TQ` in ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentState<P> {
    pub q: P,
    pub v: P,
}

impl<P: Ambient> TangentState<P> {
    pub fn new<M: Manifold<Point = P>>(manifold: &M, q: P, v: P) -> Result<Self> {
        manifold.check_point(&q)?;
        manifold.check_tangent(&q, &v)?;
        Ok(TangentState { q, v })
    }

    /// Retract `q` and project `v` onto the new tangent space. Returns the
    /// snapped state and the ambient distance it moved.
    pub fn snap<M: Manifold<Point = P>>(manifold: &M, q: P, v: P) -> Result<(Self, f64)> {
        if !(q.is_finite() && v.is_finite()) {
            return Err(Error::invalid("state has non-finite entries"));
        }
        let qs = manifold.retract(&q)?;
        let vs = manifold.project(&qs, &v);
        let dist = libm::sqrt((qs - q).norm_sq() + (vs - v).norm_sq());
        Ok((TangentState { q: qs, v: vs }, dist))
    }

    /// The state as a flat `2N` vector `(q, v)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.q.to_vec();
        out.extend(self.v.to_vec());
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != 2 * P::LEN {
            return Err(Error::Dimension {
                expected: 2 * P::LEN,
                found: values.len(),
            });
        }
        Ok(TangentState {
            q: P::from_slice(&values[..P::LEN])?,
            v: P::from_slice(&values[P::LEN..])?,
        })
    }
}

#[derive(Clone, Copy)]
struct Phase<P>(P, P);

impl<P: Ambient> Add for Phase<P> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Phase(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl<P: Ambient> Mul<f64> for Phase<P> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Phase(self.0 * rhs, self.1 * rhs)
    }
}

/// A second-order system `q̈ = geodesic acceleration + control acceleration`.
pub trait AccelerationLaw<M: Manifold>: Sync {
    fn manifold(&self) -> &M;

    /// The tangent (control) part of the ambient acceleration at `(q, v)`.
    fn control_accel(&self, q: &M::Point, v: &M::Point) -> Result<M::Point>;
}

/// Free motion along geodesics.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic<M> {
    pub manifold: M,
}

impl<M: Manifold> AccelerationLaw<M> for Geodesic<M> {
    fn manifold(&self) -> &M {
        &self.manifold
    }

    fn control_accel(&self, _q: &M::Point, _v: &M::Point) -> Result<M::Point> {
        Ok(M::Point::zero())
    }
}

/// Constant coefficients on control columns, no feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop<M: Manifold> {
    pub manifold: M,
    pub generators: Vec<M::Point>,
    pub controls: ControlVector,
}

impl<M: Manifold> OpenLoop<M> {
    pub fn new(manifold: M, generators: Vec<M::Point>, controls: ControlVector) -> Result<Self> {
        if generators.len() != controls.coeffs.len() {
            return Err(Error::Dimension {
                expected: generators.len(),
                found: controls.coeffs.len(),
            });
        }
        if !controls.coeffs.iter().all(|u| u.is_finite()) {
            return Err(Error::invalid("control coefficients must be finite"));
        }
        Ok(OpenLoop {
            manifold,
            generators,
            controls,
        })
    }
}

impl<M: Manifold> AccelerationLaw<M> for OpenLoop<M> {
    fn manifold(&self) -> &M {
        &self.manifold
    }

    fn control_accel(&self, q: &M::Point, _v: &M::Point) -> Result<M::Point> {
        Ok(self
            .controls
            .combine(&self.manifold.control_columns(q, &self.generators)))
    }
}

/// `(q̇, v̇)` of the closed loop at a (possibly slightly off-manifold) state.
pub fn closed_loop_rhs<M: Manifold, L: AccelerationLaw<M> + ?Sized>(
    law: &L,
    q: &M::Point,
    v: &M::Point,
) -> Result<(M::Point, M::Point)> {
    let m = law.manifold();
    let a = m.geodesic_acceleration(q, v) + law.control_accel(q, v)?;
    Ok((*v, a))
}

/// One RK4 step in ambient coordinates, without reprojection.
pub fn step_unprojected<M: Manifold, L: AccelerationLaw<M> + ?Sized>(
    law: &L,
    state: &TangentState<M::Point>,
    dt: f64,
) -> Result<TangentState<M::Point>> {
    let y = Phase(state.q, state.v);
    let d = rk4_increment(&y, dt, |p| {
        let (dq, dv) = closed_loop_rhs(law, &p.0, &p.1)?;
        Ok(Phase(dq, dv))
    })?;
    let out = y + d;
    if !(out.0.is_finite() && out.1.is_finite()) {
        return Err(Error::invalid("non-finite state after step"));
    }
    Ok(TangentState { q: out.0, v: out.1 })
}

/// One RK4 step followed by reprojection onto `TQ`.
pub fn step<M: Manifold, L: AccelerationLaw<M> + ?Sized>(
    law: &L,
    state: &TangentState<M::Point>,
    dt: f64,
) -> Result<TangentState<M::Point>> {
    let raw = step_unprojected(law, state, dt)?;
    let (q, v) = law.manifold().reproject(&raw.q, &raw.v).map_err(|e| match e {
        Error::RetractionDomain { .. } => Error::RetractionDomain {
            detail: "step left the retraction neighbourhood; halve dt",
        },
        other => other,
    })?;
    Ok(TangentState { q, v })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub t_final: f64,
    pub dt: f64,
    /// Record every n-th step (the final step is always recorded).
    pub record_every: usize,
    /// Also record the control acceleration at every recorded state.
    pub log_accel: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            t_final: 10.0,
            dt: 1e-3,
            record_every: 10,
            log_accel: false,
        }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::invalid("final time must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<P> {
    pub times: Vec<f64>,
    pub states: Vec<TangentState<P>>,
    pub accel_log: Option<Vec<P>>,
}

impl<P> Trajectory<P> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&TangentState<P>> {
        self.states.last()
    }
}

pub fn simulate<M: Manifold, L: AccelerationLaw<M> + ?Sized>(
    law: &L,
    initial: &TangentState<M::Point>,
    settings: &SimulationSettings,
) -> Result<Trajectory<M::Point>> {
    settings.validate()?;
    let m = law.manifold();
    m.check_point(&initial.q)?;
    m.check_tangent(&initial.q, &initial.v)?;
    let (n, h) = step_count(settings.t_final, settings.dt);
    let cap = n / settings.record_every + 2;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    let mut accel = settings.log_accel.then(|| Vec::with_capacity(cap));
    let mut record = |t: f64, s: &TangentState<M::Point>| -> Result<()> {
        times.push(t);
        states.push(*s);
        if let Some(log) = accel.as_mut() {
            log.push(law.control_accel(&s.q, &s.v)?);
        }
        Ok(())
    };
    let mut s = *initial;
    record(0.0, &s)?;
    for k in 1..=n {
        let t_prev = (k - 1) as f64 * h;
        s = step(law, &s, h).map_err(|e| e.at_time(t_prev))?;
        if k == n {
            record(settings.t_final, &s)?;
        } else if k % settings.record_every == 0 {
            record(k as f64 * h, &s)?;
        }
    }
    Ok(Trajectory {
        times,
        states,
        accel_log: accel,
    })
}

/// Final state after flowing for `duration` (no recording).
pub fn flow_state<M: Manifold, L: AccelerationLaw<M> + ?Sized>(
    law: &L,
    initial: &TangentState<M::Point>,
    duration: f64,
    dt: f64,
) -> Result<TangentState<M::Point>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid("flow duration must be non-negative"));
    }
    let (n, h) = step_count(duration, dt);
    let mut s = *initial;
    for k in 0..n {
        s = step(law, &s, h).map_err(|e| e.at_time(k as f64 * h))?;
    }
    Ok(s)
}

/// Finite-difference linearization of the time-`τ` flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy<P> {
    pub base_state: TangentState<P>,
    pub image_state: TangentState<P>,
    pub horizon: f64,
    /// `2N × 2N` map in the flat `(q, v)` ambient coordinates.
    pub matrix: DMatrix<f64>,
}

/// Basis of `T_{(q,v)}(TQ)`: for each frame vector `e` the pair
/// `(e, d/ds P_{c(s)} v)` along `c(s) = retract(q + s e)`, then the vertical
/// pairs `(0, e)`.
pub fn tangent_bundle_basis<M: Manifold>(
    manifold: &M,
    state: &TangentState<M::Point>,
) -> Result<Vec<(M::Point, M::Point)>> {
    const H: f64 = 1e-6;
    let frame = manifold.frame(&state.q);
    let mut basis = Vec::with_capacity(2 * frame.len());
    for e in &frame {
        let qp = manifold.retract(&(state.q + *e * H))?;
        let qm = manifold.retract(&(state.q - *e * H))?;
        let dv = (manifold.project(&qp, &state.v) - manifold.project(&qm, &state.v)) * (0.5 / H);
        basis.push((*e, dv));
    }
    for e in &frame {
        basis.push((M::Point::zero(), *e));
    }
    Ok(basis)
}

impl<P: Ambient> Monodromy<P> {
    /// Largest relative distance of a column image from `T(TQ)` at the
    /// image state.
    pub fn tangency_defect<M: Manifold<Point = P>>(&self, manifold: &M) -> Result<f64> {
        let basis: Vec<DVector<f64>> = tangent_bundle_basis(manifold, &self.image_state)?
            .iter()
            .map(|(a, b)| DVector::from_vec(TangentState { q: *a, v: *b }.to_flat()))
            .collect();
        let ortho = gram_schmidt(&basis, |a, b| a.dot(b), 1e-12);
        let mut worst = 0.0f64;
        for col in self.matrix.column_iter() {
            let mut rem = col.clone_owned();
            for b in &ortho {
                rem -= b * b.dot(&rem);
            }
            worst = worst.max(rem.norm() / col.norm().max(1.0));
        }
        Ok(worst)
    }
}

/// Monodromy of the closed loop at a base state on the graph of `X`.
pub fn monodromy<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    base: &TangentState<M::Point>,
    tau: f64,
    dt: f64,
    fd_step: f64,
) -> Result<Monodromy<M::Point>> {
    let m = cfg.manifold();
    m.check_point(&base.q)?;
    let y = base.v - cfg.field().eval(&base.q);
    let residual = m.norm(&base.q, &y);
    if !(residual < 1e-9) {
        return Err(Error::OffGraph { residual });
    }
    monodromy_unchecked(cfg, base, tau, dt, fd_step)
}

/// Monodromy of any law at any valid state.
pub fn monodromy_unchecked<M: Manifold, L: AccelerationLaw<M> + ?Sized>(
    law: &L,
    base: &TangentState<M::Point>,
    tau: f64,
    dt: f64,
    fd_step: f64,
) -> Result<Monodromy<M::Point>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("monodromy horizon must be positive"));
    }
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let m = law.manifold();
    let n = M::Point::LEN;
    let flat = base.to_flat();
    let image = flow_state(law, base, tau, dt)?;
    let mut matrix = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        let mut ends = [TangentState {
            q: M::Point::zero(),
            v: M::Point::zero(),
        }; 2];
        for (slot, sign) in [(0usize, 1.0f64), (1, -1.0)] {
            let mut x = flat.clone();
            x[j] += sign * fd_step;
            let raw = TangentState::<M::Point>::from_flat(&x)?;
            let (q, v) = m.reproject(&raw.q, &raw.v)?;
            ends[slot] = flow_state(law, &TangentState { q, v }, tau, dt)?;
        }
        let plus = ends[0].to_flat();
        let minus = ends[1].to_flat();
        for i in 0..2 * n {
            matrix[(i, j)] = (plus[i] - minus[i]) / (2.0 * fd_step);
        }
    }
    Ok(Monodromy {
        base_state: *base,
        image_state: image,
        horizon: tau,
        matrix,
    })
}
