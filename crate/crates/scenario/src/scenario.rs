//! Scenario files: a single JSON object describing the manifold, the
//! reference field, the feedback, the initial conditions and which
//! diagnostics to run.

use std::path::Path;

use naim_core::feedback::Actuation;
use naim_core::geometry::{hat, Ambient, Manifold, RotationGroup, ShapingMetric, Sphere};
use naim_core::integrate::{OpenLoop, SimulationSettings};
use naim_core::{ControlVector, FeedbackConfig, RotationField, SphereField, TangentState, VectorField};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

/// Initial conditions further than this from `TQ` are rejected.
pub const MAX_SNAP_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub manifold: ManifoldSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    pub epsilon: Epsilon,
    #[serde(default)]
    pub actuation: ActuationSpec,
    /// Constant control coefficients; when present the runs are open loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_loop_controls: Option<Vec<Vec<f64>>>,
    pub initial_conditions: Vec<InitialCondition>,
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_record_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Sphere,
    RotationGroup { inertia: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Rotation { axis: [f64; 3] },
    LinearProjected { matrix: [[f64; 3]; 3] },
    Spin { axis: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    SameAsBase,
    ScaledBase {
        scale: f64,
    },
    AmbientQuadratic {
        matrix: [[f64; 3]; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon {
    Single(f64),
    List(Vec<f64>),
}

impl Epsilon {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Epsilon::Single(e) => vec![*e],
            Epsilon::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActuationSpec {
    #[default]
    FullyActuated,
    PoleMasked {
        #[serde(default = "default_mask_radius")]
        mask_radius: f64,
    },
    /// Ambient generators, flattened row-major for `SO(3)`.
    LinearColumns { generators: Vec<Vec<f64>> },
    /// `SO(3)` torque jets `(𝕀⁻¹eᵢ)^` on the listed body axes (0-based).
    RigidBodyJets { torque_axes: Vec<usize> },
}

fn default_mask_radius() -> f64 {
    0.3
}

/// A starting state in ambient coordinates. Give exactly one of `v`
/// (ambient velocity), `omega` (body angular velocity, `SO(3)` only) or
/// `on_graph: true` (start with `v = X(q)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub on_graph: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default)]
    pub sandwich: bool,
    #[serde(default = "default_sandwich_tol")]
    pub sandwich_tol: f64,
    #[serde(default = "default_metric_samples")]
    pub metric_samples: usize,
    #[serde(default)]
    pub phase: bool,
    /// Defaults to the final time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bunching: Option<BunchingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler_oracle: Option<EulerOracleSpec>,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            sandwich: false,
            sandwich_tol: default_sandwich_tol(),
            metric_samples: default_metric_samples(),
            phase: false,
            t_match: None,
            bunching: None,
            euler_oracle: None,
        }
    }
}

fn default_sandwich_tol() -> f64 {
    1e-6
}

fn default_metric_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BunchingSpec {
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_base")]
    pub n_base: usize,
    /// Gain used for the certificates when it differs from the runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_budget")]
    pub naim_budget: f64,
}

fn default_horizons() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}

fn default_k() -> usize {
    3
}

fn default_n_base() -> usize {
    50
}

fn default_fd_step() -> f64 {
    1e-5
}

fn default_budget() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerOracleSpec {
    /// Horizon of the torque-free conservation check.
    #[serde(default = "default_conservation_horizon")]
    pub conservation_horizon: f64,
}

fn default_conservation_horizon() -> f64 {
    10.0
}

impl Scenario {
    /// Parse JSON, reporting the failing field path and position.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                line: inner.line(),
                column: inner.column(),
                field: path,
                message: inner.to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        // Serializing plain data with string keys cannot fail.
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn settings(&self) -> SimulationSettings {
        SimulationSettings {
            t_final: self.t_final,
            dt: self.dt,
            record_every: self.record_every,
            log_accel: false,
        }
    }

    /// Structural checks; numeric checks of components happen when the
    /// scenario is prepared for a manifold.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.epsilon.values().is_empty() {
            return invalid("epsilon list is empty".into());
        }
        if self.initial_conditions.is_empty() {
            return invalid("at least one initial condition is required".into());
        }
        if let Err(e) = self.settings().validate() {
            return invalid(e.to_string());
        }
        if let Some(controls) = &self.open_loop_controls {
            if controls.is_empty() {
                return invalid("open_loop_controls is empty".into());
            }
        }
        if let Some(b) = &self.diagnostics.bunching {
            if b.horizons.is_empty() || b.horizons.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return invalid("bunching horizons must be a non-empty list of positive times".into());
            }
            if b.k < 1 || b.n_base < 1 {
                return invalid("bunching needs k >= 1 and n_base >= 1".into());
            }
        }
        match self.manifold {
            ManifoldSpec::Sphere => {
                self.prepare::<Sphere>()?;
            }
            ManifoldSpec::RotationGroup { .. } => {
                self.prepare::<RotationGroup>()?;
            }
        }
        Ok(())
    }

    pub fn prepare<M: ScenarioManifold>(&self) -> Result<Prepared<M>, ScenarioError> {
        let manifold = M::from_spec(&self.manifold)?;
        let field = manifold.field_from_spec(&self.field)?;
        let shaping = match &self.metric {
            MetricSpec::SameAsBase => ShapingMetric::SameAsBase,
            MetricSpec::ScaledBase { scale } => ShapingMetric::ScaledBase(*scale),
            MetricSpec::AmbientQuadratic { matrix } => ShapingMetric::AmbientQuadratic(matrix3(matrix)),
        };
        let actuation = manifold.actuation_from_spec(&self.actuation)?;
        let configs = self
            .epsilon
            .values()
            .into_iter()
            .map(|eps| FeedbackConfig::new(manifold.clone(), eps, shaping, field.clone(), actuation.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut initial = Vec::with_capacity(self.initial_conditions.len());
        for (i, ic) in self.initial_conditions.iter().enumerate() {
            let context = |e: naim_core::Error| ScenarioError::Invalid(format!("initial condition {i}: {e}"));
            let q = M::Point::from_slice(&ic.q).map_err(context)?;
            let q_snapped = manifold.retract(&q).map_err(context)?;
            let given = [ic.v.is_some(), ic.omega.is_some(), ic.on_graph];
            if given.iter().filter(|&&b| b).count() != 1 {
                return Err(ScenarioError::Invalid(format!(
                    "initial condition {i}: give exactly one of v, omega or on_graph"
                )));
            }
            let v = if let Some(v) = &ic.v {
                M::Point::from_slice(v).map_err(context)?
            } else if let Some(w) = &ic.omega {
                manifold.velocity_from_body(&q_snapped, w).ok_or_else(|| {
                    ScenarioError::Invalid(format!("initial condition {i}: omega is only defined on SO(3)"))
                })?
            } else {
                field.eval(&q_snapped)
            };
            let (state, snap) = TangentState::snap(&manifold, q, v).map_err(context)?;
            if snap > MAX_SNAP_DISTANCE {
                return Err(ScenarioError::Invalid(format!(
                    "initial condition {i} is {snap:.3e} away from the tangent bundle (limit {MAX_SNAP_DISTANCE:e})"
                )));
            }
            initial.push(Snapped { state, distance: snap });
        }
        let open_loop = match &self.open_loop_controls {
            None => None,
            Some(controls) => {
                let Actuation::LinearColumns { generators } = &actuation else {
                    return Err(ScenarioError::Invalid(
                        "open_loop_controls need linear_columns or rigid_body_jets actuation".into(),
                    ));
                };
                Some(
                    controls
                        .iter()
                        .map(|u| {
                            OpenLoop::new(
                                manifold.clone(),
                                generators.clone(),
                                ControlVector { coeffs: u.clone() },
                            )
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
        };
        Ok(Prepared {
            configs,
            initial,
            open_loop,
        })
    }
}

fn matrix3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapped<P> {
    pub state: TangentState<P>,
    pub distance: f64,
}

/// A scenario bound to a concrete manifold.
#[derive(Debug, Clone)]
pub struct Prepared<M: Manifold> {
    /// One configuration per epsilon value.
    pub configs: Vec<FeedbackConfig<M>>,
    pub initial: Vec<Snapped<M::Point>>,
    pub open_loop: Option<Vec<OpenLoop<M>>>,
}

/// Manifold-specific parts of scenario preparation.
pub trait ScenarioManifold: Manifold {
    fn from_spec(spec: &ManifoldSpec) -> Result<Self, ScenarioError>;
    fn field_from_spec(&self, spec: &FieldSpec) -> Result<Self::Field, ScenarioError>;
    fn actuation_from_spec(&self, spec: &ActuationSpec) -> Result<Actuation<Self::Point>, ScenarioError>;
    fn velocity_from_body(&self, _q: &Self::Point, _omega: &[f64; 3]) -> Option<Self::Point> {
        None
    }
}

fn generators_from<P: Ambient>(generators: &[Vec<f64>]) -> Result<Vec<P>, ScenarioError> {
    generators
        .iter()
        .map(|g| P::from_slice(g).map_err(ScenarioError::from))
        .collect()
}

impl ScenarioManifold for Sphere {
    fn from_spec(spec: &ManifoldSpec) -> Result<Self, ScenarioError> {
        match spec {
            ManifoldSpec::Sphere => Ok(Sphere),
            _ => Err(ScenarioError::Invalid("expected the sphere".into())),
        }
    }

    fn field_from_spec(&self, spec: &FieldSpec) -> Result<SphereField, ScenarioError> {
        match spec {
            FieldSpec::Rotation { axis } => Ok(SphereField::rotation(Vector3::from(*axis))?),
            FieldSpec::LinearProjected { matrix } => Ok(SphereField::linear_projected(matrix3(matrix))?),
            FieldSpec::Spin { .. } => Err(ScenarioError::Invalid("spin fields live on SO(3)".into())),
        }
    }

    fn actuation_from_spec(&self, spec: &ActuationSpec) -> Result<Actuation<Vector3<f64>>, ScenarioError> {
        match spec {
            ActuationSpec::FullyActuated => Ok(Actuation::FullyActuated),
            ActuationSpec::PoleMasked { mask_radius } => Ok(Actuation::PoleMasked {
                mask_radius: *mask_radius,
            }),
            ActuationSpec::LinearColumns { generators } => Ok(Actuation::LinearColumns {
                generators: generators_from(generators)?,
            }),
            ActuationSpec::RigidBodyJets { .. } => Err(ScenarioError::Invalid("rigid-body jets live on SO(3)".into())),
        }
    }
}

impl ScenarioManifold for RotationGroup {
    fn from_spec(spec: &ManifoldSpec) -> Result<Self, ScenarioError> {
        match spec {
            ManifoldSpec::RotationGroup { inertia } => Ok(RotationGroup::new(Vector3::from(*inertia))?),
            _ => Err(ScenarioError::Invalid("expected the rotation group".into())),
        }
    }

    fn field_from_spec(&self, spec: &FieldSpec) -> Result<RotationField, ScenarioError> {
        match spec {
            FieldSpec::Spin { axis } => Ok(RotationField::spin(Vector3::from(*axis))?),
            _ => Err(ScenarioError::Invalid("only spin fields live on SO(3)".into())),
        }
    }

    fn actuation_from_spec(&self, spec: &ActuationSpec) -> Result<Actuation<Matrix3<f64>>, ScenarioError> {
        match spec {
            ActuationSpec::FullyActuated => Ok(Actuation::FullyActuated),
            ActuationSpec::LinearColumns { generators } => Ok(Actuation::LinearColumns {
                generators: generators_from(generators)?,
            }),
            ActuationSpec::RigidBodyJets { torque_axes } => Ok(Actuation::rigid_body_jets(self, torque_axes)?),
            ActuationSpec::PoleMasked { .. } => Err(ScenarioError::Invalid("the pole mask lives on S²".into())),
        }
    }

    fn velocity_from_body(&self, q: &Matrix3<f64>, omega: &[f64; 3]) -> Option<Matrix3<f64>> {
        Some(q * hat(&Vector3::from(*omega)))
    }
}
