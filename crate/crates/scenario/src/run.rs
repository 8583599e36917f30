//! Running scenarios: plain simulations, epsilon sweeps and the full
//! diagnostic pass. Everything here is in memory; [`crate::output`] writes
//! the files.

use std::time::Instant;

use naim_core::diagnostics::{
    asymptotic_phase, bunching_certificate, fit_decay_rate, metric_bounds, residual_series, sample_base_points,
    sandwich_check, BunchingReport, CertificateSettings, FrameWeights, MetricBounds,
};
use naim_core::field::flow_through;
use naim_core::geometry::{Ambient, RotationGroup, Sphere};
use naim_core::integrate::{simulate, OpenLoop};
use naim_core::rigid_body::{integrate_euler, BodyState};
use naim_core::{AccelerationLaw, Actuation, ControlVector, FeedbackConfig, Manifold, TangentState, Trajectory};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::error::ScenarioError;
use crate::scenario::{ActuationSpec, BunchingSpec, Epsilon, ManifoldSpec, Prepared, Scenario, ScenarioManifold};

/// Tolerances of the rigid-body cross-check.
pub const EULER_DEVIATION_TOL: f64 = 1e-6;
pub const CONSERVATION_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: naim_core::Error,
    },
}

fn numeric(context: impl Into<String>) -> impl FnOnce(naim_core::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Numeric { context, source }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub index: usize,
    pub initial_condition: usize,
    /// Feedback gain; absent for open-loop runs.
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<f64>>,
    pub snap_distance: f64,
    pub samples: usize,
    pub residual_norm_initial: f64,
    pub residual_norm_min: f64,
    pub residual_norm_max: f64,
    pub residual_norm_final: f64,
    /// Fitted exponential rate of `‖y‖`, closed loop only.
    pub fitted_norm_rate: Option<f64>,
}

/// One trajectory flattened to ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub times: Vec<f64>,
    /// `(q, v)` rows, `2N` columns.
    pub states: Vec<Vec<f64>>,
    /// The orbit of the reference field through the initial point.
    pub reference: Vec<Vec<f64>>,
    pub residual_norm_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub scenario: String,
    /// Ambient dimension `N` of the configuration space.
    pub dimension: usize,
    pub runs: Vec<RunRecord>,
    pub elapsed_seconds: f64,
}

struct Job<'a, M: Manifold> {
    index: usize,
    ic: usize,
    cfg: &'a FeedbackConfig<M>,
    open_loop: Option<&'a OpenLoop<M>>,
    controls: Option<Vec<f64>>,
}

struct TypedRun<M: Manifold> {
    summary: RunSummary,
    cfg: FeedbackConfig<M>,
    traj: Trajectory<M::Point>,
    residual_norm_sq: Vec<f64>,
}

fn jobs<'a, M: Manifold>(s: &Scenario, p: &'a Prepared<M>) -> Vec<Job<'a, M>> {
    let mut out = Vec::new();
    match (&p.open_loop, &s.open_loop_controls) {
        (Some(laws), Some(controls)) => {
            for (law, u) in laws.iter().zip(controls) {
                for ic in 0..p.initial.len() {
                    out.push(Job {
                        index: out.len(),
                        ic,
                        cfg: &p.configs[0],
                        open_loop: Some(law),
                        controls: Some(u.clone()),
                    });
                }
            }
        }
        _ => {
            for cfg in &p.configs {
                for ic in 0..p.initial.len() {
                    out.push(Job {
                        index: out.len(),
                        ic,
                        cfg,
                        open_loop: None,
                        controls: None,
                    });
                }
            }
        }
    }
    out
}

fn run_typed<M: Manifold>(s: &Scenario, p: &Prepared<M>) -> Result<Vec<TypedRun<M>>, RunError> {
    let settings = s.settings();
    jobs(s, p)
        .par_iter()
        .map(|job| {
            let law: &dyn AccelerationLaw<M> = match job.open_loop {
                Some(l) => l,
                None => job.cfg,
            };
            let start = &p.initial[job.ic];
            let traj = simulate(law, &start.state, &settings)
                .map_err(numeric(format!("run {} (initial condition {})", job.index, job.ic)))?;
            let rs = residual_series(job.cfg.manifold(), job.cfg.field(), &traj);
            let norms: Vec<f64> = rs.residual_norm_sq.iter().map(|g| g.sqrt()).collect();
            let fitted_norm_rate = if job.open_loop.is_none() {
                fit_decay_rate(&rs).ok().map(|f| 0.5 * f.rate)
            } else {
                None
            };
            let summary = RunSummary {
                index: job.index,
                initial_condition: job.ic,
                epsilon: job.open_loop.is_none().then(|| job.cfg.epsilon()),
                controls: job.controls.clone(),
                snap_distance: start.distance,
                samples: traj.len(),
                residual_norm_initial: norms[0],
                residual_norm_min: norms.iter().copied().fold(f64::INFINITY, f64::min),
                residual_norm_max: norms.iter().copied().fold(0.0, f64::max),
                residual_norm_final: norms[norms.len() - 1],
                fitted_norm_rate,
            };
            Ok(TypedRun {
                summary,
                cfg: job.cfg.clone(),
                traj,
                residual_norm_sq: rs.residual_norm_sq,
            })
        })
        .collect()
}

fn flatten<M: Manifold>(s: &Scenario, run: TypedRun<M>) -> Result<RunRecord, RunError> {
    let m = run.cfg.manifold();
    let reference = flow_through(m, run.cfg.field(), &run.traj.states[0].q, 0.0, &run.traj.times, s.dt)
        .map_err(numeric(format!("reference orbit of run {}", run.summary.index)))?;
    Ok(RunRecord {
        summary: run.summary,
        states: run.traj.states.iter().map(TangentState::to_flat).collect(),
        reference: reference.iter().map(Ambient::to_vec).collect(),
        times: run.traj.times,
        residual_norm_sq: run.residual_norm_sq,
    })
}

fn simulate_generic<M: ScenarioManifold>(s: &Scenario) -> Result<Vec<RunRecord>, RunError> {
    let p = s.prepare::<M>()?;
    let typed = run_typed(s, &p)?;
    typed.into_par_iter().map(|r| flatten(s, r)).collect()
}

/// Integrate every initial condition (for every epsilon, or every open-loop
/// control).
pub fn simulate_scenario(s: &Scenario) -> Result<SimulationOutput, RunError> {
    let start = Instant::now();
    let (dimension, runs) = match s.manifold {
        ManifoldSpec::Sphere => (3, simulate_generic::<Sphere>(s)?),
        ManifoldSpec::RotationGroup { .. } => (9, simulate_generic::<RotationGroup>(s)?),
    };
    Ok(SimulationOutput {
        scenario: s.name.clone(),
        dimension,
        runs,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsSummary {
    pub c: f64,
    pub big_c: f64,
    pub samples: usize,
}

impl From<MetricBounds> for BoundsSummary {
    fn from(b: MetricBounds) -> Self {
        BoundsSummary {
            c: b.c,
            big_c: b.big_c,
            samples: b.sample_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonResult {
    pub tau: f64,
    pub all_pass: bool,
    pub failures: usize,
    pub max_normal_norm: f64,
    pub min_tangent_conorm: f64,
    pub max_tangent_norm: f64,
    pub min_naim_margin: f64,
    pub min_bunching_margin: f64,
    /// Every stored verdict agrees with the stored norms.
    pub consistent: bool,
}

/// One certificate, flattened for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRow {
    pub tau: f64,
    pub base: usize,
    pub q: Vec<f64>,
    pub tangent_norm: f64,
    pub tangent_conorm: f64,
    pub normal_norm: f64,
    pub min_naim_margin: f64,
    pub min_bunching_margin: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BunchingSummary {
    pub epsilon: f64,
    pub k: usize,
    pub n_base: usize,
    pub horizons: Vec<HorizonResult>,
    /// The first horizon, in the order given, at which every base point passes.
    pub first_passing_horizon: Option<f64>,
    #[serde(skip)]
    pub rows: Vec<CertificateRow>,
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, f64::max)
}

/// Certificates at `spec.n_base` sampled graph points, trying the horizons
/// in order until one passes everywhere.
pub fn certify<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    spec: &BunchingSpec,
    seed: u64,
    dt: f64,
) -> Result<BunchingSummary, RunError> {
    let bases = sample_base_points(cfg, spec.n_base, seed, dt).map_err(numeric("sampling base points"))?;
    let mut out = BunchingSummary {
        epsilon: cfg.epsilon(),
        k: spec.k,
        n_base: spec.n_base,
        horizons: vec![],
        first_passing_horizon: None,
        rows: vec![],
    };
    for &tau in &spec.horizons {
        let settings = CertificateSettings {
            tau,
            k: spec.k,
            dt,
            fd_step: spec.fd_step,
            naim_budget: spec.naim_budget,
            weights: FrameWeights::default(),
        };
        let entries = bases
            .par_iter()
            .map(|b| bunching_certificate(cfg, b, &settings))
            .collect::<Result<Vec<_>, _>>()
            .map_err(numeric(format!("certificate at horizon {tau}")))?;
        let report = BunchingReport::from_entries(entries);
        let e = &report.entries;
        out.horizons.push(HorizonResult {
            tau,
            all_pass: report.all_pass,
            failures: report.failures,
            max_normal_norm: max_of(e.iter().map(|x| x.normal_norm)),
            min_tangent_conorm: min_of(e.iter().map(|x| x.tangent_conorm)),
            max_tangent_norm: max_of(e.iter().map(|x| x.tangent_norm)),
            min_naim_margin: min_of(e.iter().flat_map(|x| x.naim_margin.iter().copied())),
            min_bunching_margin: min_of(e.iter().flat_map(|x| x.bunching_margin.iter().copied())),
            consistent: e.iter().all(|x| x.is_consistent()),
        });
        out.rows.extend(e.iter().enumerate().map(|(i, x)| CertificateRow {
            tau,
            base: i,
            q: x.base.q.to_vec(),
            tangent_norm: x.tangent_norm,
            tangent_conorm: x.tangent_conorm,
            normal_norm: x.normal_norm,
            min_naim_margin: min_of(x.naim_margin.iter().copied()),
            min_bunching_margin: min_of(x.bunching_margin.iter().copied()),
            passes: x.passes(),
        }));
        if report.all_pass {
            out.first_passing_horizon = Some(tau);
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub runs: usize,
    pub fitted_norm_rate_mean: Option<f64>,
    pub fitted_norm_rate_min: Option<f64>,
    pub fitted_norm_rate_max: Option<f64>,
    /// `c/ε` and `C/ε`: the residual norm decays at a rate between these.
    pub predicted_norm_rate_low: f64,
    pub predicted_norm_rate_high: f64,
    pub certificate_pass: Option<bool>,
    pub first_passing_horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub scenario: String,
    pub bounds: BoundsSummary,
    pub rows: Vec<SweepRow>,
    pub certificates: Vec<BunchingSummary>,
    pub elapsed_seconds: f64,
}

fn sweep_generic<M: ScenarioManifold>(s: &Scenario) -> Result<SweepOutput, RunError> {
    let start = Instant::now();
    let p = s.prepare::<M>()?;
    let first = &p.configs[0];
    let bounds = metric_bounds(first.manifold(), first.shaping(), s.diagnostics.metric_samples, s.seed)
        .map_err(numeric("metric bounds"))?;
    let runs = run_typed(s, &p)?;
    let mut rows = Vec::new();
    let mut certificates = Vec::new();
    for cfg in &p.configs {
        let eps = cfg.epsilon();
        let mine: Vec<&TypedRun<M>> = runs.iter().filter(|r| r.summary.epsilon == Some(eps)).collect();
        let rates: Vec<f64> = mine.iter().filter_map(|r| r.summary.fitted_norm_rate).collect();
        let (mean, lo, hi) = if rates.is_empty() {
            (None, None, None)
        } else {
            (
                Some(rates.iter().sum::<f64>() / rates.len() as f64),
                Some(min_of(rates.iter().copied())),
                Some(rates.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            )
        };
        let cert = match &s.diagnostics.bunching {
            Some(spec) => Some(certify(cfg, spec, s.seed, s.dt)?),
            None => None,
        };
        rows.push(SweepRow {
            epsilon: eps,
            runs: mine.len(),
            fitted_norm_rate_mean: mean,
            fitted_norm_rate_min: lo,
            fitted_norm_rate_max: hi,
            predicted_norm_rate_low: bounds.c / eps,
            predicted_norm_rate_high: bounds.big_c / eps,
            certificate_pass: cert.as_ref().map(|c| c.first_passing_horizon.is_some()),
            first_passing_horizon: cert.as_ref().and_then(|c| c.first_passing_horizon),
        });
        certificates.extend(cert);
    }
    Ok(SweepOutput {
        scenario: s.name.clone(),
        bounds: bounds.into(),
        rows,
        certificates,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Closed-loop runs and certificates for each epsilon. `eps` overrides the
/// scenario's own list when given.
pub fn sweep_scenario(s: &Scenario, eps: Option<&[f64]>) -> Result<SweepOutput, RunError> {
    let mut s = s.clone();
    if let Some(e) = eps {
        if e.is_empty() {
            return Err(ScenarioError::Invalid("the epsilon list is empty".into()).into());
        }
        s.epsilon = Epsilon::List(e.to_vec());
    }
    if s.open_loop_controls.is_some() {
        return Err(ScenarioError::Invalid("a sweep needs a closed-loop scenario".into()).into());
    }
    s.validate()?;
    match s.manifold {
        ManifoldSpec::Sphere => sweep_generic::<Sphere>(&s),
        ManifoldSpec::RotationGroup { .. } => sweep_generic::<RotationGroup>(&s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichSummary {
    pub holds: bool,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub t_match: f64,
    pub rate: Option<f64>,
    /// `c/ε`, the slowest guaranteed normal rate.
    pub expected_rate: f64,
    pub relative_error: Option<f64>,
    pub prefactor: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub samples_used: usize,
    pub terminal_separation: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub index: usize,
    pub initial_condition: usize,
    pub epsilon: Option<f64>,
    pub fitted_norm_rate: Option<f64>,
    pub residual_norm_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sandwich: Option<SandwichSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerCase {
    pub initial_condition: usize,
    pub controls: [f64; 2],
    pub max_rotation_deviation: f64,
    pub max_omega_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerSummary {
    pub cases: Vec<EulerCase>,
    pub conservation_horizon: f64,
    /// Torque-free drift of `½Ω·𝕀Ω` and `R𝕀Ω` along the geometric pipeline.
    pub energy_drift_pipeline: f64,
    pub momentum_drift_pipeline: f64,
    /// The same along direct integration of Euler's equations.
    pub energy_drift_euler: f64,
    pub momentum_drift_euler: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsOutput {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_bounds: Option<BoundsSummary>,
    pub runs: Vec<RunDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bunching: Option<BunchingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub euler_oracle: Option<EulerSummary>,
    /// Human-readable reasons the diagnostics did not all pass.
    pub failures: Vec<String>,
    pub passed: bool,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

fn diagnose_generic<M: ScenarioManifold>(s: &Scenario) -> Result<DiagnosticsOutput, RunError> {
    let p = s.prepare::<M>()?;
    let d = &s.diagnostics;
    let first = &p.configs[0];
    let bounds = if d.sandwich || d.phase {
        Some(
            metric_bounds(first.manifold(), first.shaping(), d.metric_samples, s.seed)
                .map_err(numeric("metric bounds"))?,
        )
    } else {
        None
    };
    let closed = p.open_loop.is_none();
    let runs = if closed && (d.sandwich || d.phase) {
        run_typed(s, &p)?
    } else {
        vec![]
    };
    let t_match = d.t_match.unwrap_or(s.t_final);
    let mut failures = Vec::new();
    let diags: Vec<RunDiagnostics> = runs
        .par_iter()
        .map(|r| {
            let eps = r.cfg.epsilon();
            let mb = bounds.expect("bounds are computed whenever runs are");
            let sandwich = d.sandwich.then(|| {
                let rs = naim_core::diagnostics::ResidualSeries {
                    times: r.traj.times.clone(),
                    residual_norm_sq: r.residual_norm_sq.clone(),
                };
                let v = sandwich_check(&rs, eps, &mb, d.sandwich_tol);
                SandwichSummary {
                    holds: v.holds,
                    worst_lower_margin: v.worst_lower_margin,
                    worst_upper_margin: v.worst_upper_margin,
                }
            });
            let (phase, phase_error) = if d.phase {
                match asymptotic_phase(r.cfg.manifold(), r.cfg.field(), &r.traj, t_match, s.dt) {
                    Ok(rep) => {
                        let expected = mb.c / eps;
                        (
                            Some(PhaseSummary {
                                t_match: rep.t_match,
                                rate: rep.rate,
                                expected_rate: expected,
                                relative_error: rep.rate.map(|x| (x - expected).abs() / expected),
                                prefactor: rep.prefactor,
                                fit_window: rep.fit_window,
                                samples_used: rep.samples_used,
                                terminal_separation: rep.terminal_separation,
                                times: rep.times,
                                distances: rep.distances,
                            }),
                            None,
                        )
                    }
                    Err(e) => (None, Some(e.to_string())),
                }
            } else {
                (None, None)
            };
            RunDiagnostics {
                index: r.summary.index,
                initial_condition: r.summary.initial_condition,
                epsilon: r.summary.epsilon,
                fitted_norm_rate: r.summary.fitted_norm_rate,
                residual_norm_min: r.summary.residual_norm_min,
                sandwich,
                phase,
                phase_error,
            }
        })
        .collect();
    for r in &diags {
        if r.sandwich.is_some_and(|v| !v.holds) {
            failures.push(format!("run {}: residual leaves the metric sandwich", r.index));
        }
        if let Some(e) = &r.phase_error {
            failures.push(format!("run {}: asymptotic phase: {e}", r.index));
        }
    }
    let bunching = match &d.bunching {
        Some(spec) => {
            let cfg = match spec.epsilon {
                Some(e) => first.with_epsilon(e).map_err(numeric("certificate gain"))?,
                None => first.clone(),
            };
            let b = certify(&cfg, spec, s.seed, s.dt)?;
            if b.first_passing_horizon.is_none() {
                failures.push(format!(
                    "no horizon in {:?} certifies every base point at epsilon {}",
                    spec.horizons, b.epsilon
                ));
            }
            Some(b)
        }
        None => None,
    };
    Ok(DiagnosticsOutput {
        scenario: s.name.clone(),
        metric_bounds: bounds.map(Into::into),
        runs: diags,
        bunching,
        euler_oracle: None,
        passed: failures.is_empty(),
        failures,
        elapsed_seconds: 0.0,
    })
}

fn body_state(body: &RotationGroup, s: &TangentState<Matrix3<f64>>) -> BodyState {
    BodyState {
        rotation: s.q,
        omega: body.body_velocity(&s.q, &s.v),
    }
}

/// Integrate Euler's equations through the given sample times.
fn euler_through(
    body: &RotationGroup,
    start: &BodyState,
    controls: [f64; 2],
    times: &[f64],
    dt: f64,
) -> Result<Vec<BodyState>, RunError> {
    let mut out = Vec::with_capacity(times.len());
    let mut s = *start;
    let mut t = times[0];
    for &next in times {
        s = integrate_euler(body, &s, controls, next - t, dt).map_err(numeric("Euler equations"))?;
        t = next;
        out.push(s);
    }
    Ok(out)
}

fn drifts(body: &RotationGroup, states: &[BodyState]) -> (f64, f64) {
    let e0 = states[0].kinetic_energy(body);
    let l0 = states[0].spatial_momentum(body);
    states.iter().fold((0.0, 0.0), |(e, l), s| {
        (
            f64::max(e, (s.kinetic_energy(body) - e0).abs()),
            f64::max(l, (s.spatial_momentum(body) - l0).norm()),
        )
    })
}

/// Compare the geometric pipeline on `SO(3)` with direct integration of
/// Euler's equations, and check torque-free conservation laws.
pub fn euler_oracle(s: &Scenario) -> Result<EulerSummary, RunError> {
    let Some(spec) = &s.diagnostics.euler_oracle else {
        return Err(ScenarioError::Invalid("the scenario has no euler_oracle block".into()).into());
    };
    if s.actuation
        != (ActuationSpec::RigidBodyJets {
            torque_axes: vec![0, 1],
        })
    {
        return Err(ScenarioError::Invalid("the Euler cross-check needs jets on body axes 0 and 1".into()).into());
    }
    let p = s.prepare::<RotationGroup>()?;
    let body = *p.configs[0].manifold();
    let Actuation::LinearColumns { generators } = p.configs[0].actuation() else {
        unreachable!("jets are linear columns")
    };
    let controls: Vec<[f64; 2]> = s
        .open_loop_controls
        .clone()
        .unwrap_or_else(|| vec![vec![0.0, 0.0]])
        .iter()
        .map(|u| [u[0], u[1]])
        .collect();
    let settings = s.settings();
    let mut cases = Vec::new();
    for u in &controls {
        let law = OpenLoop::new(body, generators.clone(), ControlVector { coeffs: u.to_vec() })
            .map_err(numeric("open-loop law"))?;
        let per_ic = p
            .initial
            .par_iter()
            .enumerate()
            .map(|(i, ic)| {
                let traj = simulate(&law, &ic.state, &settings).map_err(numeric(format!("pipeline run {i}")))?;
                let direct = euler_through(&body, &body_state(&body, &ic.state), *u, &traj.times, s.dt)?;
                let (mut dr, mut dw) = (0.0f64, 0.0f64);
                for (a, b) in traj.states.iter().zip(&direct) {
                    let a = body_state(&body, a);
                    dr = dr.max((a.rotation - b.rotation).norm());
                    dw = dw.max((a.omega - b.omega).norm());
                }
                Ok(EulerCase {
                    initial_condition: i,
                    controls: *u,
                    max_rotation_deviation: dr,
                    max_omega_deviation: dw,
                })
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        cases.extend(per_ic);
    }

    let free = OpenLoop::new(body, generators.clone(), ControlVector { coeffs: vec![0.0, 0.0] })
        .map_err(numeric("open-loop law"))?;
    let horizon = naim_core::SimulationSettings {
        t_final: spec.conservation_horizon,
        ..settings
    };
    let mut worst = [0.0f64; 4];
    for (i, ic) in p.initial.iter().enumerate() {
        let traj = simulate(&free, &ic.state, &horizon).map_err(numeric(format!("torque-free run {i}")))?;
        let pipeline: Vec<BodyState> = traj.states.iter().map(|x| body_state(&body, x)).collect();
        let direct = euler_through(&body, &pipeline[0], [0.0, 0.0], &traj.times, s.dt)?;
        let (ep, lp) = drifts(&body, &pipeline);
        let (ee, le) = drifts(&body, &direct);
        for (w, x) in worst.iter_mut().zip([ep, lp, ee, le]) {
            *w = w.max(x);
        }
    }
    let passed = cases
        .iter()
        .all(|c| c.max_rotation_deviation < EULER_DEVIATION_TOL && c.max_omega_deviation < EULER_DEVIATION_TOL)
        && worst.iter().all(|&w| w < CONSERVATION_TOL);
    Ok(EulerSummary {
        cases,
        conservation_horizon: spec.conservation_horizon,
        energy_drift_pipeline: worst[0],
        momentum_drift_pipeline: worst[1],
        energy_drift_euler: worst[2],
        momentum_drift_euler: worst[3],
        passed,
    })
}

/// Run every diagnostic the scenario asks for.
pub fn diagnose_scenario(s: &Scenario) -> Result<DiagnosticsOutput, RunError> {
    let start = Instant::now();
    if matches!(s.manifold, ManifoldSpec::Sphere) && s.diagnostics.euler_oracle.is_some() {
        return Err(ScenarioError::Invalid("the Euler cross-check only applies on SO(3)".into()).into());
    }
    let mut out = match s.manifold {
        ManifoldSpec::Sphere => diagnose_generic::<Sphere>(s)?,
        ManifoldSpec::RotationGroup { .. } => {
            let mut out = diagnose_generic::<RotationGroup>(s)?;
            if s.diagnostics.euler_oracle.is_some() {
                let e = euler_oracle(s)?;
                if !e.passed {
                    out.failures
                        .push("the geometric pipeline disagrees with Euler's equations".to_string());
                }
                out.euler_oracle = Some(e);
            }
            out
        }
    };
    out.passed = out.failures.is_empty();
    out.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// `Ω` of a flat `(R, V)` row as written to trajectory files.
pub fn body_omega(body: &RotationGroup, row: &[f64]) -> Option<Vector3<f64>> {
    let s = TangentState::<Matrix3<f64>>::from_flat(row).ok()?;
    Some(body.body_velocity(&s.q, &s.v))
}
