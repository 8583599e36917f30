//! End-to-end acceptance checks on the bundled scenarios. Prints one line
//! per criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use naim_core::feedback::{koditschek_desired_accel, pseudoinverse_feedback};
use naim_core::geometry::{Ambient, Manifold, RotationGroup, Sphere, Tangent};
use naim_core::rng::{seeded, unit_interval};
use naim_core::TangentState;
use naim_scenario::bundled;
use naim_scenario::run::{diagnose_scenario, simulate_scenario};
use naim_scenario::scenario::{
    ActuationSpec, DiagnosticsSpec, Epsilon, FieldSpec, InitialCondition, MetricSpec, Scenario,
};
use nalgebra::{DMatrix, DVector, Vector3};

type Verdict = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Verdict);

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn load(name: &str) -> Result<Scenario, String> {
    bundled(name).map_err(err)
}

/// Residual of a flat sphere state against the rotation field about `e3`.
fn sphere_residual(row: &[f64]) -> f64 {
    let q = Vector3::new(row[0], row[1], row[2]);
    let v = Vector3::new(row[3], row[4], row[5]);
    (v - Vector3::z().cross(&q)).norm()
}

fn exact_decay() -> Verdict {
    let base = load("sweep_demo")?;
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for eps in [0.5, 1.2, 2.0] {
        let mut s = base.clone();
        s.epsilon = Epsilon::Single(eps);
        s.diagnostics = DiagnosticsSpec::default();
        let start = Instant::now();
        let out = simulate_scenario(&s).map_err(err)?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        for run in &out.runs {
            let g0 = run.residual_norm_sq[0];
            for (&t, &g) in run.times.iter().zip(&run.residual_norm_sq) {
                let predicted = (-2.0 * t / eps).exp() * g0;
                worst = worst.max((g / predicted - 1.0).abs());
            }
        }
    }
    Ok((
        worst < 1e-6 && slowest < 5.0,
        format!("max relative error {worst:.2e} (< 1e-6), slowest gain {slowest:.2} s (< 5 s)"),
    ))
}

fn random_sphere_conditions(n: usize, seed: u64) -> Vec<InitialCondition> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let q = Sphere.sample_point(&mut rng);
            let w = Vector3::from_fn(|_, _| 4.0 * unit_interval(&mut rng) - 2.0);
            let v = w - q * w.dot(&q);
            InitialCondition {
                q: q.to_vec(),
                v: Some(v.to_vec()),
                omega: None,
                on_graph: false,
            }
        })
        .collect()
}

fn sandwich() -> Verdict {
    let mut s = load("fig1")?;
    s.metric = MetricSpec::AmbientQuadratic {
        matrix: [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]],
    };
    s.initial_conditions = random_sphere_conditions(5, 17);
    s.t_final = 10.0;
    s.diagnostics = DiagnosticsSpec {
        sandwich: true,
        ..DiagnosticsSpec::default()
    };
    let out = diagnose_scenario(&s).map_err(err)?;
    let b = out.metric_bounds.ok_or("no metric bounds")?;
    // On tangent planes of S², diag(1,2,3) ranges over [1, 3].
    let bounds_ok = b.c >= 1.0 && b.c < 1.0 + 1e-3 && b.big_c <= 3.0 && b.big_c > 3.0 - 1e-3;
    let verdicts: Vec<_> = out.runs.iter().filter_map(|r| r.sandwich).collect();
    let holds = verdicts.len() == 5 && verdicts.iter().all(|v| v.holds);
    let lower = verdicts
        .iter()
        .map(|v| v.worst_lower_margin)
        .fold(f64::INFINITY, f64::min);
    let upper = verdicts
        .iter()
        .map(|v| v.worst_upper_margin)
        .fold(f64::INFINITY, f64::min);
    Ok((
        holds && bounds_ok,
        format!(
            "c = {:.6}, C = {:.6}; {} of 5 runs inside, worst margins {lower:.2e} / {upper:.2e} (>= -1e-6)",
            b.c,
            b.big_c,
            verdicts.iter().filter(|v| v.holds).count()
        ),
    ))
}

fn phase() -> Verdict {
    let mut s = load("fig1")?;
    s.diagnostics = DiagnosticsSpec {
        phase: true,
        ..DiagnosticsSpec::default()
    };
    let out = diagnose_scenario(&s).map_err(err)?;
    let target = 1.0 / 1.2;
    let mut worst_rate = 0.0f64;
    let mut worst_sep = 0.0f64;
    let mut ok = out.runs.len() == 6;
    for r in &out.runs {
        let Some(p) = &r.phase else {
            return Ok((
                false,
                format!("run {}: {}", r.index, r.phase_error.clone().unwrap_or_default()),
            ));
        };
        let Some(rate) = p.rate else {
            return Ok((false, format!("run {}: no fitted rate", r.index)));
        };
        let rel = (rate - target).abs() / target;
        worst_rate = worst_rate.max(rel);
        worst_sep = worst_sep.max(p.terminal_separation);
        ok &= rel < 0.05 && p.terminal_separation < 1e-8;
    }
    Ok((
        ok,
        format!(
            "6 runs, worst rate error {:.2}% (< 5%), terminal separation {worst_sep:.1e} (< 1e-8)",
            100.0 * worst_rate
        ),
    ))
}

fn invariance() -> Verdict {
    let mut s = load("fig1")?;
    for ic in &mut s.initial_conditions {
        ic.v = None;
        ic.on_graph = true;
    }
    s.t_final = 10.0;
    s.diagnostics = DiagnosticsSpec::default();
    let out = simulate_scenario(&s).map_err(err)?;
    let sup = out
        .runs
        .iter()
        .flat_map(|r| r.states.iter().map(|row| sphere_residual(row)))
        .fold(0.0, f64::max);
    Ok((sup < 1e-6, format!("sup |v - X(q)| = {sup:.2e} over 6 runs (< 1e-6)")))
}

fn so3_oracle() -> Verdict {
    let s = load("so3_covariant_oracle")?;
    let out = diagnose_scenario(&s).map_err(err)?;
    let e = out.euler_oracle.ok_or("no Euler report")?;
    let dev = e
        .cases
        .iter()
        .map(|c| c.max_rotation_deviation.max(c.max_omega_deviation))
        .fold(0.0, f64::max);
    let drift = [
        e.energy_drift_pipeline,
        e.momentum_drift_pipeline,
        e.energy_drift_euler,
        e.momentum_drift_euler,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let controls_seen =
        e.cases.iter().any(|c| c.controls == [0.0, 0.0]) && e.cases.iter().any(|c| c.controls == [0.1, -0.2]);
    Ok((
        dev < 1e-6 && drift < 1e-7 && controls_seen,
        format!(
            "{} cases, max state difference {dev:.2e} (< 1e-6), energy/momentum drift {drift:.2e} (< 1e-7)",
            e.cases.len()
        ),
    ))
}

fn bunching() -> Verdict {
    let fig1 = load("fig1")?;
    let mut s = fig1.clone();
    s.diagnostics.sandwich = false;
    s.diagnostics.phase = false;
    let spec = s.diagnostics.bunching.clone().ok_or("fig1 has no bunching block")?;
    if spec.epsilon != Some(0.1) || spec.horizons != [1.0] || spec.k != 3 || spec.n_base != 50 {
        return Ok((false, format!("unexpected certificate settings {spec:?}")));
    }
    let main = diagnose_scenario(&s).map_err(err)?.bunching.ok_or("no report")?;
    let h = &main.horizons[0];
    let main_ok = main.first_passing_horizon == Some(1.0) && h.failures == 0 && h.consistent;

    let mut tiny = s.clone();
    if let Some(b) = tiny.diagnostics.bunching.as_mut() {
        b.horizons = vec![1e-3];
    }
    let tiny = diagnose_scenario(&tiny).map_err(err)?.bunching.ok_or("no report")?;
    let tiny_fails = tiny.first_passing_horizon.is_none() && tiny.horizons[0].failures > 0;

    let mut hyper = s.clone();
    hyper.field = FieldSpec::LinearProjected {
        matrix: [[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    };
    if let Some(b) = hyper.diagnostics.bunching.as_mut() {
        b.epsilon = Some(1e3);
    }
    let hyper = diagnose_scenario(&hyper).map_err(err)?.bunching.ok_or("no report")?;
    let hyper_fails = hyper.horizons[0].failures > 0;
    Ok((
        main_ok && tiny_fails && hyper_fails,
        format!(
            "eps 0.1 tau 1: {}/50 fail; tau 1e-3: {}/50 fail; hyperbolic eps 1e3: {}/50 fail",
            h.failures, tiny.horizons[0].failures, hyper.horizons[0].failures
        ),
    ))
}

fn underactuated() -> Verdict {
    let s = load("underactuated")?;
    let out = simulate_scenario(&s).map_err(err)?;
    let delta = 0.05;
    let meridian = &out.runs[0];
    let (lo, hi) = meridian
        .states
        .iter()
        .map(|r| sphere_residual(r))
        .fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    let covers = meridian.times.first() == Some(&0.0) && meridian.times.last() == Some(&20.0);
    let pole_final = out
        .runs
        .get(1)
        .map_or(f64::NAN, |r| sphere_residual(r.states.last().expect("states")));
    Ok((
        lo > 0.9 * delta && covers,
        format!(
            "meridian start: residual in [{lo:.6}, {hi:.6}] on [0, 20] (> {:.3}); pole start ends at {pole_final:.1e}",
            0.9 * delta
        ),
    ))
}

fn random_tangent<M: Manifold>(m: &M, q: &M::Point, mut u: impl FnMut() -> f64) -> M::Point {
    m.frame(q)
        .iter()
        .fold(M::Point::zero(), |acc, e| acc + *e * (4.0 * u() - 2.0))
}

/// Returns (realization error, distance to the normal-equation solution).
fn pseudoinverse_case<M: Manifold>(
    cfg: &naim_core::FeedbackConfig<M>,
    seed: u64,
    extra: usize,
) -> Result<(f64, f64), String> {
    let m = cfg.manifold();
    let mut rng = seeded(seed);
    let q = m.sample_point(&mut rng);
    let v = random_tangent(m, &q, || unit_interval(&mut rng));
    let target = koditschek_desired_accel(cfg, &TangentState { q, v }).vec;
    let frame = m.frame(&q);
    let n = frame.len();
    let (cols, f) = loop {
        let cols: Vec<M::Point> = (0..n + extra)
            .map(|_| random_tangent(m, &q, || unit_interval(&mut rng)))
            .collect();
        let f = DMatrix::from_fn(n, cols.len(), |i, j| m.metric(&q, &frame[i], &cols[j]));
        let sv = f.singular_values();
        if sv.max() <= 1e3 * sv.min() {
            break (cols, f);
        }
    };
    let tangents: Vec<_> = cols.iter().map(|c| Tangent { base: q, vec: *c }).collect();
    let u = pseudoinverse_feedback(m, &tangents, &Tangent { base: q, vec: target }).map_err(err)?;
    let realized = u.combine(&cols);
    let realization = m.norm(&q, &(realized - target));
    let t = DVector::from_fn(n, |i, _| m.metric(&q, &frame[i], &target));
    // Normal equations u = Fᵀ(FFᵀ)⁻¹t, with one round of iterative
    // refinement since squaring F squares its condition number.
    let lu = (&f * f.transpose()).lu();
    let solve = |r: &DVector<f64>| lu.solve(r).map(|z| f.transpose() * z).ok_or("singular Gram matrix");
    let mut brute = solve(&t)?;
    brute += solve(&(&t - &f * &brute))?;
    let coeff = u
        .coeffs
        .iter()
        .zip(brute.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((realization, coeff))
}

fn pseudoinverse() -> Verdict {
    let mut s2 = load("fig1")?;
    s2.actuation = ActuationSpec::FullyActuated;
    let s2 = s2.prepare::<Sphere>().map_err(err)?.configs.remove(0);
    let mut so3 = load("so3_covariant_oracle")?;
    so3.actuation = ActuationSpec::FullyActuated;
    so3.open_loop_controls = None;
    so3.diagnostics = DiagnosticsSpec::default();
    let so3 = so3.prepare::<RotationGroup>().map_err(err)?.configs.remove(0);
    let (mut real, mut coeff) = (0.0f64, 0.0f64);
    for i in 0..1000u64 {
        let (a, b) = pseudoinverse_case(&s2, i, (i % 3) as usize)?;
        let (c, d) = pseudoinverse_case(&so3, 10_000 + i, (i % 3) as usize)?;
        real = real.max(a).max(c);
        coeff = coeff.max(b).max(d);
    }
    Ok((
        real < 1e-10 && coeff < 1e-9,
        format!("1000 sets each on S² and SO(3): |F(u) - G| <= {real:.1e} (< 1e-10), coefficients within {coeff:.1e} (< 1e-9)"),
    ))
}

fn integrator_order() -> Verdict {
    let mut s = load("fig1")?;
    s.initial_conditions.truncate(1);
    s.t_final = 5.0;
    s.record_every = 1_000_000;
    s.diagnostics = DiagnosticsSpec::default();
    let final_state = |dt: f64| -> Result<Vec<f64>, String> {
        let mut s = s.clone();
        s.dt = dt;
        let out = simulate_scenario(&s).map_err(err)?;
        Ok(out.runs[0].states.last().cloned().unwrap_or_default())
    };
    let reference = final_state(0.04 / 32.0)?;
    let dist = |a: &[f64]| {
        a.iter()
            .zip(&reference)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let coarse = dist(&final_state(0.04)?);
    let fine = dist(&final_state(0.02)?);
    let ratio = coarse / fine;
    Ok((
        (12.0..=20.0).contains(&ratio),
        format!("errors {coarse:.3e} (dt 0.04) and {fine:.3e} (dt 0.02), ratio {ratio:.2} (in [12, 20])"),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("exact residual decay", exact_decay),
        ("metric sandwich", sandwich),
        ("asymptotic phase", phase),
        ("graph invariance", invariance),
        ("SO(3) against Euler's equations", so3_oracle),
        ("bunching certificates", bunching),
        ("underactuated obstruction", underactuated),
        ("pseudoinverse exactness", pseudoinverse),
        ("integrator order", integrator_order),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "[{}] {name}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
