use std::fs;

use naim_core::geometry::RotationGroup;
use naim_scenario::output::{verify_manifest, write_simulation, write_sweep};
use naim_scenario::run::{body_omega, simulate_scenario, sweep_scenario, RunError};
use naim_scenario::scenario::{DiagnosticsSpec, Epsilon, InitialCondition, ManifoldSpec, Scenario};
use naim_scenario::{bundled, bundled_names};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

#[test]
fn principal_axis_spin_stays_constant() {
    let s = bundled("so3_jets").expect("bundled");
    let out = simulate_scenario(&s).expect("simulate");
    assert_eq!(out.dimension, 9);
    let body = RotationGroup::new(Vector3::new(1.0, 2.0, 3.0)).expect("inertia");
    let run = &out.runs[0];
    for (t, row) in run.times.iter().zip(&run.states) {
        let omega = body_omega(&body, row).expect("flat state");
        assert!((omega - Vector3::x()).norm() < 1e-10, "t = {t}: {omega:?}");
        let (c, sn) = (t.cos(), t.sin());
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -sn, 0.0, sn, c);
        let r = Matrix3::from_row_slice(&row[..9]);
        assert!((r - expected).norm() < 1e-9, "t = {t}");
    }
}

#[test]
fn sweep_rates_are_one_over_epsilon() {
    let s = bundled("sweep_demo").expect("bundled");
    let out = sweep_scenario(&s, None).expect("sweep");
    assert_eq!(out.rows.len(), 3);
    for (row, expected) in out.rows.iter().zip([2.0, 1.0 / 1.2, 0.5]) {
        let rate = row.fitted_norm_rate_mean.expect("rate");
        assert!((rate / expected - 1.0).abs() < 0.01, "eps {}: {rate}", row.epsilon);
        assert_eq!(row.runs, 3);
        assert_eq!(row.certificate_pass, Some(true));
    }
    // Weaker contraction needs a longer horizon before the certificate holds.
    let horizons: Vec<f64> = out
        .rows
        .iter()
        .map(|r| r.first_passing_horizon.expect("passes"))
        .collect();
    assert!(horizons.windows(2).all(|w| w[0] <= w[1]), "{horizons:?}");
}

#[test]
fn single_epsilon_sweep_matches_simulate() {
    let mut s = bundled("fig1").expect("bundled");
    s.diagnostics = DiagnosticsSpec::default();
    let sweep = sweep_scenario(&s, Some(&[1.2])).expect("sweep");
    let sim = simulate_scenario(&s).expect("simulate");
    let rates: Vec<f64> = sim.runs.iter().filter_map(|r| r.summary.fitted_norm_rate).collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert_eq!(sweep.rows.len(), 1);
    assert_eq!(sweep.rows[0].fitted_norm_rate_mean, Some(mean));
}

#[test]
fn empty_sweep_is_rejected() {
    let s = bundled("sweep_demo").expect("bundled");
    assert!(matches!(sweep_scenario(&s, Some(&[])), Err(RunError::Scenario(_))));
}

#[test]
fn outputs_are_deterministic_and_checksummed() {
    let s = bundled("fig1").expect("bundled");
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let ma = write_simulation(a.path(), &s, &simulate_scenario(&s).expect("simulate")).expect("write");
    let mb = write_simulation(b.path(), &s, &simulate_scenario(&s).expect("simulate")).expect("write");
    assert_eq!(ma.artifacts, mb.artifacts);
    for art in &ma.artifacts {
        let x = fs::read(a.path().join(&art.path)).expect("read");
        let y = fs::read(b.path().join(&art.path)).expect("read");
        assert_eq!(x, y, "{}", art.path);
        if let Some(rows) = art.rows {
            let text = String::from_utf8(x).expect("utf8");
            assert_eq!(text.lines().count(), rows + 1, "{}", art.path);
            let width = art.columns.as_ref().expect("columns").len();
            assert!(text.lines().all(|l| l.split(',').count() == width), "{}", art.path);
        }
    }
    assert!(verify_manifest(a.path()).expect("verify").is_empty());
    let traj: Vec<_> = ma.artifacts.iter().filter(|x| x.path.starts_with("traj_")).collect();
    let refs: Vec<_> = ma
        .artifacts
        .iter()
        .filter(|x| x.path.starts_with("reference_"))
        .collect();
    assert_eq!((traj.len(), refs.len()), (6, 6));

    // Tampering is detected.
    fs::write(a.path().join("traj_03.csv"), "t\n").expect("write");
    assert_eq!(
        verify_manifest(a.path()).expect("verify"),
        vec!["traj_03.csv".to_string()]
    );
}

#[test]
fn sweep_output_has_one_row_per_epsilon() {
    let s = bundled("sweep_demo").expect("bundled");
    let dir = tempfile::tempdir().expect("tempdir");
    let out = sweep_scenario(&s, Some(&[0.7, 1.4])).expect("sweep");
    write_sweep(dir.path(), &s, &out).expect("write");
    let text = fs::read_to_string(dir.path().join("sweep.csv")).expect("read");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("epsilon,runs,fitted_norm_rate_mean"));
    assert!(lines[1].starts_with("0.7,3,"));
    assert!(verify_manifest(dir.path()).expect("verify").is_empty());
}

#[test]
fn numeric_failures_carry_the_time() {
    let mut s = bundled("fig1").expect("bundled");
    s.initial_conditions = vec![InitialCondition {
        q: vec![1.0, 0.0, 0.0],
        v: Some(vec![0.0, 40.0, 0.0]),
        omega: None,
        on_graph: false,
    }];
    s.dt = 0.1;
    s.diagnostics = DiagnosticsSpec::default();
    let e = simulate_scenario(&s).expect_err("the step is far too large");
    assert!(matches!(e, RunError::Numeric { .. }));
    let msg = e.to_string();
    assert!(msg.contains("at t = "), "{msg}");
}

#[test]
fn bundled_scenarios_cover_both_manifolds() {
    let kinds: Vec<bool> = bundled_names()
        .map(|n| matches!(bundled(n).expect("bundled").manifold, ManifoldSpec::Sphere))
        .collect();
    assert_eq!(kinds.len(), 5);
    assert!(kinds.contains(&true) && kinds.contains(&false));
}

fn unit(v: [f64; 3]) -> Vec<f64> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.iter().map(|x| x / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenarios_round_trip(
        eps in prop::collection::vec(0.01f64..100.0, 1..4),
        t_final in 0.1f64..50.0,
        record_every in 1usize..100,
        seed in any::<u64>(),
        q in prop::array::uniform3(-1.0f64..1.0).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 0.01),
        on_graph in any::<bool>(),
    ) {
        let mut s: Scenario = bundled("fig1").expect("bundled");
        s.epsilon = if eps.len() == 1 { Epsilon::Single(eps[0]) } else { Epsilon::List(eps) };
        s.t_final = t_final;
        s.record_every = record_every;
        s.seed = seed;
        s.initial_conditions = vec![InitialCondition {
            q: unit(q),
            v: (!on_graph).then(|| vec![0.0; 3]),
            omega: None,
            on_graph,
        }];
        let text = s.to_json();
        let back = Scenario::from_json(&text).expect("reparse");
        prop_assert_eq!(back, s);
    }
}
