//! CSV and JSON artifacts plus a checksummed manifest.
//!
//! Trajectory files have columns `t,q1..qN,v1..vN` with `q` and `v` in
//! row-major ambient coordinates (`N = 3` on `S²`, `N = 9` on `SO(3)`).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::run::{BunchingSummary, DiagnosticsOutput, SimulationOutput, SweepOutput};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    /// Data rows, for CSV files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub command: String,
    pub seed: u64,
    pub generator: String,
    pub elapsed_seconds: f64,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
#[serde(untagged)]
enum Cell {
    F(f64),
    U(usize),
    B(bool),
    Opt(Option<f64>),
    OptB(Option<bool>),
}

struct OutDir {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            artifacts: vec![],
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8], rows: Option<usize>, columns: Option<Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            rows,
            columns,
        });
        Ok(())
    }

    fn csv(&mut self, name: &str, header: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for r in &rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        self.put(name, &bytes, Some(rows.len()), Some(header))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(name, &bytes, None, None)
    }

    fn finish(self, scenario: &Scenario, command: &str, elapsed_seconds: f64) -> Result<Manifest> {
        let manifest = Manifest {
            scenario: scenario.name.clone(),
            command: command.to_string(),
            seed: scenario.seed,
            generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            elapsed_seconds,
            artifacts: self.artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn state_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(names("q", n));
    h.extend(names("v", n));
    h
}

fn float_row(t: f64, values: &[f64]) -> Vec<Cell> {
    std::iter::once(Cell::F(t))
        .chain(values.iter().map(|&x| Cell::F(x)))
        .collect()
}

#[derive(Serialize)]
struct RunEntry<'a> {
    #[serde(flatten)]
    summary: &'a crate::run::RunSummary,
    trajectory: String,
    reference: String,
    residual: String,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    scenario: &'a str,
    dimension: usize,
    runs: Vec<RunEntry<'a>>,
}

/// Write `traj_XX.csv`, `reference_XX.csv`, `residual_XX.csv`,
/// `summary.json`, a copy of the scenario and the manifest.
pub fn write_simulation(dir: &Path, scenario: &Scenario, out: &SimulationOutput) -> Result<Manifest> {
    let mut d = OutDir::create(dir)?;
    d.put(
        "scenario.json",
        format!("{}\n", scenario.to_json()).as_bytes(),
        None,
        None,
    )?;
    let n = out.dimension;
    let mut entries = Vec::new();
    for run in &out.runs {
        let i = run.summary.index;
        let traj = format!("traj_{i:02}.csv");
        let reference = format!("reference_{i:02}.csv");
        let residual = format!("residual_{i:02}.csv");
        let rows = run
            .times
            .iter()
            .zip(&run.states)
            .map(|(&t, s)| float_row(t, s))
            .collect();
        d.csv(&traj, state_header(n), rows)?;
        let mut ref_header = vec!["t".to_string()];
        ref_header.extend(names("q", n));
        let rows = run
            .times
            .iter()
            .zip(&run.reference)
            .map(|(&t, q)| float_row(t, q))
            .collect();
        d.csv(&reference, ref_header, rows)?;
        let rows = run
            .times
            .iter()
            .zip(&run.residual_norm_sq)
            .map(|(&t, &g)| vec![Cell::F(t), Cell::F(g)])
            .collect();
        d.csv(&residual, vec!["t".into(), "res_norm_sq".into()], rows)?;
        entries.push(RunEntry {
            summary: &run.summary,
            trajectory: traj,
            reference,
            residual,
        });
    }
    d.json(
        "summary.json",
        &SimulationSummary {
            scenario: &out.scenario,
            dimension: n,
            runs: entries,
        },
    )?;
    d.finish(scenario, "simulate", out.elapsed_seconds)
}

fn certificate_csv(d: &mut OutDir, name: &str, certs: &[&BunchingSummary]) -> Result<()> {
    let n = certs
        .iter()
        .flat_map(|c| c.rows.first())
        .map(|r| r.q.len())
        .next()
        .unwrap_or(0);
    let mut header: Vec<String> = vec!["epsilon".into(), "tau".into(), "base".into()];
    header.extend(names("q", n));
    header.extend(
        [
            "tangent_norm",
            "tangent_conorm",
            "normal_norm",
            "min_naim_margin",
            "min_bunching_margin",
            "passes",
        ]
        .map(String::from),
    );
    let mut rows = Vec::new();
    for c in certs {
        for r in &c.rows {
            let mut row = vec![Cell::F(c.epsilon), Cell::F(r.tau), Cell::U(r.base)];
            row.extend(r.q.iter().map(|&x| Cell::F(x)));
            row.extend([
                Cell::F(r.tangent_norm),
                Cell::F(r.tangent_conorm),
                Cell::F(r.normal_norm),
                Cell::F(r.min_naim_margin),
                Cell::F(r.min_bunching_margin),
                Cell::B(r.passes),
            ]);
            rows.push(row);
        }
    }
    d.csv(name, header, rows)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    scenario: &'a str,
    metric_bounds: crate::run::BoundsSummary,
    rows: &'a [crate::run::SweepRow],
    certificates: &'a [BunchingSummary],
}

/// Write `sweep.csv`, `certificates.csv` (when certificates ran),
/// `summary.json` and the manifest.
pub fn write_sweep(dir: &Path, scenario: &Scenario, out: &SweepOutput) -> Result<Manifest> {
    let mut d = OutDir::create(dir)?;
    d.put(
        "scenario.json",
        format!("{}\n", scenario.to_json()).as_bytes(),
        None,
        None,
    )?;
    let header = [
        "epsilon",
        "runs",
        "fitted_norm_rate_mean",
        "fitted_norm_rate_min",
        "fitted_norm_rate_max",
        "predicted_norm_rate_low",
        "predicted_norm_rate_high",
        "certificate_pass",
        "first_passing_horizon",
    ]
    .map(String::from)
    .to_vec();
    let rows = out
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::F(r.epsilon),
                Cell::U(r.runs),
                Cell::Opt(r.fitted_norm_rate_mean),
                Cell::Opt(r.fitted_norm_rate_min),
                Cell::Opt(r.fitted_norm_rate_max),
                Cell::F(r.predicted_norm_rate_low),
                Cell::F(r.predicted_norm_rate_high),
                Cell::OptB(r.certificate_pass),
                Cell::Opt(r.first_passing_horizon),
            ]
        })
        .collect();
    d.csv("sweep.csv", header, rows)?;
    if !out.certificates.is_empty() {
        let certs: Vec<&BunchingSummary> = out.certificates.iter().collect();
        certificate_csv(&mut d, "certificates.csv", &certs)?;
    }
    d.json(
        "summary.json",
        &SweepSummary {
            scenario: &out.scenario,
            metric_bounds: out.bounds,
            rows: &out.rows,
            certificates: &out.certificates,
        },
    )?;
    d.finish(scenario, "sweep", out.elapsed_seconds)
}

/// Write `diagnostics.json`, `phase_XX.csv`, `certificates.csv` and the
/// manifest.
pub fn write_diagnostics(dir: &Path, scenario: &Scenario, out: &DiagnosticsOutput) -> Result<Manifest> {
    let mut d = OutDir::create(dir)?;
    d.put(
        "scenario.json",
        format!("{}\n", scenario.to_json()).as_bytes(),
        None,
        None,
    )?;
    for r in &out.runs {
        if let Some(p) = &r.phase {
            let rows = p
                .times
                .iter()
                .zip(&p.distances)
                .map(|(&t, &x)| vec![Cell::F(t), Cell::F(x)])
                .collect();
            d.csv(
                &format!("phase_{:02}.csv", r.index),
                vec!["t".into(), "distance".into()],
                rows,
            )?;
        }
    }
    if let Some(b) = &out.bunching {
        certificate_csv(&mut d, "certificates.csv", &[b])?;
    }
    d.json("diagnostics.json", out)?;
    d.finish(scenario, "diagnose", out.elapsed_seconds)
}

/// Recompute every checksum listed in `dir/manifest.json`; returns the
/// paths whose contents no longer match.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("manifest.json")).context("reading manifest.json")?;
    let m: Manifest = serde_json::from_str(&text).context("parsing manifest.json")?;
    let mut bad = Vec::new();
    for a in &m.artifacts {
        let bytes = fs::read(dir.join(&a.path)).with_context(|| format!("reading {}", a.path))?;
        if sha256_hex(&bytes) != a.sha256 {
            bad.push(a.path.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn cells_render_as_plain_fields() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(vec![
            Cell::F(0.5),
            Cell::U(3),
            Cell::B(true),
            Cell::Opt(None),
            Cell::OptB(Some(false)),
        ])
        .expect("row");
        let text = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        assert_eq!(text, "0.5,3,true,,false\n");
    }
}
