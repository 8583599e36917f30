use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use naim_scenario::output::{write_diagnostics, write_simulation, write_sweep};
use naim_scenario::{bundled, bundled_names, RunError, Scenario, ScenarioError};

const EXIT_PARSE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_STRICT: u8 = 4;

/// Koditschek feedback on S² and SO(3): simulate scenarios, sweep the gain
/// and run the invariant-manifold diagnostics.
#[derive(Parser)]
#[command(name = "naim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every initial condition and write trajectories.
    Simulate {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long, env = "NAIM_OUT_DIR", default_value = "naim-out")]
        out: PathBuf,
    },
    /// Repeat the closed-loop runs and certificates for several gains.
    Sweep {
        scenario: String,
        /// Comma-separated gains; defaults to the scenario's own list.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        eps: Option<Vec<f64>>,
        #[arg(long, env = "NAIM_OUT_DIR", default_value = "naim-out")]
        out: PathBuf,
    },
    /// Run the diagnostics requested by the scenario.
    Diagnose {
        scenario: String,
        /// Exit with status 4 if any check fails.
        #[arg(long)]
        strict: bool,
        #[arg(long, env = "NAIM_OUT_DIR", default_value = "naim-out")]
        out: PathBuf,
    },
    /// Print the names of the bundled scenarios.
    ListScenarios,
}

enum Failure {
    Parse(String),
    Runtime(String),
    Strict(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Parse(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(s) => s.into(),
            e @ RunError::Numeric { .. } => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(format!("{e:#}"))
    }
}

fn load(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::from_path(path).map_err(|e| Failure::Parse(format!("{arg}: {e}")));
    }
    bundled(arg).map_err(|e| match e {
        ScenarioError::UnknownBundled(_) => Failure::Parse(format!(
            "{arg} is neither a file nor a bundled scenario ({})",
            bundled_names().collect::<Vec<_>>().join(", ")
        )),
        other => other.into(),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ListScenarios => {
            for name in bundled_names() {
                let s = bundled(name)?;
                println!("{name}\t{}", s.description.unwrap_or_default());
            }
        }
        Command::Simulate { scenario, out } => {
            let s = load(&scenario)?;
            let result = naim_scenario::simulate_scenario(&s)?;
            let m = write_simulation(&out, &s, &result)?;
            for r in &result.runs {
                let rate = r
                    .summary
                    .fitted_norm_rate
                    .map_or("-".to_string(), |x| format!("{x:.6}"));
                println!(
                    "run {:02}  ic {}  |y0| {:.4e}  |y(T)| {:.4e}  norm rate {rate}",
                    r.summary.index,
                    r.summary.initial_condition,
                    r.summary.residual_norm_initial,
                    r.summary.residual_norm_final
                );
            }
            eprintln!("wrote {} files to {}", m.artifacts.len() + 1, out.display());
        }
        Command::Sweep { scenario, eps, out } => {
            let s = load(&scenario)?;
            let result = naim_scenario::sweep_scenario(&s, eps.as_deref())?;
            let m = write_sweep(&out, &s, &result)?;
            for r in &result.rows {
                let rate = r.fitted_norm_rate_mean.map_or("-".to_string(), |x| format!("{x:.6}"));
                let tau = r.first_passing_horizon.map_or("-".to_string(), |x| x.to_string());
                println!(
                    "eps {}  norm rate {rate}  (1/eps range {:.6}..{:.6})  certified at tau {tau}",
                    r.epsilon, r.predicted_norm_rate_low, r.predicted_norm_rate_high
                );
            }
            eprintln!("wrote {} files to {}", m.artifacts.len() + 1, out.display());
        }
        Command::Diagnose { scenario, strict, out } => {
            let s = load(&scenario)?;
            let result = naim_scenario::diagnose_scenario(&s)?;
            let m = write_diagnostics(&out, &s, &result)?;
            if let Some(b) = &result.bunching {
                for h in &b.horizons {
                    println!(
                        "certificate eps {} tau {}: {} of {} base points fail",
                        b.epsilon, h.tau, h.failures, b.n_base
                    );
                }
            }
            for f in &result.failures {
                println!("FAIL {f}");
            }
            println!(
                "{}",
                if result.passed {
                    "all diagnostics passed"
                } else {
                    "some diagnostics failed"
                }
            );
            eprintln!("wrote {} files to {}", m.artifacts.len() + 1, out.display());
            if strict && !result.passed {
                return Err(Failure::Strict(format!(
                    "{} diagnostic(s) failed",
                    result.failures.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PARSE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Strict(msg)) => {
            eprintln!("strict: {msg}");
            ExitCode::from(EXIT_STRICT)
        }
    }
}
