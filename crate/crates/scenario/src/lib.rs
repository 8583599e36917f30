//! Scenario files, batch runs, CSV/JSON output and the `naim` command line
//! on top of `naim-core`.

pub mod bundled;
pub mod error;
pub mod output;
pub mod run;
pub mod scenario;

pub use bundled::{bundled, bundled_names};
pub use error::ScenarioError;
pub use run::{diagnose_scenario, simulate_scenario, sweep_scenario, RunError};
pub use scenario::Scenario;
