//! Config-driven scenario runs: every (eps, P) pair goes through solve,
//! stationary density, measures, estimates and optionally the simulation,
//! and the results land in CSV files plus a JSON manifest.

pub mod checks;
pub mod config;
pub mod records;
pub mod runner;
pub mod scenarios;

pub use checks::Check;
pub use config::{ResolvedRun, RunConfig, SolverOverrides};
pub use records::Row;
pub use runner::{
    check_manifest, run_resolved, run_scenario, ManifestCheck, RunManifest, RunOutcome, EXIT_CHECK_FAILED, EXIT_CONFIG,
    EXIT_OK, EXIT_SOLVER_FAILED, WORKERS_ENV,
};
pub use scenarios::{catalog, list_scenarios, Scenario, ScenarioEntry, SdeSettings, Traits};
