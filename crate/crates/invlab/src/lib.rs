//! Parameter sweeps over the viscosity for the invlab solvers: configuration,
//! run planning, snapshot persistence, per-run and cross-run analysis, and
//! the report bundle.

pub mod analysis;
pub mod bundle;
pub mod config;
pub mod error;
pub mod execute;
pub mod plan;
pub mod report;
pub mod snapshot;
pub mod sweep;
pub mod validate;

pub use config::{Config, ConfigError};
pub use error::{InvlabError, Result};
pub use plan::{plan_sweep, RunPlan, SweepPlan};
pub use snapshot::{inspect_header, load_snapshot, persist_snapshot, Snapshot, SnapshotError, SnapshotHeader};
pub use sweep::{analyze_stored, run_sweep, ExecOptions, SweepOutcome};
