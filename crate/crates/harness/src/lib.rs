//! Experiment harness: parameter sweeps over Monte-Carlo channel draws,
//! CSV output, and the oracle checks used by `fdirs selftest` and the
//! acceptance suite.
//!
//! * [`config`] parses experiment files.
//! * [`experiment`] runs sweeps on a worker pool.
//! * [`records`] writes and reads the result CSVs.
//! * [`oracles`] holds independent checks of the solver building blocks.
//! * [`selftest`] bundles a fast subset of them.

pub mod config;
pub mod error;
pub mod experiment;
pub mod oracles;
pub mod records;
pub mod selftest;

pub use config::{ConfigFile, ExperimentKind, ExperimentSpec, Scenario, SchemeSpec};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, summarize, SummaryRow};
pub use records::{read_records, write_records, SweepRecord};
