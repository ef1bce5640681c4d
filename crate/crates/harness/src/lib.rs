//! Command-line interface, CSV ingestion and seeded experiment presets for
//! the `invariant-transfer` library.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;

pub use cli::cli_main;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentName, ExperimentOutput, PipelineOptions};
pub use io::{csv_string, load_csv, parse_csv, write_atomic, write_csv};
pub use report::{Record, Report, SummaryRow};
