//! Files, worker pools and the `robust-scatter` command-line tool built on
//! [`robust_scatter_core`].
//!
//! Input is a headered numeric CSV file, standardized column-wise by default.
//! Every subcommand writes JSON and CSV artifacts into `--out-dir`; failures
//! are reported on stderr as a single JSON object.

pub mod cli;
pub mod error;
pub mod exec;
pub mod io;
pub mod report;

pub use error::{CliError, Result};
pub use exec::RayonExec;
pub use robust_scatter_core;
