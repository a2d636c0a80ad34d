//! Command-line front end for the `popowicz` crate: scenario configs, the
//! builtin scenario library, run artifacts, plots and verification suites.

pub mod config;
pub mod error;
pub mod lp_report;
pub mod picard_run;
pub mod plots;
pub mod run;
pub mod scenarios;
pub mod verify;

pub use error::{CliError, CliResult};
