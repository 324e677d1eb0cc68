//! Command-line front end: data generation and splitting, training,
//! prediction, evaluation, tuning, model files and the synthetic PUAL vs
//! GLLC comparison.

pub mod commands;
pub mod envelope;
pub mod error;
pub mod table1;

pub use commands::{run, Cli};
pub use error::CliError;
