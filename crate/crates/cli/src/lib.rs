//! Library side of the `vrcert` command-line tool: config ingestion and the
//! `simulate`, `certify` and `compare` commands.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_certify, cmd_compare, cmd_simulate, Overrides};
pub use config::{load_config, parse_config, RunConfig};
pub use error::{exit, CliError};
