//! Library surface behind the `cbu` binary: configuration resolution and
//! the subcommand operations, exposed so integration tests can drive runs
//! in-process.

pub mod config;
pub mod error;
pub mod ops;

pub use config::{resolve, BackendSpec, Overrides, ResolvedConfig};
pub use error::CliError;
