//! File formats, run configuration and commands for `bowley-core`.
//!
//! The `bowley` binary is a thin wrapper over [`run`]; everything it does is
//! reachable from here too, which is how the integration tests drive it.

pub mod config;
pub mod error;
pub mod files;
pub mod report;
pub mod run;

pub use error::{Error, Result};
