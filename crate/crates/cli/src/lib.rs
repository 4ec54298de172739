//! Estimation, model selection and matrix transforms for block
//! correlation structures defined by hierarchical asset groups.

pub mod commands;
pub mod error;
pub mod groups;
pub mod panel;
pub mod report;

pub use error::{exit, CliError, CliResult};
