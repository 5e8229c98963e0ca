//! Model files, CSV tables and the `riskconv` command implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod example;
pub mod model_file;
pub mod table;

pub use error::{exit, CliError, Result};
