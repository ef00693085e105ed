//! Command-line front end and HTTP service for `snipsearch`.

pub mod commands;
pub mod error;
pub mod server;

pub use error::CliError;
