//! Text format, command-line driver and benchmark harness for the soac
//! solvers.

pub mod commands;
pub mod format;
pub mod sources;

pub use commands::{run, Cli, CliError, Command};
pub use format::{
    parse_document, parse_instance, parse_layout, serialize_document, serialize_instance, Document, LayoutSpec,
    ParseError,
};
