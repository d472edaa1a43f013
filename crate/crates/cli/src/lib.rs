//! Library surface of the command-line front end: configuration schema,
//! checkpoint format, and the command implementations, exposed for
//! integration tests and for embedding the pipeline in other tools.

pub mod checkpoint;
pub mod commands;
pub mod config;
