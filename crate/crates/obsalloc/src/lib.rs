//! File formats, parallel drivers, experiment harness and the command-line
//! front end for [`obsalloc_core`].

pub mod cli;
pub mod error;
pub mod formats;
pub mod harness;
pub mod manifest;
pub mod parallel;

pub use error::CliError;
pub use obsalloc_core as core;
