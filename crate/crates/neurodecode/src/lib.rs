//! File formats, experiment protocols and the `neurodecode` command line
//! on top of [`neurodecode_core`].

pub mod cli;
pub mod config;
mod error;
pub mod experiment;
pub mod io;

pub use error::{Error, Result};
pub use neurodecode_core as core;
