//! Dataset IO, checkpoints, run configuration and the experiment pipeline
//! around [`cagp_core`].

pub mod artifacts;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, Result};
