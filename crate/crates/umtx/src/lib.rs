//! IO, pipeline orchestration and the `umtx` command line on top of
//! [`umtx_core`].

pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
