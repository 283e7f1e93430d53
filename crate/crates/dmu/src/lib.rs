//! Files, the threaded training pipeline and the `dmu` command line on top
//! of `dmu-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod stream;
pub mod train;

pub use error::{Error, Result};
