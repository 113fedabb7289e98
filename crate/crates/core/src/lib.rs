//! Verifies reported vulnerable versions against a project's repository
//! history and analyses the resulting error rates.

pub mod analysis;
pub mod error;
pub mod mining;
pub mod model;
pub mod stats;
pub mod synth;
pub mod vcs;
pub mod vdm;

pub use error::{Error, ErrorKind, Result};
