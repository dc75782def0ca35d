//! File formats, experiment pipeline and command-line plumbing around
//! `imre-core`.
//!
//! * [`container`]: the `IMO1` matrix container for operators, potentials
//!   and recordings.
//! * [`checkpoint`]: the `IMP1` parameter checkpoint for generator models.
//! * [`som_file`]: the `ISM1` map file and the cluster summary CSV.
//! * [`manifest`]: the JSONL pair manifest.
//! * [`config`]: the flat `key = value` experiment configuration.
//! * [`pipeline`]: forge, train-gen, train-som, simulate, invert and
//!   evaluate stages plus [`pipeline::run_all`].

pub mod checkpoint;
pub mod config;
pub mod container;
mod error;
pub mod manifest;
pub mod pipeline;
pub mod som_file;
mod wire;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use pipeline::{run_all, run_stage, RunReport, Stage};
