//! Operator-facing layer over [`debias_core`]: dataset and model files,
//! prompt template/bank loading, the remote generation backend, flat
//! key=value configuration, JSON-line logging, a CLI, and a small HTTP
//! service.
//!
//! All algorithmic behavior lives in `debias-core`; this crate only adds
//! IO, wiring, and the process entry points.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod defaults;
pub mod logging;
pub mod model_file;
pub mod remote;
pub mod server;
pub mod setup;
pub mod template;
