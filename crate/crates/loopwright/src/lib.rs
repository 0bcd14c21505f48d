//! Persistence, model gateway, pipeline driver, experiments and the
//! annotation HTTP service on top of `loopwright-core`.

pub mod bundle;
pub mod clock;
pub mod config;
pub mod dataset;
pub mod eventlog;
pub mod experiment;
pub mod gateway;
pub mod jsonl;
pub mod orchestrate;
pub mod pipeline;
pub mod project;
pub mod report;
pub mod service;
pub mod state;

pub use loopwright_core as core;
