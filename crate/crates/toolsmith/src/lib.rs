//! Orchestration for the toolsmith pipeline: configuration, model backend
//! clients, mesh generators and the end-to-end run.

pub mod cli;
pub mod config;
pub mod generate;
pub mod phase;
pub mod pipeline;
pub mod wire;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, Backends, PipelineFailure, PipelineRunRecord, TaskKind};
