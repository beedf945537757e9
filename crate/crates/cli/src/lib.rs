//! Pipeline orchestration, CLI and alignment service.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod server;

pub use config::{GradeSpec, Outputs, PipelineConfig};
pub use error::AppError;
pub use pipeline::{finalize, prepare, run_pipeline, Artifacts, Prepared, RunSummary};
