//! Pipeline orchestration for the `forge` command: configuration, input
//! acquisition, staged processing and the boundary tuning service.

pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod tuner;

pub use config::{BackendConfig, ConfigError, Locator, PipelineConfig, SourceSpec};
pub use pipeline::{run_pipeline, RunOptions, RunReport, Stage, StageResult};
