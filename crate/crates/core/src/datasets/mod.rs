//! Configuration, persistence and orchestration of the full pipeline.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod tensor;

pub use config::PipelineConfig;
pub use tensor::TensorFile;
