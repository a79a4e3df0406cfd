//! File formats, configuration and pipeline stages behind the `latentwarn`
//! command.

pub mod config;
pub mod io;
pub mod pipeline;

pub use config::PipelineConfig;
pub use pipeline::Run;
